//! Variational autoencoder for controlled minority-class augmentation.
//!
//! The encoder is a Conv1D stack over the feature axis (each row treated as
//! a length-d, single-channel signal) feeding dense mean / log-variance
//! heads; the decoder is a dense stack with a sigmoid output, so training
//! rows must be scaled to [0, 1]. Training minimizes reconstruction error
//! plus the closed-form Gaussian KL term.

use std::path::Path;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Conv1DLayer, DenseLayer, GradTarget, Padding};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Per-instance diagonal Gaussian over the latent space: `[N x z_dim]`
/// means and log-variances.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDistribution {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl EncodedDistribution {
    pub fn new(mean: Tensor, log_var: Tensor) -> Result<Self> {
        if mean.shape != log_var.shape {
            return Err(Error::Dimension(format!(
                "encoded distribution: mean {:?} vs log_var {:?}",
                mean.shape, log_var.shape
            )));
        }
        if !mean.is_finite() || !log_var.is_finite() {
            return Err(Error::Numeric("encoded distribution: non-finite".into()));
        }
        Ok(Self { mean, log_var })
    }
}

/// Loss decomposition; `total` is exactly `reconstruction + kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

impl ElboBreakdown {
    fn new(reconstruction: f64, kl: f64) -> Self {
        Self {
            reconstruction,
            kl,
            total: reconstruction + kl,
        }
    }
}

/// Batch mean of per-instance summed squared error: `sum((x - x_hat)^2) / N`.
fn reconstruction_term(x: &Tensor, reconstruction: &Tensor) -> Result<f64> {
    if x.shape != reconstruction.shape {
        return Err(Error::Dimension(format!(
            "reconstruction term: {:?} vs {:?}",
            x.shape, reconstruction.shape
        )));
    }
    let n = x.rows() as f64;
    let sum: f64 = x
        .data
        .iter()
        .zip(&reconstruction.data)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Batch mean of the closed-form KL between `N(mu, sigma^2)` and the
/// standard normal: `-1/2 sum_j (1 + log sigma^2_j - mu_j^2 - sigma^2_j)`
/// per instance. Nonnegative for all finite inputs.
pub fn kl_divergence(dist: &EncodedDistribution) -> f64 {
    let n = dist.mean.rows() as f64;
    let mut total = 0.0;
    for (&mu, &lv) in dist.mean.data.iter().zip(&dist.log_var.data) {
        total += -0.5 * (1.0 + lv - mu * mu - lv.exp());
    }
    total / n
}

/// Reconstruction plus KL for a batch.
pub fn elbo_loss(
    x: &Tensor,
    reconstruction: &Tensor,
    dist: &EncodedDistribution,
) -> Result<ElboBreakdown> {
    if x.rows() != dist.mean.rows() {
        return Err(Error::Dimension(format!(
            "elbo: {} rows vs {} encoded instances",
            x.rows(),
            dist.mean.rows()
        )));
    }
    Ok(ElboBreakdown::new(
        reconstruction_term(x, reconstruction)?,
        kl_divergence(dist),
    ))
}

/// `z = mu + exp(log_var / 2) * eps` with `eps` standard normal from the
/// seeded stream.
pub fn reparameterize(dist: &EncodedDistribution, rng: &mut RngStream) -> Tensor {
    let eps = Tensor {
        shape: dist.mean.shape.clone(),
        data: (0..dist.mean.numel()).map(|_| rng.normal()).collect(),
    };
    reparameterize_with(dist, &eps)
}

/// Reparameterization with externally supplied noise.
pub fn reparameterize_with(dist: &EncodedDistribution, eps: &Tensor) -> Tensor {
    debug_assert_eq!(dist.mean.shape, eps.shape);
    let mut z = dist.mean.clone();
    for ((zv, &lv), &e) in z.data.iter_mut().zip(&dist.log_var.data).zip(&eps.data) {
        *zv += (0.5 * lv).exp() * e;
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub z_dim: usize,
    pub conv_channels: (usize, usize),
    pub kernel_len: usize,
    pub stride: usize,
    pub decoder_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Minimum rows a class must have before a generative model is fit.
    pub min_rows: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            z_dim: 4,
            conv_channels: (8, 16),
            kernel_len: 3,
            stride: 2,
            decoder_hidden: 32,
            epochs: 200,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 0,
            min_rows: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    conv1: Conv1DLayer,
    conv2: Conv1DLayer,
    mu_head: DenseLayer,
    log_var_head: DenseLayer,
    dec1: DenseLayer,
    dec2: DenseLayer,
    pub input_dim: usize,
    pub z_dim: usize,
    config: VaeConfig,
    flat_dim: usize,
}

struct VaeForward {
    conv1_out: Tensor,
    conv2_out: Tensor,
    dist: EncodedDistribution,
    x_hat: Tensor,
    breakdown: ElboBreakdown,
}

impl VaeModel {
    fn assemble(input_dim: usize, config: &VaeConfig, mut rng: Option<&mut RngStream>) -> Result<Self> {
        if input_dim == 0 || config.z_dim == 0 {
            return Err(Error::Config("vae: zero dimension".into()));
        }
        let (ch1, ch2) = config.conv_channels;
        if ch1 == 0 || ch2 == 0 || config.kernel_len == 0 || config.stride == 0 {
            return Err(Error::Config("vae: zero conv parameter".into()));
        }
        let l1 = input_dim.div_ceil(config.stride);
        let l2 = l1.div_ceil(config.stride);
        let flat_dim = ch2 * l2;
        let mk_conv = |cin: usize, cout: usize, rng: &mut Option<&mut RngStream>| match rng
            .as_deref_mut()
        {
            Some(r) => Conv1DLayer::new(cin, cout, config.kernel_len, config.stride, Padding::Same, r),
            None => Conv1DLayer::from_params(
                Tensor::zeros(&[cout, cin, config.kernel_len]),
                Tensor::zeros(&[cout]),
                config.stride,
                Padding::Same,
            ),
        };
        let mk_dense = |inp: usize, out: usize, act: Activation, rng: &mut Option<&mut RngStream>| {
            match rng.as_deref_mut() {
                Some(r) => Ok(DenseLayer::new(inp, out, act, r)),
                None => DenseLayer::from_params(
                    Tensor::zeros(&[inp, out]),
                    Tensor::zeros(&[out]),
                    act,
                ),
            }
        };
        Ok(Self {
            conv1: mk_conv(1, ch1, &mut rng)?,
            conv2: mk_conv(ch1, ch2, &mut rng)?,
            mu_head: mk_dense(flat_dim, config.z_dim, Activation::Linear, &mut rng)?,
            log_var_head: mk_dense(flat_dim, config.z_dim, Activation::Linear, &mut rng)?,
            dec1: mk_dense(config.z_dim, config.decoder_hidden, Activation::Relu, &mut rng)?,
            dec2: mk_dense(config.decoder_hidden, input_dim, Activation::Sigmoid, &mut rng)?,
            input_dim,
            z_dim: config.z_dim,
            config: config.clone(),
            flat_dim,
        })
    }

    fn check_rows(&self, rows: &Tensor) -> Result<()> {
        if rows.rank() != 2 || rows.cols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "vae: rows {:?} vs input width {}",
                rows.shape, self.input_dim
            )));
        }
        Ok(())
    }

    /// Per-instance latent Gaussian (deterministic encoder pass).
    pub fn encode(&self, rows: &Tensor) -> Result<EncodedDistribution> {
        self.check_rows(rows)?;
        let n = rows.rows();
        let signal = rows.reshaped(vec![n, 1, self.input_dim])?;
        let c1 = self.conv1.infer(&signal)?.map(|v| v.max(0.0));
        let c2 = self.conv2.infer(&c1)?.map(|v| v.max(0.0));
        let flat = c2.reshaped(vec![n, self.flat_dim])?;
        EncodedDistribution::new(self.mu_head.infer(&flat)?, self.log_var_head.infer(&flat)?)
    }

    /// Decoder pass; outputs lie in (0, 1) via the sigmoid.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        if z.rank() != 2 || z.cols() != self.z_dim {
            return Err(Error::Dimension(format!(
                "vae decode: z {:?} vs z_dim {}",
                z.shape, self.z_dim
            )));
        }
        self.dec2.infer(&self.dec1.infer(z)?)
    }

    /// Caching forward pass with fixed noise; used by training and checks.
    fn run_forward(&mut self, x: &Tensor, eps: &Tensor) -> Result<VaeForward> {
        self.check_rows(x)?;
        let n = x.rows();
        let signal = x.reshaped(vec![n, 1, self.input_dim])?;
        let conv1_out = self.conv1.forward(&signal)?;
        let relu1 = conv1_out.map(|v| v.max(0.0));
        let conv2_out = self.conv2.forward(&relu1)?;
        let relu2 = conv2_out.map(|v| v.max(0.0));
        let flat = relu2.reshaped(vec![n, self.flat_dim])?;
        let mu = self.mu_head.forward(&flat)?;
        let log_var = self.log_var_head.forward(&flat)?;
        let dist = EncodedDistribution::new(mu, log_var)?;
        let z = reparameterize_with(&dist, eps);
        let h = self.dec1.forward(&z)?;
        let x_hat = self.dec2.forward(&h)?;
        let breakdown = elbo_loss(x, &x_hat, &dist)?;
        Ok(VaeForward {
            conv1_out,
            conv2_out,
            dist,
            x_hat,
            breakdown,
        })
    }

    /// Forward + backward with fixed noise; leaves gradients accumulated.
    fn backprop(&mut self, x: &Tensor, eps: &Tensor) -> Result<ElboBreakdown> {
        let state = self.run_forward(x, eps)?;
        let n = x.rows() as f64;
        // d reconstruction / d x_hat = 2 (x_hat - x) / N.
        let d_x_hat = state.x_hat.zip(x, |xh, xv| 2.0 * (xh - xv) / n)?;
        let d_h = self.dec2.backward(&d_x_hat)?;
        let d_z = self.dec1.backward(&d_h)?;
        // Mean head: reparameterization path (dz/dmu = 1) plus KL path mu/N.
        let d_mu = d_z.zip(&state.dist.mean, |dz, mu| dz + mu / n)?;
        // Log-variance head: dz/dlv = eps * exp(lv/2) / 2, KL path (e^lv - 1) / 2N.
        let mut d_lv = Tensor::zeros(&state.dist.log_var.shape);
        for i in 0..d_lv.data.len() {
            let lv = state.dist.log_var.data[i];
            d_lv.data[i] =
                d_z.data[i] * 0.5 * (0.5 * lv).exp() * eps.data[i] + (lv.exp() - 1.0) / (2.0 * n);
        }
        let mut d_flat = self.mu_head.backward(&d_mu)?;
        d_flat.add_assign(&self.log_var_head.backward(&d_lv)?)?;
        let d_relu2 = d_flat.reshaped(state.conv2_out.shape.clone())?;
        let d_conv2 = d_relu2.zip(&state.conv2_out, |d, pre| if pre > 0.0 { d } else { 0.0 })?;
        let d_relu1 = self.conv2.backward(&d_conv2)?;
        let d_conv1 = d_relu1.zip(&state.conv1_out, |d, pre| if pre > 0.0 { d } else { 0.0 })?;
        self.conv1.backward(&d_conv1)?;
        Ok(state.breakdown)
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.conv2.zero_grads();
        self.mu_head.zero_grads();
        self.log_var_head.zero_grads();
        self.dec1.zero_grads();
        self.dec2.zero_grads();
    }

    fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut pairs = self.conv1.param_pairs();
        pairs.extend(self.conv2.param_pairs());
        pairs.extend(self.mu_head.param_pairs());
        pairs.extend(self.log_var_head.param_pairs());
        pairs.extend(self.dec1.param_pairs());
        pairs.extend(self.dec2.param_pairs());
        pairs
    }

    pub(crate) fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        self.conv1.visit_params("enc.conv1", f);
        self.conv2.visit_params("enc.conv2", f);
        self.mu_head.visit_params("enc.mu", f);
        self.log_var_head.visit_params("enc.log_var", f);
        self.dec1.visit_params("dec.h", f);
        self.dec2.visit_params("dec.out", f);
    }

    /// Draws `n` latent vectors from the standard normal prior and decodes
    /// them. Exactly `n` rows, all finite.
    pub fn generate(&self, n: usize, rng: &mut RngStream) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::Config("generate: n must be >= 1".into()));
        }
        let z = Tensor {
            shape: vec![n, self.z_dim],
            data: (0..n * self.z_dim).map(|_| rng.normal()).collect(),
        };
        let rows = self.decode(&z)?;
        if !rows.is_finite() {
            return Err(Error::Numeric("generate: non-finite output".into()));
        }
        Ok(rows)
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let cfg = &self.config;
        let header = vec![
            ("kind".to_string(), "VAE".to_string()),
            ("input_dim".to_string(), self.input_dim.to_string()),
            ("z_dim".to_string(), self.z_dim.to_string()),
            (
                "conv_channels".to_string(),
                format!("{},{}", cfg.conv_channels.0, cfg.conv_channels.1),
            ),
            ("kernel_len".to_string(), cfg.kernel_len.to_string()),
            ("stride".to_string(), cfg.stride.to_string()),
            ("decoder_hidden".to_string(), cfg.decoder_hidden.to_string()),
        ];
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        self.visit_params(&mut |name, p, _| tensors.push((name, p.clone())));
        let refs: Vec<(String, &Tensor)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        checkpoint::write_checkpoint(path, &header, &refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ckpt = checkpoint::read_checkpoint(path)?;
        if ckpt.header_value("kind")? != "VAE" {
            return Err(Error::Data(format!(
                "expected VAE checkpoint, found '{}'",
                ckpt.header_value("kind")?
            )));
        }
        let parse = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Data(format!("vae header value '{v}' unparseable")))
        };
        let input_dim = parse(ckpt.header_value("input_dim")?)?;
        let channels_text = ckpt.header_value("conv_channels")?.to_string();
        let channels: Vec<usize> = channels_text
            .split(',')
            .map(parse)
            .collect::<Result<_>>()?;
        if channels.len() != 2 {
            return Err(Error::Data("vae header conv_channels malformed".into()));
        }
        let config = VaeConfig {
            z_dim: parse(ckpt.header_value("z_dim")?)?,
            conv_channels: (channels[0], channels[1]),
            kernel_len: parse(ckpt.header_value("kernel_len")?)?,
            stride: parse(ckpt.header_value("stride")?)?,
            decoder_hidden: parse(ckpt.header_value("decoder_hidden")?)?,
            ..VaeConfig::default()
        };
        let mut model = Self::assemble(input_dim, &config, None)?;
        checkpoint::fill_params(&mut ckpt, |fill| {
            let mut result = Ok(());
            model.visit_params(&mut |name, p, _| {
                if result.is_ok() {
                    result = fill(name, p);
                }
            });
            result
        })?;
        Ok(model)
    }
}

/// Trains one VAE on one class's rows (scaled to [0, 1]) by Adam on the
/// negative ELBO. Deterministic per seed.
pub fn train_vae(rows: &Tensor, config: &VaeConfig) -> Result<VaeModel> {
    if rows.rank() != 2 {
        return Err(Error::Dimension(format!(
            "vae: rows must be [M x d], got {:?}",
            rows.shape
        )));
    }
    if rows.rows() < config.min_rows {
        return Err(Error::Data(format!(
            "vae: {} rows below the minimum {}",
            rows.rows(),
            config.min_rows
        )));
    }
    if !rows.is_finite() {
        return Err(Error::Data("vae: non-finite training row".into()));
    }
    if rows.data.iter().any(|&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
        return Err(Error::Data(
            "vae: training rows must be scaled to [0, 1]".into(),
        ));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("vae: epochs and batch_size must be >= 1".into()));
    }
    let mut rng = RngStream::new(config.seed);
    let mut model = VaeModel::assemble(rows.cols(), config, Some(&mut rng))?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate));
    let n = rows.rows();
    let d = rows.cols();
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut batch_data = Vec::with_capacity(batch.len() * d);
            for &i in batch {
                batch_data.extend_from_slice(rows.row(i));
            }
            let x = Tensor {
                shape: vec![batch.len(), d],
                data: batch_data,
            };
            let eps = Tensor {
                shape: vec![batch.len(), model.z_dim],
                data: (0..batch.len() * model.z_dim).map(|_| rng.normal()).collect(),
            };
            model.zero_grads();
            let breakdown = model.backprop(&x, &eps)?;
            if !breakdown.total.is_finite() {
                return Err(Error::Numeric("vae: non-finite loss".into()));
            }
            adam.step(model.param_pairs())?;
        }
    }
    Ok(model)
}

/// Negative ELBO on a fixed batch with fixed noise; the loss a training
/// step sees.
pub fn vae_loss(model: &mut VaeModel, x: &Tensor, eps: &Tensor) -> Result<ElboBreakdown> {
    let state = model.run_forward(x, eps)?;
    Ok(state.breakdown)
}

/// Gradient-check adapter over the full VAE objective with frozen noise.
pub struct VaeGradTarget<'a> {
    pub model: &'a mut VaeModel,
    pub x: &'a Tensor,
    pub eps: &'a Tensor,
}

impl GradTarget for VaeGradTarget<'_> {
    fn objective(&mut self) -> Result<f64> {
        Ok(vae_loss(self.model, self.x, self.eps)?.total)
    }

    fn compute_gradients(&mut self) -> Result<()> {
        self.model.zero_grads();
        self.model.backprop(self.x, self.eps)?;
        Ok(())
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        self.model.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;

    fn unit_dist(mean: Vec<f64>, log_var: Vec<f64>) -> EncodedDistribution {
        let z = mean.len();
        EncodedDistribution::new(
            Tensor::new(vec![1, z], mean).unwrap(),
            Tensor::new(vec![1, z], log_var).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn kl_zero_for_standard_normal_match() {
        let dist = unit_dist(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert!(kl_divergence(&dist).abs() < 1e-12);
    }

    #[test]
    fn kl_half_for_unit_mean_shift() {
        let dist = unit_dist(vec![1.0], vec![0.0]);
        assert!((kl_divergence(&dist) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_origin() {
        let mut rng = RngStream::new(31);
        for _ in 0..2000 {
            let mu = rng.uniform_in(-5.0, 5.0);
            let lv = rng.uniform_in(-5.0, 5.0);
            let dist = unit_dist(vec![mu], vec![lv]);
            let kl = kl_divergence(&dist);
            assert!(kl >= 0.0, "kl {kl} for mu {mu} lv {lv}");
            if kl < 1e-12 {
                assert!(mu.abs() < 1e-5 && lv.abs() < 1e-5);
            }
        }
    }

    #[test]
    fn elbo_total_is_exactly_the_sum() {
        let x = Tensor::new(vec![2, 3], vec![0.2, 0.4, 0.6, 0.1, 0.9, 0.5]).unwrap();
        let recon = Tensor::new(vec![2, 3], vec![0.3, 0.3, 0.5, 0.2, 0.8, 0.4]).unwrap();
        let dist = EncodedDistribution::new(
            Tensor::new(vec![2, 2], vec![0.5, -0.5, 1.0, 0.0]).unwrap(),
            Tensor::new(vec![2, 2], vec![0.1, -0.1, 0.0, 0.2]).unwrap(),
        )
        .unwrap();
        let b = elbo_loss(&x, &recon, &dist).unwrap();
        assert_eq!(b.total.to_bits(), (b.reconstruction + b.kl).to_bits());
        assert!((b.total - b.reconstruction - b.kl).abs() < 1e-12);
    }

    #[test]
    fn elbo_shape_mismatch_is_dimension_error() {
        let x = Tensor::zeros(&[2, 3]);
        let recon = Tensor::zeros(&[2, 4]);
        let dist = unit_dist(vec![0.0], vec![0.0]);
        assert!(elbo_loss(&x, &recon, &dist).is_err());
    }

    #[test]
    fn reparameterize_with_zero_noise_returns_mean() {
        let dist = unit_dist(vec![0.3, -0.7, 2.0], vec![0.5, -1.0, 0.0]);
        let eps = Tensor::zeros(&[1, 3]);
        let z = reparameterize_with(&dist, &eps);
        assert_eq!(z.data, vec![0.3, -0.7, 2.0]);
    }

    #[test]
    fn reparameterized_moments_match_the_gaussian() {
        let n = 100_000;
        let dist = EncodedDistribution::new(
            Tensor::zeros(&[n, 1]),
            Tensor::zeros(&[n, 1]),
        )
        .unwrap();
        let mut rng = RngStream::new(17);
        let z = reparameterize(&dist, &mut rng);
        let mean = z.data.iter().sum::<f64>() / n as f64;
        let var = z.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn reparameterize_is_deterministic_per_seed() {
        let dist = unit_dist(vec![1.0, 2.0], vec![0.3, -0.3]);
        let a = reparameterize(&dist, &mut RngStream::new(5));
        let b = reparameterize(&dist, &mut RngStream::new(5));
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    fn gaussian_rows(n: usize, d: usize, center: f64, spread: f64, seed: u64) -> Tensor {
        let mut rng = RngStream::new(seed);
        Tensor {
            shape: vec![n, d],
            data: (0..n * d)
                .map(|_| (center + spread * rng.normal()).clamp(0.0, 1.0))
                .collect(),
        }
    }

    #[test]
    fn training_decreases_negative_elbo() {
        let rows = gaussian_rows(64, 6, 0.25, 0.1, 3);
        let cfg = VaeConfig {
            epochs: 40,
            seed: 7,
            ..VaeConfig::default()
        };
        // Initial loss from an untrained model with the same architecture.
        let mut untrained = VaeModel::assemble(6, &cfg, Some(&mut RngStream::new(7))).unwrap();
        let eps = Tensor::zeros(&[64, cfg.z_dim]);
        let initial = vae_loss(&mut untrained, &rows, &eps).unwrap().total;
        let mut trained = train_vae(&rows, &cfg).unwrap();
        let final_loss = vae_loss(&mut trained, &rows, &eps).unwrap().total;
        assert!(final_loss < initial, "{final_loss} vs {initial}");
    }

    #[test]
    fn repeated_point_is_memorized_by_the_decoder() {
        let point = [0.3, 0.7, 0.45, 0.62];
        let rows = Tensor {
            shape: vec![32, 4],
            data: (0..32).flat_map(|_| point.to_vec()).collect(),
        };
        let cfg = VaeConfig {
            epochs: 400,
            learning_rate: 3e-3,
            seed: 5,
            ..VaeConfig::default()
        };
        let model = train_vae(&rows, &cfg).unwrap();
        let generated = model.generate(200, &mut RngStream::new(9)).unwrap();
        for j in 0..4 {
            let mean: f64 =
                (0..200).map(|i| generated.data[i * 4 + j]).sum::<f64>() / 200.0;
            assert!(
                (mean - point[j]).abs() < 0.05,
                "feature {j}: decoder mean {mean} vs {}",
                point[j]
            );
        }
    }

    #[test]
    fn kl_stays_finite_through_training() {
        let rows = gaussian_rows(48, 5, 0.4, 0.15, 21);
        let cfg = VaeConfig {
            epochs: 30,
            seed: 2,
            ..VaeConfig::default()
        };
        let model = train_vae(&rows, &cfg).unwrap();
        let dist = model.encode(&rows).unwrap();
        assert!(kl_divergence(&dist).is_finite());
    }

    #[test]
    fn too_few_rows_is_a_data_error() {
        let rows = gaussian_rows(8, 4, 0.5, 0.1, 1);
        assert!(matches!(
            train_vae(&rows, &VaeConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn unscaled_rows_are_rejected() {
        let rows = Tensor::filled(&[20, 4], 3.5);
        assert!(matches!(
            train_vae(&rows, &VaeConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn generate_contract() {
        let rows = gaussian_rows(32, 5, 0.5, 0.1, 4);
        let cfg = VaeConfig {
            epochs: 10,
            seed: 3,
            ..VaeConfig::default()
        };
        let model = train_vae(&rows, &cfg).unwrap();
        let a = model.generate(17, &mut RngStream::new(8)).unwrap();
        assert_eq!(a.shape, vec![17, 5]);
        assert!(a.is_finite());
        let b = model.generate(17, &mut RngStream::new(8)).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(model.generate(0, &mut RngStream::new(8)).is_err());
    }

    #[test]
    fn generated_means_track_a_unimodal_class() {
        let n = 100;
        let d = 4;
        let centers = [0.35, 0.55, 0.45, 0.65];
        let spread = 0.1;
        let mut rng = RngStream::new(12);
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for &c in &centers {
                data.push((c + spread * rng.normal()).clamp(0.0, 1.0));
            }
        }
        let rows = Tensor {
            shape: vec![n, d],
            data,
        };
        let train_means: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| rows.data[i * d + j]).sum::<f64>() / n as f64)
            .collect();
        let train_stds: Vec<f64> = (0..d)
            .map(|j| {
                let m = train_means[j];
                ((0..n).map(|i| (rows.data[i * d + j] - m).powi(2)).sum::<f64>() / n as f64)
                    .sqrt()
            })
            .collect();
        let cfg = VaeConfig {
            epochs: 500,
            learning_rate: 3e-3,
            seed: 6,
            ..VaeConfig::default()
        };
        let model = train_vae(&rows, &cfg).unwrap();
        let generated = model.generate(10_000, &mut RngStream::new(14)).unwrap();
        for j in 0..d {
            let mean: f64 =
                (0..10_000).map(|i| generated.data[i * d + j]).sum::<f64>() / 10_000.0;
            let se = train_stds[j] / (n as f64).sqrt();
            assert!(
                (mean - train_means[j]).abs() < 3.0 * se,
                "feature {j}: generated mean {mean} vs train {} (3se {})",
                train_means[j],
                3.0 * se
            );
        }
    }

    #[test]
    fn full_vae_passes_gradient_check() {
        let rows = gaussian_rows(6, 7, 0.5, 0.15, 19);
        let cfg = VaeConfig {
            z_dim: 3,
            conv_channels: (3, 4),
            decoder_hidden: 6,
            ..VaeConfig::default()
        };
        let mut model = VaeModel::assemble(7, &cfg, Some(&mut RngStream::new(23))).unwrap();
        let mut rng = RngStream::new(24);
        let eps = Tensor {
            shape: vec![6, 3],
            data: (0..18).map(|_| rng.normal()).collect(),
        };
        let mut target = VaeGradTarget {
            model: &mut model,
            x: &rows,
            eps: &eps,
        };
        let report = gradient_check(&mut target, 1e-5).unwrap();
        assert!(
            report.global_max < 1e-4,
            "vae max rel err {} at {:?}",
            report.global_max,
            report.worst_param
        );
    }

    #[test]
    fn checkpoint_round_trip() {
        let rows = gaussian_rows(32, 5, 0.5, 0.1, 4);
        let cfg = VaeConfig {
            epochs: 5,
            seed: 3,
            ..VaeConfig::default()
        };
        let mut model = train_vae(&rows, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.ckpt");
        model.save(&path).unwrap();
        let loaded = VaeModel::load(&path).unwrap();
        let a = model.generate(5, &mut RngStream::new(2)).unwrap();
        let b = loaded.generate(5, &mut RngStream::new(2)).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
