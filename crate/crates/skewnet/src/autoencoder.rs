//! Classic dense autoencoder for dimensionality reduction. The encoder half
//! projects flow vectors into the latent space the classifiers train on.

use std::path::Path;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::nn::{
    mse, mse_grad, Activation, AdamConfig, AdamState, DenseLayer, GradTarget, LayerKind, Mode,
    Network,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: vec![64],
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Dense encoder ending in a linear latent layer, mirrored linear-output
/// decoder. Hidden layers are relu.
#[derive(Debug, Clone)]
pub struct AutoencoderModel {
    pub net: Network,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// Number of leading layers forming the encoder.
    encoder_layers: usize,
}

impl AutoencoderModel {
    fn assemble(
        input_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        mut rng: Option<&mut RngStream>,
    ) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 {
            return Err(Error::Config("autoencoder: zero dimension".into()));
        }
        let mut widths: Vec<(usize, usize, Activation)> = Vec::new();
        let mut prev = input_dim;
        for &w in hidden {
            widths.push((prev, w, Activation::Relu));
            prev = w;
        }
        widths.push((prev, latent_dim, Activation::Linear));
        let encoder_layers = widths.len();
        prev = latent_dim;
        for &w in hidden.iter().rev() {
            widths.push((prev, w, Activation::Relu));
            prev = w;
        }
        widths.push((prev, input_dim, Activation::Linear));
        let mut layers = Vec::with_capacity(widths.len());
        for (inp, out, act) in widths {
            if out == 0 {
                return Err(Error::Config("autoencoder: zero hidden width".into()));
            }
            let layer = match rng.as_deref_mut() {
                Some(r) => DenseLayer::new(inp, out, act, r),
                None => {
                    DenseLayer::from_params(Tensor::zeros(&[inp, out]), Tensor::zeros(&[out]), act)?
                }
            };
            layers.push(LayerKind::Dense(layer));
        }
        Ok(Self {
            net: Network::new(layers),
            input_dim,
            latent_dim,
            hidden: hidden.to_vec(),
            encoder_layers,
        })
    }

    /// Deterministic projection to the latent space.
    pub fn encode(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.cols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "encode: input {:?} vs width {}",
                features.shape, self.input_dim
            )));
        }
        self.net.infer_through(self.encoder_layers, features)
    }

    /// Full round trip through encoder and decoder.
    pub fn reconstruct(&self, features: &Tensor) -> Result<Tensor> {
        if features.rank() != 2 || features.cols() != self.input_dim {
            return Err(Error::Dimension(format!(
                "reconstruct: input {:?} vs width {}",
                features.shape, self.input_dim
            )));
        }
        self.net.infer(features)
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let header = vec![
            ("kind".to_string(), "AE".to_string()),
            ("input_dim".to_string(), self.input_dim.to_string()),
            ("latent_dim".to_string(), self.latent_dim.to_string()),
            (
                "hidden".to_string(),
                self.hidden
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        ];
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        self.net
            .visit_params(&mut |name, p, _| tensors.push((name, p.clone())));
        let refs: Vec<(String, &Tensor)> = tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        checkpoint::write_checkpoint(path, &header, &refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ckpt = checkpoint::read_checkpoint(path)?;
        if ckpt.header_value("kind")? != "AE" {
            return Err(Error::Data(format!(
                "expected AE checkpoint, found '{}'",
                ckpt.header_value("kind")?
            )));
        }
        let input_dim: usize = ckpt
            .header_value("input_dim")?
            .parse()
            .map_err(|_| Error::Data("bad input_dim header".into()))?;
        let latent_dim: usize = ckpt
            .header_value("latent_dim")?
            .parse()
            .map_err(|_| Error::Data("bad latent_dim header".into()))?;
        let hidden_text = ckpt.header_value("hidden")?.to_string();
        let hidden: Vec<usize> = if hidden_text.is_empty() {
            Vec::new()
        } else {
            hidden_text
                .split(',')
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Data("bad hidden header".into()))
                })
                .collect::<Result<_>>()?
        };
        let mut model = Self::assemble(input_dim, latent_dim, &hidden, None)?;
        let net = &mut model.net;
        checkpoint::fill_params(&mut ckpt, |fill| {
            let mut result = Ok(());
            net.visit_params(&mut |name, p, _| {
                if result.is_ok() {
                    result = fill(name, p);
                }
            });
            result
        })?;
        Ok(model)
    }
}

/// Trains the autoencoder with Adam on mean squared reconstruction error.
/// `latent_dim` must be strictly below the input width (this is a
/// dimensionality reducer, not an identity map).
pub fn train_autoencoder(features: &Tensor, config: &ProjectorConfig) -> Result<AutoencoderModel> {
    if features.rank() != 2 {
        return Err(Error::Dimension(format!(
            "autoencoder: features must be [N x d], got {:?}",
            features.shape
        )));
    }
    let d = features.cols();
    if config.latent_dim >= d {
        return Err(Error::Config(format!(
            "latent_dim {} must be < input width {d} for reduction",
            config.latent_dim
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config(
            "autoencoder: epochs and batch_size must be >= 1".into(),
        ));
    }
    if features.rows() < config.batch_size.min(1) {
        return Err(Error::Data("autoencoder: empty training set".into()));
    }
    if !features.is_finite() {
        return Err(Error::Data("autoencoder: non-finite feature".into()));
    }
    let mut rng = RngStream::new(config.seed);
    let mut model = AutoencoderModel::assemble(d, config.latent_dim, &config.hidden, Some(&mut rng))?;
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate));
    let n = features.rows();
    let mut order: Vec<usize> = (0..n).collect();
    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut batch_data = Vec::with_capacity(batch.len() * d);
            for &i in batch {
                batch_data.extend_from_slice(features.row(i));
            }
            let x = Tensor {
                shape: vec![batch.len(), d],
                data: batch_data,
            };
            model.net.zero_grads();
            let recon = model.net.forward(&x, Mode::Eval, None)?;
            let loss = mse(&recon, &x)?;
            if !loss.is_finite() {
                return Err(Error::Numeric("autoencoder: non-finite loss".into()));
            }
            let d_recon = mse_grad(&recon, &x)?;
            model.net.backward(&d_recon)?;
            adam.step(model.net.param_pairs())?;
        }
    }
    Ok(model)
}

/// Mean squared error between the input and its reconstruction.
pub fn reconstruction_error(model: &AutoencoderModel, features: &Tensor) -> Result<f64> {
    let recon = model.reconstruct(features)?;
    mse(&recon, features)
}

/// Gradient-check adapter with the reconstruction objective.
pub struct ReconstructionTarget<'a> {
    pub net: &'a mut Network,
    pub features: &'a Tensor,
}

impl GradTarget for ReconstructionTarget<'_> {
    fn objective(&mut self) -> Result<f64> {
        let recon = self.net.forward(self.features, Mode::Eval, None)?;
        mse(&recon, self.features)
    }

    fn compute_gradients(&mut self) -> Result<()> {
        self.net.zero_grads();
        let recon = self.net.forward(self.features, Mode::Eval, None)?;
        let d = mse_grad(&recon, self.features)?;
        self.net.backward(&d)?;
        Ok(())
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        self.net.visit_params(f);
    }
}
