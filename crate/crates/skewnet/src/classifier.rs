//! The two detection architectures: a four-hidden-layer feed-forward DNN
//! and its BLSTM variant where the first hidden layer is a bidirectional
//! LSTM. Both train with minibatch Adam on class-weighted cross-entropy.

use std::path::Path;

use crate::checkpoint::{self, Checkpoint};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    weighted_cross_entropy, weighted_cross_entropy_grad, Activation, AdamConfig, AdamState,
    ClassWeights, DenseLayer, Direction, DropoutLayer, GradTarget, LayerKind, LstmLayer, Mode,
    Network, Reshape, SequenceEnds,
};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Dnn,
    Blstm,
}

impl ArchKind {
    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Dnn => "DNN",
            ArchKind::Blstm => "BLSTM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "DNN" | "dnn" => Ok(ArchKind::Dnn),
            "BLSTM" | "blstm" => Ok(ArchKind::Blstm),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Four hidden layers with a fixed dropout schedule after hidden 3 and
/// hidden 4; the BLSTM variant swaps hidden 1 for a bidirectional LSTM
/// whose concatenated final states have the same width.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub n_classes: usize,
    pub hidden: [usize; 4],
    pub dropout: (f64, f64),
}

impl ArchitectureSpec {
    pub fn new(kind: ArchKind, input_dim: usize, n_classes: usize) -> Self {
        Self {
            kind,
            input_dim,
            n_classes,
            hidden: [128, 64, 32, 16],
            dropout: (0.30, 0.20),
        }
    }

    pub fn with_hidden(mut self, hidden: [usize; 4]) -> Self {
        self.hidden = hidden;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("classifier: input_dim must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("classifier: need at least 2 classes".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "classifier: zero hidden width in {:?}",
                self.hidden
            )));
        }
        if self.kind == ArchKind::Blstm && self.hidden[0] % 2 != 0 {
            return Err(Error::Config(format!(
                "BLSTM: first hidden width {} must be even (two directions)",
                self.hidden[0]
            )));
        }
        for rate in [self.dropout.0, self.dropout.1] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("dropout rate {rate} out of [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean weighted loss per epoch over the training set.
    pub train_loss: Vec<f64>,
    /// Validation loss per epoch when a validation set was supplied.
    pub validation_loss: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub spec: ArchitectureSpec,
    pub net: Network,
    /// Class registry the label indices refer to; stored in checkpoints so
    /// evaluation can remap labels by name.
    pub classes: Vec<String>,
}

/// DNN: dense(relu) x4 with dropout 0.30 after hidden 3 and 0.20 after
/// hidden 4, then a softmax output. BLSTM: hidden 1 replaced by a
/// bidirectional LSTM over the input presented as a length-d sequence of
/// single features.
pub fn build_classifier(spec: &ArchitectureSpec, rng: &mut RngStream) -> Result<ClassifierModel> {
    assemble(spec, Some(rng))
}

fn assemble(spec: &ArchitectureSpec, mut rng: Option<&mut RngStream>) -> Result<ClassifierModel> {
    spec.validate()?;
    let [h1, h2, h3, h4] = spec.hidden;
    let mut layers: Vec<LayerKind> = Vec::new();
    let dense = |inp: usize, out: usize, act: Activation, rng: &mut Option<&mut RngStream>| {
        match rng {
            Some(r) => Ok(DenseLayer::new(inp, out, act, r)),
            None => DenseLayer::from_params(
                Tensor::zeros(&[inp, out]),
                Tensor::zeros(&[out]),
                act,
            ),
        }
    };
    match spec.kind {
        ArchKind::Dnn => {
            layers.push(LayerKind::Dense(dense(
                spec.input_dim,
                h1,
                Activation::Relu,
                &mut rng,
            )?));
        }
        ArchKind::Blstm => {
            layers.push(LayerKind::Reshape(Reshape::new(vec![spec.input_dim, 1])));
            let lstm = match rng.as_deref_mut() {
                Some(r) => LstmLayer::new(1, h1 / 2, Direction::Bidirectional, r)?,
                None => LstmLayer::zeroed(1, h1 / 2, Direction::Bidirectional),
            };
            layers.push(LayerKind::Lstm(lstm));
            layers.push(LayerKind::SequenceEnds(SequenceEnds::new(2)));
        }
    }
    layers.push(LayerKind::Dense(dense(h1, h2, Activation::Relu, &mut rng)?));
    layers.push(LayerKind::Dense(dense(h2, h3, Activation::Relu, &mut rng)?));
    layers.push(LayerKind::Dropout(DropoutLayer::new(spec.dropout.0)?));
    layers.push(LayerKind::Dense(dense(h3, h4, Activation::Relu, &mut rng)?));
    layers.push(LayerKind::Dropout(DropoutLayer::new(spec.dropout.1)?));
    layers.push(LayerKind::Dense(dense(
        h4,
        spec.n_classes,
        Activation::Softmax,
        &mut rng,
    )?));
    Ok(ClassifierModel {
        spec: spec.clone(),
        net: Network::new(layers),
        classes: Vec::new(),
    })
}

fn gather_batch(data: &Dataset, indices: &[usize]) -> (Tensor, Vec<usize>) {
    let d = data.width();
    let mut features = Vec::with_capacity(indices.len() * d);
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        features.extend_from_slice(data.row(i));
        targets.push(data.labels[i]);
    }
    (
        Tensor {
            shape: vec![indices.len(), d],
            data: features,
        },
        targets,
    )
}

/// Minibatch Adam on the weighted cross-entropy. Fully deterministic given
/// `(config.seed, config, data)`.
pub fn train_classifier(
    model: &mut ClassifierModel,
    train: &Dataset,
    weights: &ClassWeights,
    config: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<TrainHistory> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config(
            "train: epochs and batch_size must be >= 1".into(),
        ));
    }
    if train.width() != model.spec.input_dim {
        return Err(Error::Dimension(format!(
            "train: data width {} vs input_dim {}",
            train.width(),
            model.spec.input_dim
        )));
    }
    if weights.len() != model.spec.n_classes {
        return Err(Error::Dimension(format!(
            "train: {} weights vs {} classes",
            weights.len(),
            model.spec.n_classes
        )));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= model.spec.n_classes) {
        return Err(Error::Data(format!(
            "train: label {bad} outside [0, {})",
            model.spec.n_classes
        )));
    }
    if !train.is_finite() {
        return Err(Error::Data("train: non-finite feature value".into()));
    }
    model.classes = train.classes.clone();

    let mut rng = RngStream::new(config.seed);
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(config.learning_rate));
    let n = train.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut val_losses = Vec::new();
    for _epoch in 0..config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (features, targets) = gather_batch(train, batch);
            model.net.zero_grads();
            let probs = model.net.forward(&features, Mode::Train, Some(&mut rng))?;
            let loss = weighted_cross_entropy(&probs, &targets, weights)?;
            if !loss.is_finite() {
                return Err(Error::Numeric("train: non-finite loss".into()));
            }
            let d_probs = weighted_cross_entropy_grad(&probs, &targets, weights)?;
            model.net.backward(&d_probs)?;
            adam.step(model.net.param_pairs())?;
            loss_sum += loss * batch.len() as f64;
        }
        history.train_loss.push(loss_sum / n as f64);
        if let Some(val) = validation {
            let (features, targets) = gather_batch(val, &(0..val.n_rows()).collect::<Vec<_>>());
            let probs = model.net.infer(&features)?;
            val_losses.push(weighted_cross_entropy(&probs, &targets, weights)?);
        }
    }
    if validation.is_some() {
        history.validation_loss = Some(val_losses);
    }
    Ok(history)
}

/// Row-wise class probabilities and argmax labels; dropout is forced to
/// eval mode, so repeated calls are identical.
pub fn predict(model: &ClassifierModel, features: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let probs = model.net.infer(features)?;
    let labels = argmax_rows(&probs);
    Ok((probs, labels))
}

pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let (n, c) = (probs.rows(), probs.cols());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row = probs.row(i);
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        labels.push(best);
    }
    labels
}

impl ClassifierModel {
    pub fn save(&mut self, path: &Path) -> Result<()> {
        let header = vec![
            ("kind".to_string(), self.spec.kind.name().to_string()),
            ("input_dim".to_string(), self.spec.input_dim.to_string()),
            ("n_classes".to_string(), self.spec.n_classes.to_string()),
            (
                "hidden".to_string(),
                self.spec
                    .hidden
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "dropout".to_string(),
                format!("{},{}", self.spec.dropout.0, self.spec.dropout.1),
            ),
            (
                "classes".to_string(),
                serde_json::to_string(&self.classes)
                    .map_err(|e| Error::Data(format!("classes serialize: {e}")))?,
            ),
        ];
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        self.net.visit_params(&mut |name, p, _| {
            tensors.push((name, p.clone()));
        });
        let refs: Vec<(String, &Tensor)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        checkpoint::write_checkpoint(path, &header, &refs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut ckpt = checkpoint::read_checkpoint(path)?;
        let spec = spec_from_header(&ckpt)?;
        let classes: Vec<String> = serde_json::from_str(ckpt.header_value("classes")?)
            .map_err(|e| Error::Data(format!("classes parse: {e}")))?;
        let mut model = assemble(&spec, None)?;
        model.classes = classes;
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

fn spec_from_header(ckpt: &Checkpoint) -> Result<ArchitectureSpec> {
    let kind = ArchKind::parse(ckpt.header_value("kind")?)?;
    let input_dim: usize = parse_header(ckpt, "input_dim")?;
    let n_classes: usize = parse_header(ckpt, "n_classes")?;
    let hidden_text = ckpt.header_value("hidden")?;
    let widths: Vec<usize> = hidden_text
        .split(',')
        .map(|s| s.parse().map_err(|_| bad_header("hidden", hidden_text)))
        .collect::<Result<_>>()?;
    let hidden: [usize; 4] = widths
        .try_into()
        .map_err(|_| bad_header("hidden", hidden_text))?;
    let dropout_text = ckpt.header_value("dropout")?;
    let rates: Vec<f64> = dropout_text
        .split(',')
        .map(|s| s.parse().map_err(|_| bad_header("dropout", dropout_text)))
        .collect::<Result<_>>()?;
    if rates.len() != 2 {
        return Err(bad_header("dropout", dropout_text));
    }
    Ok(ArchitectureSpec {
        kind,
        input_dim,
        n_classes,
        hidden,
        dropout: (rates[0], rates[1]),
    })
}

fn parse_header<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T> {
    let text = ckpt.header_value(key)?;
    text.parse().map_err(|_| bad_header(key, text))
}

fn bad_header(key: &str, value: &str) -> Error {
    Error::Data(format!("checkpoint header {key}='{value}' unparseable"))
}

/// Gradient-check adapter: weighted cross-entropy objective over a fixed
/// batch, dropout in eval mode so finite differences see a deterministic
/// function.
pub struct CrossEntropyTarget<'a> {
    pub net: &'a mut Network,
    pub features: &'a Tensor,
    pub targets: &'a [usize],
    pub weights: &'a ClassWeights,
}

impl GradTarget for CrossEntropyTarget<'_> {
    fn objective(&mut self) -> Result<f64> {
        let probs = self.net.forward(self.features, Mode::Eval, None)?;
        weighted_cross_entropy(&probs, self.targets, self.weights)
    }

    fn compute_gradients(&mut self) -> Result<()> {
        self.net.zero_grads();
        let probs = self.net.forward(self.features, Mode::Eval, None)?;
        let d = weighted_cross_entropy_grad(&probs, self.targets, self.weights)?;
        self.net.backward(&d)?;
        Ok(())
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        self.net.visit_params(f);
    }
}
