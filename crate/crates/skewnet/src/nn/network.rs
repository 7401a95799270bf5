//! Sequential layer container used by the classifiers and the autoencoder.
//!
//! Training mutates layer caches, so a training loop owns its network
//! exclusively; `infer` is read-only and safe to share across threads.

use crate::error::{Error, Result};
use crate::nn::conv1d::Conv1DLayer;
use crate::nn::dense::DenseLayer;
use crate::nn::dropout::{DropoutLayer, Mode};
use crate::nn::lstm::LstmLayer;
use crate::nn::shape_ops::{Reshape, SequenceEnds};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum LayerKind {
    Dense(DenseLayer),
    Conv1D(Conv1DLayer),
    Lstm(LstmLayer),
    Dropout(DropoutLayer),
    Reshape(Reshape),
    SequenceEnds(SequenceEnds),
}

impl LayerKind {
    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Option<&mut RngStream>) -> Result<Tensor> {
        match self {
            LayerKind::Dense(l) => l.forward(input),
            LayerKind::Conv1D(l) => l.forward(input),
            LayerKind::Lstm(l) => l.forward(input),
            LayerKind::Dropout(l) => {
                l.mode = mode;
                l.forward(input, rng.as_deref_mut())
            }
            LayerKind::Reshape(l) => l.forward(input),
            LayerKind::SequenceEnds(l) => l.forward(input),
        }
    }

    fn infer(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            LayerKind::Dense(l) => l.infer(input),
            LayerKind::Conv1D(l) => l.infer(input),
            LayerKind::Lstm(l) => l.infer(input),
            LayerKind::Dropout(l) => l.infer(input),
            LayerKind::Reshape(l) => l.infer(input),
            LayerKind::SequenceEnds(l) => l.infer(input),
        }
    }

    fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        match self {
            LayerKind::Dense(l) => l.backward(d_output),
            LayerKind::Conv1D(l) => l.backward(d_output),
            LayerKind::Lstm(l) => l.backward(d_output),
            LayerKind::Dropout(l) => l.backward(d_output),
            LayerKind::Reshape(l) => l.backward(d_output),
            LayerKind::SequenceEnds(l) => l.backward(d_output),
        }
    }

    fn zero_grads(&mut self) {
        match self {
            LayerKind::Dense(l) => l.zero_grads(),
            LayerKind::Conv1D(l) => l.zero_grads(),
            LayerKind::Lstm(l) => l.zero_grads(),
            LayerKind::Dropout(_) | LayerKind::Reshape(_) | LayerKind::SequenceEnds(_) => {}
        }
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        match self {
            LayerKind::Dense(l) => l.visit_params(prefix, f),
            LayerKind::Conv1D(l) => l.visit_params(prefix, f),
            LayerKind::Lstm(l) => l.visit_params(prefix, f),
            LayerKind::Dropout(_) | LayerKind::Reshape(_) | LayerKind::SequenceEnds(_) => {}
        }
    }

    fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        match self {
            LayerKind::Dense(l) => l.param_pairs(),
            LayerKind::Conv1D(l) => l.param_pairs(),
            LayerKind::Lstm(l) => l.param_pairs(),
            LayerKind::Dropout(_) | LayerKind::Reshape(_) | LayerKind::SequenceEnds(_) => vec![],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Network {
    pub layers: Vec<LayerKind>,
}

impl Network {
    pub fn new(layers: Vec<LayerKind>) -> Self {
        Self { layers }
    }

    /// Caching forward pass. `Mode::Train` activates dropout, which then
    /// needs the rng; dropout under `Mode::Eval` is an identity.
    pub fn forward(
        &mut self,
        input: &Tensor,
        mode: Mode,
        mut rng: Option<&mut RngStream>,
    ) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode, &mut rng)?;
        }
        Ok(x)
    }

    /// Read-only forward pass over a frozen model; dropout is an identity.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.infer_through(self.layers.len(), input)
    }

    /// Read-only forward pass through the first `n_layers` layers.
    pub fn infer_through(&self, n_layers: usize, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers[..n_layers] {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    /// Backpropagates the loss gradient, accumulating parameter gradients.
    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let mut d = d_output.clone();
        for layer in self.layers.iter_mut().rev() {
            d = layer.backward(&d)?;
        }
        Ok(d)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    /// Visits `(name, parameter, gradient)` in a stable order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("layer{i}"), f);
        }
    }

    pub fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_pairs())
            .collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.param_pairs().iter().map(|(p, _)| p.numel()).sum()
    }

    /// Error out on any non-finite parameter; training guards call this.
    pub fn check_finite(&mut self) -> Result<()> {
        for (p, _) in self.param_pairs() {
            if !p.is_finite() {
                return Err(Error::Numeric("non-finite parameter in network".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::Activation;

    #[test]
    fn forward_chains_layers() {
        let mut rng = RngStream::new(5);
        let mut net = Network::new(vec![
            LayerKind::Dense(DenseLayer::new(4, 3, Activation::Relu, &mut rng)),
            LayerKind::Dense(DenseLayer::new(3, 2, Activation::Softmax, &mut rng)),
        ]);
        let x = Tensor::new(vec![2, 4], vec![0.1; 8]).unwrap();
        let y = net.forward(&x, Mode::Eval, None).unwrap();
        assert_eq!(y.shape, vec![2, 2]);
        for i in 0..2 {
            let s: f64 = y.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn infer_matches_eval_forward() {
        let mut rng = RngStream::new(5);
        let mut net = Network::new(vec![
            LayerKind::Dense(DenseLayer::new(3, 3, Activation::Tanh, &mut rng)),
            LayerKind::Dropout(DropoutLayer::new(0.4).unwrap()),
            LayerKind::Dense(DenseLayer::new(3, 2, Activation::Linear, &mut rng)),
        ]);
        let x = Tensor::new(vec![1, 3], vec![0.3, -0.7, 0.5]).unwrap();
        let a = net.forward(&x, Mode::Eval, None).unwrap();
        let b = net.infer(&x).unwrap();
        for (u, v) in a.data.iter().zip(&b.data) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}
