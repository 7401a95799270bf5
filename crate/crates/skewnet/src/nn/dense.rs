//! Fully connected layer with a built-in activation.

use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::init::dense_init;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// `[in_dim x out_dim]`.
    pub weights: Tensor,
    /// `[out_dim]`.
    pub bias: Tensor,
    pub activation: Activation,
    pub(crate) grad_weights: Tensor,
    pub(crate) grad_bias: Tensor,
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    preact: Tensor,
    output: Tensor,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let (weights, bias) = dense_init(in_dim, out_dim, activation, rng);
        Self {
            grad_weights: Tensor::zeros(&[in_dim, out_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
            weights,
            bias,
            activation,
            cache: None,
        }
    }

    pub fn from_params(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.rank() != 2 || bias.rank() != 1 || bias.shape[0] != weights.shape[1] {
            return Err(Error::Dimension(format!(
                "dense: weights {:?} with bias {:?}",
                weights.shape, bias.shape
            )));
        }
        Ok(Self {
            grad_weights: Tensor::zeros(&weights.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            weights,
            bias,
            activation,
        cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape[1]
    }

    fn preactivate(&self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 || input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "dense: input {:?} vs in_dim {}",
                input.shape,
                self.in_dim()
            )));
        }
        let mut z = input.matmul(&self.weights)?;
        z.add_bias_rows(&self.bias.data)?;
        Ok(z)
    }

    /// `activation(input . weights + bias)`, caching for backward.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let preact = self.preactivate(input)?;
        let output = self.activation.apply(&preact)?;
        self.cache = Some(DenseCache {
            input: input.clone(),
            preact,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Cache-free forward pass for frozen models.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let preact = self.preactivate(input)?;
        self.activation.apply(&preact)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward without cached forward".into()))?;
        let d_pre = self
            .activation
            .backward(d_output, &cache.preact, &cache.output)?;
        self.grad_weights.add_assign(&cache.input.matmul_tn(&d_pre)?)?;
        let db = d_pre.sum_rows();
        for (g, d) in self.grad_bias.data.iter_mut().zip(&db) {
            *g += d;
        }
        d_pre.matmul_nt(&self.weights)
    }

    pub(crate) fn zero_grads(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub(crate) fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor),
    ) {
        f(
            format!("{prefix}.w"),
            &mut self.weights,
            &mut self.grad_weights,
        );
        f(format!("{prefix}.b"), &mut self.bias, &mut self.grad_bias);
    }

    pub(crate) fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        vec![
            (&mut self.weights, &self.grad_weights),
            (&mut self.bias, &self.grad_bias),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(d: usize, activation: Activation) -> DenseLayer {
        let mut w = Tensor::zeros(&[d, d]);
        for i in 0..d {
            w.data[i * d + i] = 1.0;
        }
        DenseLayer::from_params(w, Tensor::zeros(&[d]), activation).unwrap()
    }

    #[test]
    fn identity_weights_linear_pass_through() {
        let layer = identity_layer(3, Activation::Linear);
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.5]).unwrap();
        let y = layer.infer(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_matrix_product() {
        // x = [1, 2], W = [[1, 1], [1, -1]], b = 0, linear -> [3, -1]
        let w = Tensor::new(vec![2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        let layer = DenseLayer::from_params(w, Tensor::zeros(&[2]), Activation::Linear).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let y = layer.infer(&x).unwrap();
        assert_eq!(y.data, vec![3.0, -1.0]);
    }

    #[test]
    fn zero_weights_yield_bias_per_row() {
        let b = Tensor::new(vec![2], vec![0.7, -0.2]).unwrap();
        let layer =
            DenseLayer::from_params(Tensor::zeros(&[3, 2]), b, Activation::Linear).unwrap();
        let x = Tensor::new(vec![2, 3], vec![5.0, 1.0, -9.0, 0.0, 2.0, 4.0]).unwrap();
        let y = layer.infer(&x).unwrap();
        assert_eq!(y.data, vec![0.7, -0.2, 0.7, -0.2]);
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let layer = identity_layer(3, Activation::Linear);
        let x = Tensor::zeros(&[2, 4]);
        assert!(matches!(layer.infer(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut layer = identity_layer(2, Activation::Linear);
        let d = Tensor::zeros(&[1, 2]);
        assert!(matches!(layer.backward(&d), Err(Error::State(_))));
    }
}
