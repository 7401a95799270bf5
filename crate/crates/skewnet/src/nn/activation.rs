//! Elementwise activations plus row-wise softmax.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    /// Row-wise over the class axis; rank-2 input only.
    Softmax,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    /// Apply to pre-activations. Softmax subtracts the row max before
    /// exponentiating, so rows stay finite for any finite logits.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Linear => Ok(z.clone()),
            Activation::Relu => Ok(z.map(|v| if v > 0.0 { v } else { 0.0 })),
            Activation::Sigmoid => Ok(z.map(sigmoid)),
            Activation::Tanh => Ok(z.map(f64::tanh)),
            Activation::Softmax => {
                if z.rank() != 2 {
                    return Err(Error::Dimension(format!(
                        "softmax expects rank-2 input, got shape {:?}",
                        z.shape
                    )));
                }
                let mut out = z.clone();
                let (n, c) = (out.rows(), out.cols());
                for i in 0..n {
                    let row = &mut out.data[i * c..(i + 1) * c];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Chain rule through the activation: `d_pre` from `d_out`, given both
    /// the cached pre-activation `z` and the cached output `y`.
    pub fn backward(&self, d_out: &Tensor, z: &Tensor, y: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Linear => Ok(d_out.clone()),
            Activation::Relu => d_out.zip(z, |d, zz| if zz > 0.0 { d } else { 0.0 }),
            Activation::Sigmoid => d_out.zip(y, |d, s| d * s * (1.0 - s)),
            Activation::Tanh => d_out.zip(y, |d, t| d * (1.0 - t * t)),
            Activation::Softmax => {
                // Full row Jacobian: dz_j = p_j * (dy_j - sum_k dy_k p_k).
                if d_out.shape != y.shape {
                    return Err(Error::Dimension("softmax backward: shape mismatch".into()));
                }
                let (n, c) = (y.rows(), y.cols());
                let mut out = Tensor::zeros(&y.shape);
                for i in 0..n {
                    let p = &y.data[i * c..(i + 1) * c];
                    let dy = &d_out.data[i * c..(i + 1) * c];
                    let dot: f64 = p.iter().zip(dy).map(|(&pj, &dj)| pj * dj).sum();
                    for j in 0..c {
                        out.data[i * c + j] = p[j] * (dy[j] - dot);
                    }
                }
                Ok(out)
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standalone activation application over a tensor.
pub fn activation_apply(values: &Tensor, kind: Activation) -> Result<Tensor> {
    kind.apply(values)
}
