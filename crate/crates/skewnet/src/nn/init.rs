//! Weight initialization. He-style fan-in scaling for relu layers,
//! Glorot-style for everything else (linear, sigmoid, tanh, softmax, gates).

use crate::nn::activation::Activation;
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    uniform(shape, limit, rng)
}

pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}

pub fn dense_init(
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    rng: &mut RngStream,
) -> (Tensor, Tensor) {
    let w = match activation {
        Activation::Relu => he_uniform(&[in_dim, out_dim], in_dim, rng),
        _ => glorot_uniform(&[in_dim, out_dim], in_dim, out_dim, rng),
    };
    (w, Tensor::zeros(&[out_dim]))
}

fn uniform(shape: &[usize], limit: f64, rng: &mut RngStream) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
