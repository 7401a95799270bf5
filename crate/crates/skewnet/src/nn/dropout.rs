//! Inverted dropout: survivors are rescaled by `1/(1-rate)` at train time so
//! eval mode is an exact identity.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct DropoutLayer {
    pub rate: f64,
    pub mode: Mode,
    mask: Option<Tensor>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !rate.is_finite() || !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate {rate} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            rate,
            mode: Mode::Eval,
            mask: None,
        })
    }

    /// Train mode zeroes each element with probability `rate` and scales
    /// survivors; eval mode returns the input bit for bit.
    pub fn forward(&mut self, input: &Tensor, rng: Option<&mut RngStream>) -> Result<Tensor> {
        match self.mode {
            Mode::Eval => {
                self.mask = None;
                Ok(input.clone())
            }
            Mode::Train => {
                if self.rate == 0.0 {
                    self.mask = None;
                    return Ok(input.clone());
                }
                let rng =
                    rng.ok_or_else(|| Error::State("dropout train mode needs an rng".into()))?;
                let keep_scale = 1.0 / (1.0 - self.rate);
                let mask = Tensor {
                    shape: input.shape.clone(),
                    data: (0..input.numel())
                        .map(|_| {
                            if rng.uniform() < self.rate {
                                0.0
                            } else {
                                keep_scale
                            }
                        })
                        .collect(),
                };
                let out = input.zip(&mask, |x, m| x * m)?;
                self.mask = Some(mask);
                Ok(out)
            }
        }
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(input.clone())
    }

    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        match &self.mask {
            Some(mask) => d_output.zip(mask, |d, m| d * m),
            None => Ok(d_output.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_train_is_identity() {
        let mut layer = DropoutLayer::new(0.0).unwrap();
        layer.mode = Mode::Train;
        let x = Tensor::new(vec![1, 4], vec![1.0, -2.0, 3.0, 4.5]).unwrap();
        let mut rng = RngStream::new(1);
        let y = layer.forward(&x, Some(&mut rng)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn eval_mode_is_bit_identical() {
        let mut layer = DropoutLayer::new(0.3).unwrap();
        layer.mode = Mode::Eval;
        let x = Tensor::new(vec![1, 3], vec![0.1, -0.2, 1e300]).unwrap();
        let y = layer.forward(&x, None).unwrap();
        for (a, b) in x.data.iter().zip(&y.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rate_one_is_rejected() {
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(1.5).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }

    #[test]
    fn half_rate_preserves_mean_within_two_percent() {
        let mut layer = DropoutLayer::new(0.5).unwrap();
        layer.mode = Mode::Train;
        let n = 100_000;
        let x = Tensor::filled(&[1, n], 1.0);
        let mut rng = RngStream::new(77);
        let y = layer.forward(&x, Some(&mut rng)).unwrap();
        let mean = y.data.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn backward_reuses_the_forward_mask() {
        let mut layer = DropoutLayer::new(0.5).unwrap();
        layer.mode = Mode::Train;
        let x = Tensor::filled(&[1, 64], 1.0);
        let mut rng = RngStream::new(3);
        let y = layer.forward(&x, Some(&mut rng)).unwrap();
        let d = layer.backward(&Tensor::filled(&[1, 64], 1.0)).unwrap();
        // Zeroed positions stay zeroed, survivors carry the same scale.
        for (fwd, back) in y.data.iter().zip(&d.data) {
            assert_eq!(fwd.to_bits(), back.to_bits());
        }
    }
}
