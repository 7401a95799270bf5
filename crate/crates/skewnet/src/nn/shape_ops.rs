//! Parameter-free plumbing layers: per-row reshape and sequence-end
//! extraction for recurrent stacks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reinterprets each row of an `[N x d]` batch under a new per-row shape
/// with the same element count (row-major data is untouched).
#[derive(Debug, Clone)]
pub struct Reshape {
    pub row_shape: Vec<usize>,
    cached_in_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(row_shape: Vec<usize>) -> Self {
        Self {
            row_shape,
            cached_in_shape: None,
        }
    }

    fn out_shape(&self, input: &Tensor) -> Result<Vec<usize>> {
        let per_row: usize = input.shape[1..].iter().product();
        let target: usize = self.row_shape.iter().product();
        if per_row != target {
            return Err(Error::Dimension(format!(
                "reshape: {per_row} elements per row vs target {:?}",
                self.row_shape
            )));
        }
        let mut shape = vec![input.shape[0]];
        shape.extend_from_slice(&self.row_shape);
        Ok(shape)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let shape = self.out_shape(input)?;
        self.cached_in_shape = Some(input.shape.clone());
        input.reshaped(shape)
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let shape = self.out_shape(input)?;
        input.reshaped(shape)
    }

    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let shape = self
            .cached_in_shape
            .clone()
            .ok_or_else(|| Error::State("reshape backward without cached forward".into()))?;
        d_output.reshaped(shape)
    }
}

/// Reduces an `[N x T x W]` sequence to `[N x W]` by taking each direction's
/// final state: the first half of the feature axis at the last timestep and
/// the second half at the first timestep. For unidirectional output
/// (`halves = 1`) the whole last timestep is taken.
#[derive(Debug, Clone)]
pub struct SequenceEnds {
    pub halves: usize,
    cached_in_shape: Option<Vec<usize>>,
}

impl SequenceEnds {
    pub fn new(halves: usize) -> Self {
        debug_assert!(halves == 1 || halves == 2);
        Self {
            halves,
            cached_in_shape: None,
        }
    }

    fn check(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        if input.rank() != 3 {
            return Err(Error::Dimension(format!(
                "sequence ends: expected [N x T x W], got {:?}",
                input.shape
            )));
        }
        let (n, t, w) = (input.shape[0], input.shape[1], input.shape[2]);
        if self.halves == 2 && w % 2 != 0 {
            return Err(Error::Dimension(format!(
                "sequence ends: width {w} not divisible by 2"
            )));
        }
        Ok((n, t, w))
    }

    fn extract(&self, input: &Tensor) -> Result<Tensor> {
        let (n, t, w) = self.check(input)?;
        let mut out = Tensor::zeros(&[n, w]);
        let half = w / self.halves;
        for b in 0..n {
            let last = (b * t + (t - 1)) * w;
            let first = b * t * w;
            out.row_mut(b)[..half].copy_from_slice(&input.data[last..last + half]);
            if self.halves == 2 {
                out.row_mut(b)[half..].copy_from_slice(&input.data[first + half..first + w]);
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.extract(input)?;
        self.cached_in_shape = Some(input.shape.clone());
        Ok(out)
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.extract(input)
    }

    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let shape = self
            .cached_in_shape
            .clone()
            .ok_or_else(|| Error::State("sequence ends backward without cached forward".into()))?;
        let (n, t, w) = (shape[0], shape[1], shape[2]);
        if d_output.shape != vec![n, w] {
            return Err(Error::Dimension(format!(
                "sequence ends backward: upstream {:?} vs [{n} x {w}]",
                d_output.shape
            )));
        }
        let half = w / self.halves;
        let mut d_input = Tensor::zeros(&shape);
        for b in 0..n {
            let last = (b * t + (t - 1)) * w;
            let first = b * t * w;
            d_input.data[last..last + half].copy_from_slice(&d_output.row(b)[..half]);
            if self.halves == 2 {
                d_input.data[first + half..first + w].copy_from_slice(&d_output.row(b)[half..]);
            }
        }
        Ok(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_keeps_data_and_changes_shape() {
        let mut r = Reshape::new(vec![3, 1]);
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = r.forward(&x).unwrap();
        assert_eq!(y.shape, vec![2, 3, 1]);
        assert_eq!(y.data, x.data);
        let back = r.backward(&y).unwrap();
        assert_eq!(back.shape, x.shape);
    }

    #[test]
    fn sequence_ends_takes_both_final_states() {
        // One sample, T = 3, width 4 (two halves of 2).
        let x = Tensor::new(
            vec![1, 3, 4],
            vec![
                1.0, 2.0, 30.0, 40.0, // t = 0
                5.0, 6.0, 7.0, 8.0, // t = 1
                9.0, 10.0, 11.0, 12.0, // t = 2
            ],
        )
        .unwrap();
        let mut s = SequenceEnds::new(2);
        let y = s.forward(&x).unwrap();
        // Forward half from t = 2, backward half from t = 0.
        assert_eq!(y.data, vec![9.0, 10.0, 30.0, 40.0]);
        let d = s
            .backward(&Tensor::new(vec![1, 4], vec![1.0, 1.0, 2.0, 2.0]).unwrap())
            .unwrap();
        assert_eq!(
            d.data,
            vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
        );
    }
}
