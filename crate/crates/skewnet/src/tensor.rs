//! Row-major 64-bit tensors and the handful of dense linear algebra routines
//! the training code needs. Everything trains in f64 so finite-difference
//! gradient checks stay meaningful.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// Positive extents, outermost first.
    pub shape: Vec<usize>,
    /// Row-major values; `data.len() == shape.iter().product()`.
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Dimension(format!("zero extent in shape {shape:?}")));
        }
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "shape {shape:?} expects {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Build an `[N x d]` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("from_rows: no rows".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("from_rows: ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), d], data)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.cols();
        &mut self.data[i * d..(i + 1) * d]
    }

    /// Same data reinterpreted under a different shape.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "zip: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "add_assign: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self [n x k] * rhs [k x m] -> [n x m]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = (self.rows(), self.cols());
        let (k2, m) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul: [{n} x {k}] * [{k2} x {m}]"
            )));
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * m..(i + 1) * m];
            for (kk, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[kk * m..(kk + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += aik * b;
                }
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// `self^T [k x n]^T=[n x k] ... transpose(self) * rhs`: with
    /// `self [n x p]` and `rhs [n x q]` returns `[p x q]`.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, p) = (self.rows(), self.cols());
        let (n2, q) = (rhs.rows(), rhs.cols());
        if n != n2 {
            return Err(Error::Dimension(format!(
                "matmul_tn: [{n} x {p}]^T * [{n2} x {q}]"
            )));
        }
        let mut out = vec![0.0; p * q];
        for i in 0..n {
            let a_row = &self.data[i * p..(i + 1) * p];
            let b_row = &rhs.data[i * q..(i + 1) * q];
            for (pp, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[pp * q..(pp + 1) * q];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![p, q], out)
    }

    /// `self * transpose(rhs)`: with `self [n x m]` and `rhs [p x m]`
    /// returns `[n x p]`.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, m) = (self.rows(), self.cols());
        let (p, m2) = (rhs.rows(), rhs.cols());
        if m != m2 {
            return Err(Error::Dimension(format!(
                "matmul_nt: [{n} x {m}] * [{p} x {m2}]^T"
            )));
        }
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let a_row = &self.data[i * m..(i + 1) * m];
            for j in 0..p {
                let b_row = &rhs.data[j * m..(j + 1) * m];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out[i * p + j] = acc;
            }
        }
        Tensor::new(vec![n, p], out)
    }

    /// Add a bias vector to every row of a rank-2 tensor.
    pub fn add_bias_rows(&mut self, bias: &[f64]) -> Result<()> {
        let (n, m) = (self.rows(), self.cols());
        if bias.len() != m {
            return Err(Error::Dimension(format!(
                "bias length {} vs width {m}",
                bias.len()
            )));
        }
        for i in 0..n {
            for (v, &b) in self.data[i * m..(i + 1) * m].iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums of a rank-2 tensor, e.g. bias gradients.
    pub fn sum_rows(&self) -> Vec<f64> {
        let (n, m) = (self.rows(), self.cols());
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(&self.data[i * m..(i + 1) * m]) {
                *o += v;
            }
        }
        out
    }
}
