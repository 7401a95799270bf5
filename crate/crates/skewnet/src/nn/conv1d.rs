//! 1-D convolution (cross-correlation) over `[N x C x L]` signals.

use crate::error::{Error, Result};
use crate::nn::init::glorot_uniform;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; requires `L >= kernel_len`.
    Valid,
    /// Zero padding so the output length is `ceil(L / stride)`.
    Same,
}

impl Padding {
    pub fn name(&self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Config(format!("unknown padding '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv1DLayer {
    /// `[out_channels x in_channels x kernel_len]`.
    pub kernels: Tensor,
    /// `[out_channels]`.
    pub bias: Tensor,
    pub stride: usize,
    pub padding: Padding,
    pub(crate) grad_kernels: Tensor,
    pub(crate) grad_bias: Tensor,
    cache: Option<Tensor>,
}

impl Conv1DLayer {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        stride: usize,
        padding: Padding,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if kernel_len == 0 || stride == 0 {
            return Err(Error::Config(
                "conv1d: kernel_len and stride must be >= 1".into(),
            ));
        }
        let fan_in = in_channels * kernel_len;
        let fan_out = out_channels * kernel_len;
        let kernels = glorot_uniform(&[out_channels, in_channels, kernel_len], fan_in, fan_out, rng);
        Ok(Self {
            kernels,
            bias: Tensor::zeros(&[out_channels]),
            stride,
            padding,
            grad_kernels: Tensor::zeros(&[out_channels, in_channels, kernel_len]),
            grad_bias: Tensor::zeros(&[out_channels]),
            cache: None,
        })
    }

    pub fn from_params(
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        if kernels.rank() != 3 || bias.rank() != 1 || bias.shape[0] != kernels.shape[0] {
            return Err(Error::Dimension(format!(
                "conv1d: kernels {:?} with bias {:?}",
                kernels.shape, bias.shape
            )));
        }
        if stride == 0 || kernels.shape[2] == 0 {
            return Err(Error::Config(
                "conv1d: kernel_len and stride must be >= 1".into(),
            ));
        }
        Ok(Self {
            grad_kernels: Tensor::zeros(&kernels.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            kernels,
            bias,
            stride,
            padding,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape[0]
    }

    pub fn kernel_len(&self) -> usize {
        self.kernels.shape[2]
    }

    /// Output length and left padding for an input of length `len`.
    fn geometry(&self, len: usize) -> Result<(usize, usize)> {
        let k = self.kernel_len();
        match self.padding {
            Padding::Valid => {
                if len < k {
                    return Err(Error::Dimension(format!(
                        "conv1d valid: input length {len} < kernel {k}"
                    )));
                }
                Ok(((len - k) / self.stride + 1, 0))
            }
            Padding::Same => {
                let out_len = len.div_ceil(self.stride);
                let needed = (out_len - 1) * self.stride + k;
                let total = needed.saturating_sub(len);
                Ok((out_len, total / 2))
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize)> {
        if input.rank() != 3 || input.shape[1] != self.in_channels() {
            return Err(Error::Dimension(format!(
                "conv1d: input {:?} vs {} in-channels",
                input.shape,
                self.in_channels()
            )));
        }
        Ok((input.shape[0], input.shape[2]))
    }

    fn run_forward(&self, input: &Tensor) -> Result<Tensor> {
        let (n, len) = self.check_input(input)?;
        let (out_len, pad_left) = self.geometry(len)?;
        let (c_out, c_in, k) = (self.out_channels(), self.in_channels(), self.kernel_len());
        let mut out = Tensor::zeros(&[n, c_out, out_len]);
        for b in 0..n {
            for co in 0..c_out {
                for t in 0..out_len {
                    let mut acc = self.bias.data[co];
                    let base = (t * self.stride) as isize - pad_left as isize;
                    for ci in 0..c_in {
                        let x_row = &input.data[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                        let k_row =
                            &self.kernels.data[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                        for (kk, &kv) in k_row.iter().enumerate() {
                            let pos = base + kk as isize;
                            if pos >= 0 && (pos as usize) < len {
                                acc += x_row[pos as usize] * kv;
                            }
                        }
                    }
                    out.data[(b * c_out + co) * out_len + t] = acc;
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.run_forward(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.run_forward(input)
    }

    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv1d backward without cached forward".into()))?;
        let (n, len) = self.check_input(input)?;
        let (out_len, pad_left) = self.geometry(len)?;
        let (c_out, c_in, k) = (self.out_channels(), self.in_channels(), self.kernel_len());
        if d_output.shape != vec![n, c_out, out_len] {
            return Err(Error::Dimension(format!(
                "conv1d backward: upstream {:?} vs [{n} x {c_out} x {out_len}]",
                d_output.shape
            )));
        }
        let mut d_input = Tensor::zeros(&input.shape);
        for b in 0..n {
            for co in 0..c_out {
                for t in 0..out_len {
                    let d = d_output.data[(b * c_out + co) * out_len + t];
                    if d == 0.0 {
                        continue;
                    }
                    self.grad_bias.data[co] += d;
                    let base = (t * self.stride) as isize - pad_left as isize;
                    for ci in 0..c_in {
                        let x_off = (b * c_in + ci) * len;
                        let k_off = (co * c_in + ci) * k;
                        for kk in 0..k {
                            let pos = base + kk as isize;
                            if pos >= 0 && (pos as usize) < len {
                                let pos = pos as usize;
                                self.grad_kernels.data[k_off + kk] +=
                                    d * input.data[x_off + pos];
                                d_input.data[x_off + pos] += d * self.kernels.data[k_off + kk];
                            }
                        }
                    }
                }
            }
        }
        Ok(d_input)
    }

    pub(crate) fn zero_grads(&mut self) {
        self.grad_kernels.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub(crate) fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor),
    ) {
        f(
            format!("{prefix}.k"),
            &mut self.kernels,
            &mut self.grad_kernels,
        );
        f(format!("{prefix}.b"), &mut self.bias, &mut self.grad_bias);
    }

    pub(crate) fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        vec![
            (&mut self.kernels, &self.grad_kernels),
            (&mut self.bias, &self.grad_bias),
        ]
    }
}
