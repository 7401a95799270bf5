//! LSTM layer over `[N x T x F]` sequences, forward-only or bidirectional.
//!
//! Standard gate equations: sigmoid input/forget/output gates, tanh cell
//! candidate, zero initial hidden and cell state. The bidirectional variant
//! runs an independent parameter set over the reversed sequence and
//! concatenates both directions per timestep.

use crate::error::{Error, Result};
use crate::nn::activation::sigmoid;
use crate::nn::init::glorot_uniform;
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const GATE_NAMES: [&str; 4] = ["i", "f", "g", "o"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Bidirectional,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Bidirectional => "bidirectional",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "bidirectional" => Ok(Direction::Bidirectional),
            other => Err(Error::Config(format!("unknown lstm direction '{other}'"))),
        }
    }
}

/// One direction's parameters. Gate order everywhere is i, f, g, o.
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// Input-to-hidden weights, each `[F x H]`.
    pub w_x: [Tensor; 4],
    /// Hidden-to-hidden weights, each `[H x H]`.
    pub w_h: [Tensor; 4],
    /// Gate biases, each `[H]`.
    pub bias: [Tensor; 4],
    grad_w_x: [Tensor; 4],
    grad_w_h: [Tensor; 4],
    grad_bias: [Tensor; 4],
}

impl LstmCell {
    fn new(features: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let w_x = std::array::from_fn(|_| glorot_uniform(&[features, hidden], features, hidden, rng));
        let w_h = std::array::from_fn(|_| glorot_uniform(&[hidden, hidden], hidden, hidden, rng));
        let mut bias: [Tensor; 4] = std::array::from_fn(|_| Tensor::zeros(&[hidden]));
        // Forget gate bias starts at 1 so early training does not erase state.
        bias[1].fill(1.0);
        Self {
            grad_w_x: std::array::from_fn(|_| Tensor::zeros(&[features, hidden])),
            grad_w_h: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            grad_bias: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
            w_x,
            w_h,
            bias,
        }
    }

    fn zeroed_like(features: usize, hidden: usize) -> Self {
        Self {
            w_x: std::array::from_fn(|_| Tensor::zeros(&[features, hidden])),
            w_h: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            bias: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
            grad_w_x: std::array::from_fn(|_| Tensor::zeros(&[features, hidden])),
            grad_w_h: std::array::from_fn(|_| Tensor::zeros(&[hidden, hidden])),
            grad_bias: std::array::from_fn(|_| Tensor::zeros(&[hidden])),
        }
    }

    fn zero_grads(&mut self) {
        for g in self
            .grad_w_x
            .iter_mut()
            .chain(self.grad_w_h.iter_mut())
            .chain(self.grad_bias.iter_mut())
        {
            g.fill(0.0);
        }
    }
}

/// Per-timestep activations cached by one direction's forward pass.
#[derive(Debug, Clone)]
struct CellTrace {
    xs: Vec<Tensor>,
    gates: Vec<[Tensor; 4]>,
    cells: Vec<Tensor>,
    tanh_cells: Vec<Tensor>,
    hiddens: Vec<Tensor>,
}

fn cell_forward(cell: &LstmCell, xs: &[Tensor], hidden: usize) -> Result<CellTrace> {
    let n = xs[0].rows();
    let mut h_prev = Tensor::zeros(&[n, hidden]);
    let mut c_prev = Tensor::zeros(&[n, hidden]);
    let mut trace = CellTrace {
        xs: xs.to_vec(),
        gates: Vec::with_capacity(xs.len()),
        cells: Vec::with_capacity(xs.len()),
        tanh_cells: Vec::with_capacity(xs.len()),
        hiddens: Vec::with_capacity(xs.len()),
    };
    for x in xs {
        let mut acts: Vec<Tensor> = Vec::with_capacity(4);
        for gate in 0..4 {
            let mut z = x.matmul(&cell.w_x[gate])?;
            z.add_assign(&h_prev.matmul(&cell.w_h[gate])?)?;
            z.add_bias_rows(&cell.bias[gate].data)?;
            let act = match gate {
                2 => z.map(f64::tanh),
                _ => z.map(sigmoid),
            };
            acts.push(act);
        }
        let [i, f, g, o] = [&acts[0], &acts[1], &acts[2], &acts[3]];
        let c = f.zip(&c_prev, |fv, cv| fv * cv)?.zip(
            &i.zip(g, |iv, gv| iv * gv)?,
            |a, b| a + b,
        )?;
        let tanh_c = c.map(f64::tanh);
        let h = o.zip(&tanh_c, |ov, tv| ov * tv)?;
        h_prev = h.clone();
        c_prev = c.clone();
        trace.gates.push([
            acts[0].clone(),
            acts[1].clone(),
            acts[2].clone(),
            acts[3].clone(),
        ]);
        trace.cells.push(c);
        trace.tanh_cells.push(tanh_c);
        trace.hiddens.push(h);
    }
    Ok(trace)
}

/// Backpropagation through time for one direction; `d_hidden[t]` is the
/// gradient arriving at `h_t` from the layer output. Accumulates parameter
/// gradients into `cell` and returns per-timestep input gradients.
fn cell_backward(
    cell: &mut LstmCell,
    trace: &CellTrace,
    d_hidden: &[Tensor],
    hidden: usize,
) -> Result<Vec<Tensor>> {
    let steps = trace.xs.len();
    let n = trace.xs[0].rows();
    let mut d_x: Vec<Tensor> = trace.xs.iter().map(|x| Tensor::zeros(&x.shape)).collect();
    let mut dh_carry = Tensor::zeros(&[n, hidden]);
    let mut dc_carry = Tensor::zeros(&[n, hidden]);
    for t in (0..steps).rev() {
        let [i, f, g, o] = [
            &trace.gates[t][0],
            &trace.gates[t][1],
            &trace.gates[t][2],
            &trace.gates[t][3],
        ];
        let tanh_c = &trace.tanh_cells[t];
        let dh = d_hidden[t].zip(&dh_carry, |a, b| a + b)?;
        // dc accumulates the carry plus the path through h = o * tanh(c).
        let mut dc = dh.zip(o, |d, ov| d * ov)?;
        dc = dc.zip(tanh_c, |d, tc| d * (1.0 - tc * tc))?;
        dc.add_assign(&dc_carry)?;

        let c_prev = if t == 0 {
            Tensor::zeros(&[n, hidden])
        } else {
            trace.cells[t - 1].clone()
        };
        let d_o = dh.zip(tanh_c, |d, tc| d * tc)?;
        let d_i = dc.zip(g, |d, gv| d * gv)?;
        let d_g = dc.zip(i, |d, iv| d * iv)?;
        let d_f = dc.zip(&c_prev, |d, cv| d * cv)?;
        dc_carry = dc.zip(f, |d, fv| d * fv)?;

        // Pre-activation gradients per gate.
        let dz = [
            d_i.zip(i, |d, v| d * v * (1.0 - v))?,
            d_f.zip(f, |d, v| d * v * (1.0 - v))?,
            d_g.zip(g, |d, v| d * (1.0 - v * v))?,
            d_o.zip(o, |d, v| d * v * (1.0 - v))?,
        ];

        let h_prev = if t == 0 {
            Tensor::zeros(&[n, hidden])
        } else {
            trace.hiddens[t - 1].clone()
        };
        dh_carry = Tensor::zeros(&[n, hidden]);
        for gate in 0..4 {
            cell.grad_w_x[gate].add_assign(&trace.xs[t].matmul_tn(&dz[gate])?)?;
            cell.grad_w_h[gate].add_assign(&h_prev.matmul_tn(&dz[gate])?)?;
            let db = dz[gate].sum_rows();
            for (gb, d) in cell.grad_bias[gate].data.iter_mut().zip(&db) {
                *gb += d;
            }
            dh_carry.add_assign(&dz[gate].matmul_nt(&cell.w_h[gate])?)?;
            d_x[t].add_assign(&dz[gate].matmul_nt(&cell.w_x[gate])?)?;
        }
    }
    Ok(d_x)
}

#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub hidden_size: usize,
    pub direction: Direction,
    pub forward_cell: LstmCell,
    pub backward_cell: Option<LstmCell>,
    features: usize,
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    fwd: CellTrace,
    bwd: Option<CellTrace>,
    steps: usize,
    batch: usize,
}

impl LstmLayer {
    pub fn new(
        features: usize,
        hidden_size: usize,
        direction: Direction,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if features == 0 || hidden_size == 0 {
            return Err(Error::Config("lstm: zero feature or hidden size".into()));
        }
        let backward_cell = match direction {
            Direction::Forward => None,
            Direction::Bidirectional => Some(LstmCell::new(features, hidden_size, rng)),
        };
        Ok(Self {
            forward_cell: LstmCell::new(features, hidden_size, rng),
            backward_cell,
            hidden_size,
            direction,
            features,
            cache: None,
        })
    }

    /// All-zero parameters; used when loading checkpoints.
    pub fn zeroed(features: usize, hidden_size: usize, direction: Direction) -> Self {
        let backward_cell = match direction {
            Direction::Forward => None,
            Direction::Bidirectional => Some(LstmCell::zeroed_like(features, hidden_size)),
        };
        Self {
            forward_cell: LstmCell::zeroed_like(features, hidden_size),
            backward_cell,
            hidden_size,
            direction,
            features,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// H for forward-only, 2H for bidirectional.
    pub fn out_width(&self) -> usize {
        match self.direction {
            Direction::Forward => self.hidden_size,
            Direction::Bidirectional => 2 * self.hidden_size,
        }
    }

    /// Split `[N x T x F]` into T matrices of `[N x F]`.
    fn slice_steps(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        if input.rank() != 3 || input.shape[2] != self.features {
            return Err(Error::Dimension(format!(
                "lstm: input {:?} vs {} features",
                input.shape, self.features
            )));
        }
        let (n, steps, f) = (input.shape[0], input.shape[1], input.shape[2]);
        let mut xs = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut data = Vec::with_capacity(n * f);
            for b in 0..n {
                let off = (b * steps + t) * f;
                data.extend_from_slice(&input.data[off..off + f]);
            }
            xs.push(Tensor::new(vec![n, f], data)?);
        }
        Ok(xs)
    }

    fn assemble_output(&self, fwd: &CellTrace, bwd: Option<&CellTrace>, n: usize, steps: usize) -> Tensor {
        let h = self.hidden_size;
        let width = self.out_width();
        let mut out = Tensor::zeros(&[n, steps, width]);
        for t in 0..steps {
            for b in 0..n {
                let off = (b * steps + t) * width;
                out.data[off..off + h].copy_from_slice(&fwd.hiddens[t].row(b));
                if let Some(bwd) = bwd {
                    // Backward trace step tau processed original timestep
                    // steps-1-tau; align it back to t.
                    out.data[off + h..off + 2 * h]
                        .copy_from_slice(&bwd.hiddens[steps - 1 - t].row(b));
                }
            }
        }
        out
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let xs = self.slice_steps(input)?;
        let (n, steps) = (input.shape[0], input.shape[1]);
        let fwd = cell_forward(&self.forward_cell, &xs, self.hidden_size)?;
        let bwd = match &self.backward_cell {
            Some(cell) => {
                let mut rev = xs.clone();
                rev.reverse();
                Some(cell_forward(cell, &rev, self.hidden_size)?)
            }
            None => None,
        };
        let out = self.assemble_output(&fwd, bwd.as_ref(), n, steps);
        self.cache = Some(LstmCache {
            fwd,
            bwd,
            steps,
            batch: n,
        });
        Ok(out)
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let xs = self.slice_steps(input)?;
        let (n, steps) = (input.shape[0], input.shape[1]);
        let fwd = cell_forward(&self.forward_cell, &xs, self.hidden_size)?;
        let bwd = match &self.backward_cell {
            Some(cell) => {
                let mut rev = xs.clone();
                rev.reverse();
                Some(cell_forward(cell, &rev, self.hidden_size)?)
            }
            None => None,
        };
        Ok(self.assemble_output(&fwd, bwd.as_ref(), n, steps))
    }

    pub fn backward(&mut self, d_output: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("lstm backward without cached forward".into()))?;
        let (n, steps, h) = (cache.batch, cache.steps, self.hidden_size);
        let width = self.out_width();
        if d_output.shape != vec![n, steps, width] {
            return Err(Error::Dimension(format!(
                "lstm backward: upstream {:?} vs [{n} x {steps} x {width}]",
                d_output.shape
            )));
        }
        // Split upstream gradient into per-direction, per-step [N x H] slices.
        let mut d_h_fwd = vec![Tensor::zeros(&[n, h]); steps];
        let mut d_h_bwd = vec![Tensor::zeros(&[n, h]); steps];
        for t in 0..steps {
            for b in 0..n {
                let off = (b * steps + t) * width;
                d_h_fwd[t].row_mut(b).copy_from_slice(&d_output.data[off..off + h]);
                if width == 2 * h {
                    // Output position t holds the backward trace's step
                    // steps-1-t.
                    d_h_bwd[steps - 1 - t]
                        .row_mut(b)
                        .copy_from_slice(&d_output.data[off + h..off + 2 * h]);
                }
            }
        }
        let d_x_fwd = cell_backward(&mut self.forward_cell, &cache.fwd, &d_h_fwd, h)?;
        let mut d_input = Tensor::zeros(&[n, steps, self.features]);
        let f = self.features;
        for t in 0..steps {
            for b in 0..n {
                let off = (b * steps + t) * f;
                for (dst, &src) in d_input.data[off..off + f].iter_mut().zip(d_x_fwd[t].row(b)) {
                    *dst += src;
                }
            }
        }
        if let (Some(cell), Some(trace)) = (&mut self.backward_cell, &cache.bwd) {
            let d_x_bwd = cell_backward(cell, trace, &d_h_bwd, h)?;
            // Trace step tau corresponds to original timestep steps-1-tau.
            for (tau, dx) in d_x_bwd.iter().enumerate() {
                let t = steps - 1 - tau;
                for b in 0..n {
                    let off = (b * steps + t) * f;
                    for (dst, &src) in d_input.data[off..off + f].iter_mut().zip(dx.row(b)) {
                        *dst += src;
                    }
                }
            }
        }
        Ok(d_input)
    }

    pub(crate) fn zero_grads(&mut self) {
        self.forward_cell.zero_grads();
        if let Some(cell) = &mut self.backward_cell {
            cell.zero_grads();
        }
    }

    pub(crate) fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor),
    ) {
        visit_cell(&mut self.forward_cell, &format!("{prefix}.fwd"), f);
        if let Some(cell) = &mut self.backward_cell {
            visit_cell(cell, &format!("{prefix}.bwd"), f);
        }
    }

    pub(crate) fn param_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut pairs = cell_pairs(&mut self.forward_cell);
        if let Some(cell) = &mut self.backward_cell {
            pairs.extend(cell_pairs(cell));
        }
        pairs
    }
}

fn visit_cell(
    cell: &mut LstmCell,
    prefix: &str,
    f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor),
) {
    for gate in 0..4 {
        f(
            format!("{prefix}.wx_{}", GATE_NAMES[gate]),
            &mut cell.w_x[gate],
            &mut cell.grad_w_x[gate],
        );
    }
    for gate in 0..4 {
        f(
            format!("{prefix}.wh_{}", GATE_NAMES[gate]),
            &mut cell.w_h[gate],
            &mut cell.grad_w_h[gate],
        );
    }
    for gate in 0..4 {
        f(
            format!("{prefix}.b_{}", GATE_NAMES[gate]),
            &mut cell.bias[gate],
            &mut cell.grad_bias[gate],
        );
    }
}

fn cell_pairs(cell: &mut LstmCell) -> Vec<(&mut Tensor, &Tensor)> {
    let LstmCell {
        w_x,
        w_h,
        bias,
        grad_w_x,
        grad_w_h,
        grad_bias,
    } = cell;
    let mut pairs: Vec<(&mut Tensor, &Tensor)> = Vec::with_capacity(12);
    for (p, g) in w_x.iter_mut().zip(grad_w_x.iter()) {
        pairs.push((p, g));
    }
    for (p, g) in w_h.iter_mut().zip(grad_w_h.iter()) {
        pairs.push((p, g));
    }
    for (p, g) in bias.iter_mut().zip(grad_bias.iter()) {
        pairs.push((p, g));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_produce_zero_output() {
        // All-zero gates: i = f = o = 0.5, g = tanh(0) = 0, so c stays 0 and
        // h = 0.5 * tanh(0) = 0 at every step.
        let mut layer = LstmLayer::zeroed(3, 4, Direction::Bidirectional);
        layer.forward_cell.bias[1].fill(0.0);
        let x = Tensor::new(vec![2, 5, 3], (0..30).map(|v| v as f64 * 0.1).collect()).unwrap();
        let y = layer.infer(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bidirectional_output_shape() {
        let mut rng = RngStream::new(1);
        let layer = LstmLayer::new(3, 6, Direction::Bidirectional, &mut rng).unwrap();
        let x = Tensor::zeros(&[4, 5, 3]);
        assert_eq!(layer.infer(&x).unwrap().shape, vec![4, 5, 12]);
    }

    #[test]
    fn forward_only_output_shape() {
        let mut rng = RngStream::new(1);
        let layer = LstmLayer::new(2, 5, Direction::Forward, &mut rng).unwrap();
        let x = Tensor::zeros(&[3, 4, 2]);
        assert_eq!(layer.infer(&x).unwrap().shape, vec![3, 4, 5]);
    }

    #[test]
    fn feature_mismatch_is_dimension_error() {
        let mut rng = RngStream::new(1);
        let layer = LstmLayer::new(3, 4, Direction::Forward, &mut rng).unwrap();
        let x = Tensor::zeros(&[2, 5, 7]);
        assert!(matches!(layer.infer(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn bidirectional_halves_swap_under_sequence_reversal() {
        // Reversing the input sequence swaps the roles of the two directions
        // when both cells share parameters.
        let mut rng = RngStream::new(9);
        let mut layer = LstmLayer::new(2, 3, Direction::Bidirectional, &mut rng).unwrap();
        layer.backward_cell = Some(layer.forward_cell.clone());
        let x = Tensor::new(vec![1, 4, 2], (0..8).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let mut rev_data = Vec::new();
        for t in (0..4).rev() {
            rev_data.extend_from_slice(&x.data[t * 2..(t + 1) * 2]);
        }
        let x_rev = Tensor::new(vec![1, 4, 2], rev_data).unwrap();
        let y = layer.infer(&x).unwrap();
        let y_rev = layer.infer(&x_rev).unwrap();
        let h = 3;
        for t in 0..4 {
            for j in 0..h {
                let fwd = y.data[t * 2 * h + j];
                let bwd_rev = y_rev.data[(3 - t) * 2 * h + h + j];
                assert!((fwd - bwd_rev).abs() < 1e-12);
            }
        }
    }
}
