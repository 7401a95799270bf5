//! Training losses: class-weighted categorical cross-entropy and mean
//! squared error, each with its analytic gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clipped to `[PROB_CLIP, 1]` before any logarithm.
pub const PROB_CLIP: f64 = 1e-12;

/// Per-class positive loss multipliers. Every weight is finite and >= 1;
/// unweighted training is the all-unit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("class weights: empty".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 1.0 {
                return Err(Error::Config(format!(
                    "class weight [{i}] = {w}: weights must be finite and >= 1"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn unit(n_classes: usize) -> Self {
        Self {
            weights: vec![1.0; n_classes],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.weights[class]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_unit(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Returns a copy with one class weight replaced (clamped to >= 1).
    pub fn with_class(&self, class: usize, weight: f64) -> Result<Self> {
        let mut w = self.weights.clone();
        if class >= w.len() {
            return Err(Error::Index(format!(
                "class {class} out of range for {} weights",
                w.len()
            )));
        }
        w[class] = weight.max(1.0);
        ClassWeights::new(w)
    }

    /// Global rescale; `c >= 1` keeps the >= 1 invariant.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        ClassWeights::new(self.weights.iter().map(|w| w * c).collect())
    }
}

fn validate_probs_targets(probabilities: &Tensor, targets: &[usize]) -> Result<()> {
    if probabilities.rank() != 2 {
        return Err(Error::Dimension(format!(
            "probabilities must be [N x C], got {:?}",
            probabilities.shape
        )));
    }
    let (n, c) = (probabilities.rows(), probabilities.cols());
    if targets.len() != n {
        return Err(Error::Dimension(format!(
            "{} targets for {n} probability rows",
            targets.len()
        )));
    }
    for &t in targets {
        if t >= c {
            return Err(Error::Index(format!("target {t} >= {c} classes")));
        }
    }
    Ok(())
}

/// Mean of `weight[y_i] * (-log p_i[y_i])` over the batch.
pub fn weighted_cross_entropy(
    probabilities: &Tensor,
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<f64> {
    validate_probs_targets(probabilities, targets)?;
    let (n, c) = (probabilities.rows(), probabilities.cols());
    if weights.len() != c {
        return Err(Error::Dimension(format!(
            "{} class weights for {c} classes",
            weights.len()
        )));
    }
    for i in 0..n {
        let sum: f64 = probabilities.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "probability row {i} sums to {sum}, expected 1"
            )));
        }
    }
    let mut total = 0.0;
    for (i, &y) in targets.iter().enumerate() {
        let p = probabilities.data[i * c + y].clamp(PROB_CLIP, 1.0);
        total += weights.get(y) * (-p.ln());
    }
    Ok(total / n as f64)
}

/// Unweighted categorical cross-entropy.
pub fn cross_entropy(probabilities: &Tensor, targets: &[usize]) -> Result<f64> {
    weighted_cross_entropy(probabilities, targets, &ClassWeights::unit(probabilities.cols()))
}

/// Gradient of `weighted_cross_entropy` with respect to the probabilities.
/// Rows are zero except at the target column; clipped entries get zero
/// gradient, matching what a finite difference of the clipped loss sees.
pub fn weighted_cross_entropy_grad(
    probabilities: &Tensor,
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<Tensor> {
    validate_probs_targets(probabilities, targets)?;
    let (n, c) = (probabilities.rows(), probabilities.cols());
    if weights.len() != c {
        return Err(Error::Dimension(format!(
            "{} class weights for {c} classes",
            weights.len()
        )));
    }
    let mut grad = Tensor::zeros(&probabilities.shape);
    for (i, &y) in targets.iter().enumerate() {
        let p = probabilities.data[i * c + y];
        if p > PROB_CLIP && p <= 1.0 {
            grad.data[i * c + y] = -weights.get(y) / (n as f64 * p);
        }
    }
    Ok(grad)
}

/// Mean over all elements of squared difference.
pub fn mse(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.shape != target.shape {
        return Err(Error::Dimension(format!(
            "mse: shape {:?} vs {:?}",
            prediction.shape, target.shape
        )));
    }
    let n = prediction.numel() as f64;
    let sum: f64 = prediction
        .data
        .iter()
        .zip(&target.data)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Gradient of `mse` with respect to the prediction.
pub fn mse_grad(prediction: &Tensor, target: &Tensor) -> Result<Tensor> {
    if prediction.shape != target.shape {
        return Err(Error::Dimension(format!(
            "mse_grad: shape {:?} vs {:?}",
            prediction.shape, target.shape
        )));
    }
    let n = prediction.numel() as f64;
    prediction.zip(target, |a, b| 2.0 * (a - b) / n)
}
