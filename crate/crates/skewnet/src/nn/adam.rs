//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct MomentSlot {
    m: Tensor,
    v: Tensor,
}

/// First/second moment accumulators, one slot per parameter tensor in the
/// order the model yields them. The slot layout is fixed on the first step.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    slots: Vec<MomentSlot>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over `(parameter, gradient)` pairs.
    /// A non-finite gradient aborts with the parameters untouched.
    pub fn step(&mut self, mut pairs: Vec<(&mut Tensor, &Tensor)>) -> Result<()> {
        for (p, g) in &pairs {
            if p.shape != g.shape {
                return Err(Error::Dimension(format!(
                    "adam: parameter {:?} vs gradient {:?}",
                    p.shape, g.shape
                )));
            }
        }
        if self.slots.is_empty() {
            self.slots = pairs
                .iter()
                .map(|(p, _)| MomentSlot {
                    m: Tensor::zeros(&p.shape),
                    v: Tensor::zeros(&p.shape),
                })
                .collect();
        }
        if self.slots.len() != pairs.len() {
            return Err(Error::State(format!(
                "adam: {} slots for {} parameters",
                self.slots.len(),
                pairs.len()
            )));
        }
        for (_, g) in &pairs {
            if !g.is_finite() {
                return Err(Error::Numeric("adam: non-finite gradient".into()));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let cfg = self.config;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (slot, (p, g)) in self.slots.iter_mut().zip(pairs.iter_mut()) {
            for j in 0..g.data.len() {
                let grad = g.data[j];
                slot.m.data[j] = cfg.beta1 * slot.m.data[j] + (1.0 - cfg.beta1) * grad;
                slot.v.data[j] = cfg.beta2 * slot.v.data[j] + (1.0 - cfg.beta2) * grad * grad;
                let m_hat = slot.m.data[j] / bc1;
                let v_hat = slot.v.data[j] / bc2;
                p.data[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
