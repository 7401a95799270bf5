//! Finite-difference gradient checking.
//!
//! A `GradTarget` is anything with parameters, a deterministic scalar
//! objective, and an analytic gradient pass. The checker perturbs every
//! parameter element with central differences and reports the worst
//! relative disagreement per parameter tensor.

use crate::error::Result;
use crate::tensor::Tensor;

/// Floor in the relative-error denominator so near-zero gradient pairs do
/// not divide by zero.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Default central-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-5;

pub trait GradTarget {
    /// Deterministic objective at the current parameters. May use internal
    /// caches but must not change parameters or external state.
    fn objective(&mut self) -> Result<f64>;

    /// Zero gradients, then run forward and backward once so analytic
    /// gradients are populated.
    fn compute_gradients(&mut self) -> Result<()>;

    /// Visit `(name, parameter, gradient)` in a stable order.
    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor));
}

/// Worst relative error per parameter tensor, plus the global maximum.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub per_param: Vec<(String, f64)>,
    pub global_max: f64,
    /// Name of the parameter holding the global maximum, when any exist.
    pub worst_param: Option<String>,
}

impl GradReport {
    fn from_pairs(pairs: &[(String, Tensor, Tensor)]) -> Self {
        let mut per_param = Vec::with_capacity(pairs.len());
        let mut global_max = 0.0;
        let mut worst_param = None;
        for (name, analytic, numeric) in pairs {
            let mut worst = 0.0;
            for (&a, &n) in analytic.data.iter().zip(&numeric.data) {
                let denom = a.abs().max(n.abs()).max(REL_ERR_FLOOR);
                let err = (a - n).abs() / denom;
                if err > worst {
                    worst = err;
                }
            }
            if worst > global_max {
                global_max = worst;
                worst_param = Some(name.clone());
            }
            per_param.push((name.clone(), worst));
        }
        GradReport {
            per_param,
            global_max,
            worst_param,
        }
    }
}

fn param_layout(target: &mut dyn GradTarget) -> Vec<(String, usize)> {
    let mut layout = Vec::new();
    target.visit_params(&mut |name, p, _| layout.push((name, p.data.len())));
    layout
}

fn read_param(target: &mut dyn GradTarget, tensor_idx: usize, elem: usize) -> f64 {
    let mut value = 0.0;
    let mut i = 0;
    target.visit_params(&mut |_, p, _| {
        if i == tensor_idx {
            value = p.data[elem];
        }
        i += 1;
    });
    value
}

fn write_param(target: &mut dyn GradTarget, tensor_idx: usize, elem: usize, value: f64) {
    let mut i = 0;
    target.visit_params(&mut |_, p, _| {
        if i == tensor_idx {
            p.data[elem] = value;
        }
        i += 1;
    });
}

/// Analytic gradients as owned tensors, in visit order.
pub fn analytic_gradients(target: &mut dyn GradTarget) -> Result<Vec<(String, Tensor)>> {
    target.compute_gradients()?;
    let mut grads = Vec::new();
    target.visit_params(&mut |name, _, g| grads.push((name, g.clone())));
    Ok(grads)
}

/// Central-difference gradients at step `epsilon`, in visit order.
pub fn numeric_gradients(
    target: &mut dyn GradTarget,
    epsilon: f64,
) -> Result<Vec<(String, Tensor)>> {
    let layout = param_layout(target);
    let mut shapes = Vec::new();
    target.visit_params(&mut |_, p, _| shapes.push(p.shape.clone()));
    let mut out = Vec::with_capacity(layout.len());
    for (idx, (name, len)) in layout.iter().enumerate() {
        let mut grad = Tensor::zeros(&shapes[idx]);
        for elem in 0..*len {
            let original = read_param(target, idx, elem);
            write_param(target, idx, elem, original + epsilon);
            let plus = target.objective()?;
            write_param(target, idx, elem, original - epsilon);
            let minus = target.objective()?;
            write_param(target, idx, elem, original);
            grad.data[elem] = (plus - minus) / (2.0 * epsilon);
        }
        out.push((name.clone(), grad));
    }
    Ok(out)
}

/// Compare two gradient sets (same order) into a report.
pub fn report_from(
    analytic: &[(String, Tensor)],
    numeric: &[(String, Tensor)],
) -> GradReport {
    let pairs: Vec<(String, Tensor, Tensor)> = analytic
        .iter()
        .zip(numeric)
        .map(|((name, a), (_, n))| (name.clone(), a.clone(), n.clone()))
        .collect();
    GradReport::from_pairs(&pairs)
}

/// Full check: analytic vs central finite differences on every parameter.
pub fn gradient_check(target: &mut dyn GradTarget, epsilon: f64) -> Result<GradReport> {
    let analytic = analytic_gradients(target)?;
    let numeric = numeric_gradients(target, epsilon)?;
    Ok(report_from(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;

    /// Quadratic toy model: objective = sum(w_i^2 * c_i), gradient 2 c w.
    struct Quadratic {
        w: Tensor,
        g: Tensor,
        c: Vec<f64>,
        scale: f64,
    }

    impl GradTarget for Quadratic {
        fn objective(&mut self) -> Result<f64> {
            Ok(self
                .w
                .data
                .iter()
                .zip(&self.c)
                .map(|(&w, &c)| c * w * w)
                .sum())
        }

        fn compute_gradients(&mut self) -> Result<()> {
            for j in 0..self.w.data.len() {
                self.g.data[j] = self.scale * 2.0 * self.c[j] * self.w.data[j];
            }
            Ok(())
        }

        fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {
            f("w".into(), &mut self.w, &mut self.g);
        }
    }

    fn quadratic(scale: f64) -> Quadratic {
        Quadratic {
            w: Tensor::new(vec![3], vec![0.3, -0.8, 1.2]).unwrap(),
            g: Tensor::zeros(&[3]),
            c: vec![1.0, 2.5, 0.5],
            scale,
        }
    }

    #[test]
    fn correct_gradient_passes() {
        let mut model = quadratic(1.0);
        let report = gradient_check(&mut model, 1e-5).unwrap();
        assert!(report.global_max < 1e-4, "max {}", report.global_max);
    }

    #[test]
    fn scaled_gradient_is_flagged() {
        let mut model = quadratic(1.1);
        let report = gradient_check(&mut model, 1e-5).unwrap();
        assert!(report.global_max > 1e-2, "max {}", report.global_max);
    }

    struct ParamFree;

    impl GradTarget for ParamFree {
        fn objective(&mut self) -> Result<f64> {
            Ok(0.0)
        }
        fn compute_gradients(&mut self) -> Result<()> {
            Ok(())
        }
        fn visit_params(&mut self, _f: &mut dyn FnMut(String, &mut Tensor, &mut Tensor)) {}
    }

    #[test]
    fn model_without_parameters_gives_empty_report() {
        let report = gradient_check(&mut ParamFree, 1e-5).unwrap();
        assert!(report.per_param.is_empty());
        assert_eq!(report.global_max, 0.0);
        assert!(report.worst_param.is_none());
    }
}
