//! Iterative per-class weight search. Starting from an integer weight `a`
//! on one minority class (all others at 1), each candidate is trained and
//! scored on a validation split; the weight steps down by alpha when the
//! majority classes degrade, up by beta otherwise, until the objective
//! stops improving. The all-unit baseline is always candidate zero and the
//! best-scoring candidate ever seen is returned, so the result never falls
//! below the baseline.

use crate::classifier::{build_classifier, predict, train_classifier, ArchitectureSpec, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{confusion, per_class_metrics, MetricsReport};
use crate::nn::ClassWeights;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSearchConfig {
    /// Starting weight `a` for each searched class; integer-valued, > 1.
    pub initial: f64,
    /// Step alpha applied when the model over-fits the minority class.
    pub decrease_step: f64,
    /// Step beta applied otherwise; must differ from alpha.
    pub increase_step: f64,
    /// Candidates without objective improvement before a class's search stops.
    pub patience: usize,
    /// Hard cap on candidate evaluations across all classes.
    pub max_iterations: usize,
    /// Minimum objective gain that counts as an improvement.
    pub improve_epsilon: f64,
    /// Mean non-minority F1 drop below baseline that counts as over-fitting.
    pub overfit_drop: f64,
}

impl Default for WeightSearchConfig {
    fn default() -> Self {
        Self {
            initial: 10.0,
            decrease_step: 2.0,
            increase_step: 5.0,
            patience: 3,
            max_iterations: 24,
            improve_epsilon: 1e-3,
            overfit_drop: 0.01,
        }
    }
}

impl WeightSearchConfig {
    fn validate(&self) -> Result<()> {
        if !(self.initial > 1.0) {
            return Err(Error::Config(format!(
                "weight search: initial weight {} must be > 1",
                self.initial
            )));
        }
        if self.decrease_step <= 0.0 || self.increase_step <= 0.0 {
            return Err(Error::Config("weight search: steps must be positive".into()));
        }
        if self.decrease_step == self.increase_step {
            return Err(Error::Config(
                "weight search: decrease and increase steps must differ".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("weight search: max_iterations must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("weight search: patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One evaluated candidate: the full weight vector and its validation score.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIteration {
    pub weights: Vec<f64>,
    pub score: f64,
}

/// Every candidate in evaluation order; iteration 0 is the all-unit
/// baseline. `truncated` marks searches stopped by the iteration cap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchTrace {
    pub iterations: Vec<SearchIteration>,
    pub truncated: bool,
}

/// Deterministic train-then-score procedure the search drives.
pub trait WeightEvaluator {
    fn evaluate(&mut self, weights: &ClassWeights) -> Result<MetricsReport>;
}

/// Arithmetic mean of F1 over the target classes.
pub fn objective_score(report: &MetricsReport, target_classes: &[String]) -> Result<f64> {
    if target_classes.is_empty() {
        return Err(Error::Config("objective: empty target class set".into()));
    }
    let mut sum = 0.0;
    for name in target_classes {
        match report.f1_of(name) {
            Some(f1) => sum += f1,
            None => {
                return Err(Error::Config(format!(
                    "objective: unknown class '{name}'"
                )))
            }
        }
    }
    Ok(sum / target_classes.len() as f64)
}

fn mean_f1_over(report: &MetricsReport, class_indices: &[usize]) -> f64 {
    if class_indices.is_empty() {
        return 0.0;
    }
    class_indices
        .iter()
        .map(|&c| report.per_class[c].f1)
        .sum::<f64>()
        / class_indices.len() as f64
}

/// Searches minority-class weights one class at a time, ascending by class
/// frequency, under the step rule. Non-minority weights stay at 1.
pub fn search_class_weights(
    train: &Dataset,
    minority_classes: &[usize],
    config: &WeightSearchConfig,
    evaluator: &mut dyn WeightEvaluator,
) -> Result<(ClassWeights, SearchTrace)> {
    config.validate()?;
    let n_classes = train.class_count();
    if minority_classes.is_empty() {
        return Err(Error::Config("weight search: no minority classes".into()));
    }
    if minority_classes.len() >= n_classes {
        return Err(Error::Config(
            "weight search: minority classes must be a strict subset".into(),
        ));
    }
    for &c in minority_classes {
        if c >= n_classes {
            return Err(Error::Index(format!(
                "weight search: minority class {c} outside registry"
            )));
        }
    }
    let minority_names: Vec<String> = minority_classes
        .iter()
        .map(|&c| train.classes[c].clone())
        .collect();
    let non_minority: Vec<usize> = (0..n_classes)
        .filter(|c| !minority_classes.contains(c))
        .collect();

    let mut trace = SearchTrace::default();
    let baseline = ClassWeights::unit(n_classes);
    let baseline_report = evaluator.evaluate(&baseline)?;
    let baseline_score = objective_score(&baseline_report, &minority_names)?;
    let baseline_non_minority = mean_f1_over(&baseline_report, &non_minority);
    trace.iterations.push(SearchIteration {
        weights: baseline.as_slice().to_vec(),
        score: baseline_score,
    });
    let mut best = (baseline, baseline_score);

    // Rarest class first.
    let counts = train.class_counts();
    let mut order = minority_classes.to_vec();
    order.sort_by_key(|&c| counts[c]);

    let mut evals = 0usize;
    'classes: for &class in &order {
        let mut weight = config.initial;
        let mut best_class_f1 = baseline_report.per_class[class].f1;
        let mut no_improve = 0usize;
        loop {
            if evals >= config.max_iterations {
                trace.truncated = true;
                break 'classes;
            }
            let candidate = best.0.with_class(class, weight)?;
            let report = evaluator.evaluate(&candidate)?;
            evals += 1;
            let score = objective_score(&report, &minority_names)?;
            trace.iterations.push(SearchIteration {
                weights: candidate.as_slice().to_vec(),
                score,
            });
            if score > best.1 + config.improve_epsilon {
                best = (candidate, score);
                no_improve = 0;
            } else {
                no_improve += 1;
            }
            let class_f1 = report.per_class[class].f1;
            let over_fit =
                mean_f1_over(&report, &non_minority) < baseline_non_minority - config.overfit_drop;
            if class_f1 > best_class_f1 {
                best_class_f1 = class_f1;
            }
            if no_improve >= config.patience {
                break;
            }
            // Over-fitting the minority pulls the weight back by alpha;
            // under-fitting (class F1 below its best seen) and steady states
            // both push up by beta.
            weight = if over_fit {
                (weight - config.decrease_step).max(1.0)
            } else {
                weight + config.increase_step
            };
        }
    }
    Ok((best.0, trace))
}

/// Standard evaluator: rebuild the classifier from the same seed, train on
/// the inner train split with the candidate weights, score on the
/// validation split. Deterministic, so candidates differ only by weights.
pub struct ClassifierWeightEvaluator<'a> {
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    pub arch: ArchitectureSpec,
    pub train_config: TrainConfig,
    pub init_seed: u64,
}

impl WeightEvaluator for ClassifierWeightEvaluator<'_> {
    fn evaluate(&mut self, weights: &ClassWeights) -> Result<MetricsReport> {
        let mut model = build_classifier(&self.arch, &mut RngStream::new(self.init_seed))?;
        train_classifier(&mut model, self.train, weights, &self.train_config, None)?;
        let (_, labels) = predict(&model, &self.validation.features)?;
        let cm = confusion(&self.validation.labels, &labels, self.arch.n_classes)?;
        per_class_metrics(&cm, &self.validation.classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ClassMetrics, ConfusionMatrix};
    use crate::tensor::Tensor;

    fn report_with_f1(f1s: &[f64]) -> MetricsReport {
        let n = f1s.len();
        MetricsReport {
            classes: (0..n).map(|c| format!("c{c}")).collect(),
            per_class: f1s
                .iter()
                .map(|&f1| ClassMetrics {
                    precision: f1,
                    recall: f1,
                    f1,
                })
                .collect(),
            accuracy: 1.0,
            confusion: ConfusionMatrix {
                n_classes: n,
                counts: vec![0; n * n],
            },
        }
    }

    #[test]
    fn objective_is_mean_f1_over_targets() {
        let report = report_with_f1(&[1.0, 0.4, 0.53]);
        assert_eq!(
            objective_score(&report, &["c0".to_string()]).unwrap(),
            1.0
        );
        let mean = objective_score(&report, &["c1".to_string(), "c2".to_string()]).unwrap();
        assert!((mean - 0.465).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_empty_or_unknown_targets() {
        let report = report_with_f1(&[1.0, 0.5]);
        assert!(matches!(
            objective_score(&report, &[]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            objective_score(&report, &["zz".to_string()]),
            Err(Error::Config(_))
        ));
    }

    fn tiny_dataset(counts: &[usize]) -> Dataset {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (class, &count) in counts.iter().enumerate() {
            for k in 0..count {
                data.push(class as f64 + k as f64 * 1e-6);
                labels.push(class);
            }
        }
        let n = labels.len();
        Dataset::new(
            Tensor::new(vec![n, 1], data).unwrap(),
            labels,
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
            vec!["f".into()],
        )
        .unwrap()
    }

    /// Synthetic response surface: minority F1 peaks at a target weight,
    /// majority F1 decays once the weight crosses a threshold.
    struct HillEvaluator {
        peak: f64,
        majority_cliff: f64,
        calls: usize,
    }

    impl WeightEvaluator for HillEvaluator {
        fn evaluate(&mut self, weights: &ClassWeights) -> Result<MetricsReport> {
            self.calls += 1;
            let w = weights.get(2);
            let minority_f1 = (1.0 - (w - self.peak).abs() / 60.0).clamp(0.0, 1.0);
            let majority_f1 = if w > self.majority_cliff {
                0.9 - 0.01 * (w - self.majority_cliff)
            } else {
                0.95
            };
            Ok(report_with_f1(&[majority_f1, majority_f1, minority_f1]))
        }
    }

    #[test]
    fn search_improves_over_baseline_on_a_hill() {
        let train = tiny_dataset(&[100, 50, 5]);
        let cfg = WeightSearchConfig::default();
        let mut evaluator = HillEvaluator {
            peak: 30.0,
            majority_cliff: 1e9,
            calls: 0,
        };
        let (weights, trace) =
            search_class_weights(&train, &[2], &cfg, &mut evaluator).unwrap();
        let baseline = trace.iterations[0].score;
        let best = trace
            .iterations
            .iter()
            .map(|it| it.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let returned_score = trace
            .iterations
            .iter()
            .find(|it| it.weights == weights.as_slice())
            .map(|it| it.score)
            .unwrap();
        assert!(returned_score >= baseline);
        assert_eq!(returned_score, best);
        assert!(weights.get(2) > 1.0);
        // Non-minority weights stay at 1.
        assert_eq!(weights.get(0), 1.0);
        assert_eq!(weights.get(1), 1.0);
        // Iteration 0 is the baseline.
        assert_eq!(trace.iterations[0].weights, vec![1.0, 1.0, 1.0]);
        assert!(trace.iterations.len() <= cfg.max_iterations + 1);
    }

    #[test]
    fn flat_surface_returns_the_unit_baseline() {
        let train = tiny_dataset(&[40, 40, 40]);
        struct Flat;
        impl WeightEvaluator for Flat {
            fn evaluate(&mut self, _w: &ClassWeights) -> Result<MetricsReport> {
                Ok(report_with_f1(&[0.99, 0.99, 0.99]))
            }
        }
        let (weights, trace) =
            search_class_weights(&train, &[2], &WeightSearchConfig::default(), &mut Flat)
                .unwrap();
        assert!(weights.is_unit());
        assert!(!trace.truncated);
    }

    #[test]
    fn iteration_cap_truncates() {
        let train = tiny_dataset(&[40, 40, 4]);
        // Objective keeps improving forever, so only the cap stops it.
        struct Climbing;
        impl WeightEvaluator for Climbing {
            fn evaluate(&mut self, w: &ClassWeights) -> Result<MetricsReport> {
                let f1 = 1.0 - 1.0 / (1.0 + w.get(2));
                Ok(report_with_f1(&[0.9, 0.9, f1]))
            }
        }
        let cfg = WeightSearchConfig {
            max_iterations: 6,
            ..WeightSearchConfig::default()
        };
        let (_, trace) = search_class_weights(&train, &[2], &cfg, &mut Climbing).unwrap();
        assert!(trace.truncated);
        assert_eq!(trace.iterations.len(), 7);
    }

    #[test]
    fn overfit_reaction_pulls_weights_back() {
        let train = tiny_dataset(&[60, 60, 6]);
        // Majority collapses past w = 12, minority still rewards large w.
        let mut evaluator = HillEvaluator {
            peak: 40.0,
            majority_cliff: 12.0,
            calls: 0,
        };
        let cfg = WeightSearchConfig {
            max_iterations: 12,
            ..WeightSearchConfig::default()
        };
        let (_, trace) = search_class_weights(&train, &[2], &cfg, &mut evaluator).unwrap();
        // After a candidate above the cliff, the next candidate must step
        // down by alpha instead of up by beta.
        let ws: Vec<f64> = trace.iterations.iter().skip(1).map(|it| it.weights[2]).collect();
        let mut saw_decrease = false;
        for pair in ws.windows(2) {
            if pair[0] > 12.0 && pair[1] < pair[0] {
                saw_decrease = true;
            }
        }
        assert!(saw_decrease, "weight path {ws:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let train = tiny_dataset(&[10, 10, 2]);
        struct Flat;
        impl WeightEvaluator for Flat {
            fn evaluate(&mut self, _w: &ClassWeights) -> Result<MetricsReport> {
                Ok(report_with_f1(&[1.0, 1.0, 1.0]))
            }
        }
        let bad = WeightSearchConfig {
            initial: 1.0,
            ..WeightSearchConfig::default()
        };
        assert!(search_class_weights(&train, &[2], &bad, &mut Flat).is_err());
        let bad = WeightSearchConfig {
            decrease_step: 5.0,
            increase_step: 5.0,
            ..WeightSearchConfig::default()
        };
        assert!(search_class_weights(&train, &[2], &bad, &mut Flat).is_err());
        // Minority must be a strict subset.
        assert!(search_class_weights(
            &train,
            &[0, 1, 2],
            &WeightSearchConfig::default(),
            &mut Flat
        )
        .is_err());
    }
}
