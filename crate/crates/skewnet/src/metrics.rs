//! Confusion matrices and per-class precision / recall / F1 reports.
//! Pure functions over immutable inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C x C` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// Row-major counts, length `n_classes^2`.
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn get(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, true_class: usize) -> usize {
        (0..self.n_classes).map(|p| self.get(true_class, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> usize {
        (0..self.n_classes).map(|t| self.get(t, predicted)).sum()
    }
}

/// Counts (true, predicted) pairs.
pub fn confusion(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Data(format!(
            "confusion: {} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![0usize; n_classes * n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Data(format!(
                "confusion: label pair ({t}, {p}) outside [0, {n_classes})"
            )));
        }
        counts[t * n_classes + p] += 1;
    }
    Ok(ConfusionMatrix { n_classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class metrics plus accuracy and the underlying matrix. Any 0/0
/// ratio is reported as 0 so degenerate desk runs never fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix, classes: &[String]) -> Result<MetricsReport> {
    if cm.n_classes == 0 {
        return Err(Error::Data("metrics: empty confusion matrix".into()));
    }
    if classes.len() != cm.n_classes {
        return Err(Error::Data(format!(
            "metrics: {} class names for {} classes",
            classes.len(),
            cm.n_classes
        )));
    }
    let mut per_class = Vec::with_capacity(cm.n_classes);
    for c in 0..cm.n_classes {
        let tp = cm.get(c, c);
        let precision = ratio(tp, cm.col_sum(c));
        let recall = ratio(tp, cm.row_sum(c));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
        });
    }
    Ok(MetricsReport {
        classes: classes.to_vec(),
        per_class,
        accuracy: ratio(cm.trace(), cm.total()),
        confusion: cm.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Human-readable aligned table, metrics at 2 decimals.
    Table,
    /// Machine-readable JSON, full precision; parses back to an equal report.
    Machine,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "machine" => Ok(ReportFormat::Machine),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

impl MetricsReport {
    pub fn f1_of(&self, class_name: &str) -> Option<f64> {
        self.classes
            .iter()
            .position(|c| c == class_name)
            .map(|i| self.per_class[i].f1)
    }

    /// Byte-deterministic rendering.
    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Table => {
                let name_width = self
                    .classes
                    .iter()
                    .map(|c| c.len())
                    .max()
                    .unwrap_or(5)
                    .max(5);
                let mut out = String::new();
                out.push_str(&format!(
                    "{:<name_width$}  {:>9}  {:>7}  {:>5}\n",
                    "class", "precision", "recall", "f1"
                ));
                for (name, m) in self.classes.iter().zip(&self.per_class) {
                    out.push_str(&format!(
                        "{:<name_width$}  {:>9.2}  {:>7.2}  {:>5.2}\n",
                        name, m.precision, m.recall, m.f1
                    ));
                }
                out.push_str(&format!("accuracy: {:.4}\n", self.accuracy));
                out
            }
            ReportFormat::Machine => {
                serde_json::to_string_pretty(self).expect("report serialization") + "\n"
            }
        }
    }

    /// Parses machine-format output back into a report.
    pub fn parse_machine(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("report parse: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn hand_counted_confusion() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![1, 1, 0, 1]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let y = [0, 1, 2, 1, 0, 2];
        let cm = confusion(&y, &y, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                if t != p {
                    assert_eq!(cm.get(t, p), 0);
                }
            }
        }
        let report = per_class_metrics(&cm, &names(3)).unwrap();
        assert_eq!(report.accuracy, 1.0);
        for m in &report.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn out_of_range_label_is_data_error() {
        assert!(matches!(
            confusion(&[0, 3], &[0, 0], 2),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn hand_metrics_case() {
        // cm [[1,1],[0,1]]: class 0 precision 1.0, recall 0.5, f1 2/3.
        let cm = ConfusionMatrix {
            n_classes: 2,
            counts: vec![1, 1, 0, 1],
        };
        let report = per_class_metrics(&cm, &names(2)).unwrap();
        assert_eq!(report.per_class[0].precision, 1.0);
        assert_eq!(report.per_class[0].recall, 0.5);
        assert!((report.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_gets_zero_metrics() {
        // Class 2 never true and never predicted.
        let cm = confusion(&[0, 1], &[0, 1], 3).unwrap();
        let report = per_class_metrics(&cm, &names(3)).unwrap();
        let m = report.per_class[2];
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn micro_averages_equal_accuracy() {
        let mut rng = RngStream::new(40);
        for _ in 0..200 {
            let c = 2 + rng.below(5);
            let n = 1 + rng.below(200);
            let y_true: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let cm = confusion(&y_true, &y_pred, c).unwrap();
            let report = per_class_metrics(&cm, &names(c)).unwrap();
            let tp: usize = (0..c).map(|k| cm.get(k, k)).sum();
            let fp: usize = (0..c).map(|k| cm.col_sum(k) - cm.get(k, k)).sum();
            let fn_: usize = (0..c).map(|k| cm.row_sum(k) - cm.get(k, k)).sum();
            let micro_precision = tp as f64 / (tp + fp) as f64;
            let micro_recall = tp as f64 / (tp + fn_) as f64;
            assert_eq!(micro_precision.to_bits(), micro_recall.to_bits());
            assert_eq!(micro_precision.to_bits(), report.accuracy.to_bits());
        }
    }

    /// Brute-force oracle: recompute each class's metrics by scanning the
    /// raw label pairs, never touching the confusion matrix.
    pub(crate) fn brute_force_metrics(
        y_true: &[usize],
        y_pred: &[usize],
        class: usize,
    ) -> ClassMetrics {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t == class && p == class {
                tp += 1;
            } else if t != class && p == class {
                fp += 1;
            } else if t == class && p != class {
                fn_ += 1;
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    }

    #[test]
    fn metrics_match_brute_force_counting() {
        let mut rng = RngStream::new(41);
        for _ in 0..300 {
            let c = 2 + rng.below(5);
            let n = 1 + rng.below(200);
            let y_true: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let cm = confusion(&y_true, &y_pred, c).unwrap();
            let report = per_class_metrics(&cm, &names(c)).unwrap();
            for class in 0..c {
                let oracle = brute_force_metrics(&y_true, &y_pred, class);
                let got = report.per_class[class];
                assert_eq!(got.precision.to_bits(), oracle.precision.to_bits());
                assert_eq!(got.recall.to_bits(), oracle.recall.to_bits());
                assert_eq!(got.f1.to_bits(), oracle.f1.to_bits());
            }
        }
    }

    #[test]
    fn table_mode_rounds_to_two_decimals() {
        let cm = ConfusionMatrix {
            n_classes: 2,
            counts: vec![2, 1, 0, 1],
        };
        let report = per_class_metrics(&cm, &names(2)).unwrap();
        let text = report.emit(ReportFormat::Table);
        // Class 0 recall 2/3 renders as 0.67.
        assert!(text.contains("0.67"), "{text}");
    }

    #[test]
    fn emit_is_deterministic_and_machine_mode_round_trips() {
        let cm = confusion(&[0, 1, 2, 2, 1], &[0, 2, 2, 0, 1], 3).unwrap();
        let report = per_class_metrics(&cm, &names(3)).unwrap();
        assert_eq!(
            report.emit(ReportFormat::Table),
            report.emit(ReportFormat::Table)
        );
        let machine = report.emit(ReportFormat::Machine);
        assert_eq!(machine, report.emit(ReportFormat::Machine));
        let parsed = MetricsReport::parse_machine(&machine).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn all_metrics_lie_in_unit_interval() {
        let mut rng = RngStream::new(42);
        for _ in 0..100 {
            let c = 2 + rng.below(4);
            let n = 1 + rng.below(60);
            let y_true: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let cm = confusion(&y_true, &y_pred, c).unwrap();
            let report = per_class_metrics(&cm, &names(c)).unwrap();
            for m in &report.per_class {
                for v in [m.precision, m.recall, m.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
                if m.precision + m.recall == 0.0 {
                    assert_eq!(m.f1, 0.0);
                }
            }
            assert!((0.0..=1.0).contains(&report.accuracy));
        }
    }
}
