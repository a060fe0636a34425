//! Classification metrics and the per-run meta report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cf::BaseLearnerId;
use crate::eval::{base_level_impact, MetaLabel, NdcgTable};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// `confusion[t][p]` counts rows of true class t predicted as p. Classes that
/// are neither present nor predicted are left out. Zero denominators give 0.
pub fn classification_report(confusion: &[Vec<u64>], class_names: &[String]) -> ClassificationReport {
    let k = confusion.len();
    assert!(confusion.iter().all(|r| r.len() == k), "confusion matrix must be square");
    assert_eq!(class_names.len(), k, "one name per class");
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let classes: Vec<ClassMetrics> = (0..k)
        .filter_map(|c| {
            let tp = confusion[c][c] as f64;
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            if support + predicted == 0 {
                return None;
            }
            let precision = ratio(tp, predicted as f64);
            let recall = ratio(tp, support as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            Some(ClassMetrics { label: class_names[c].clone(), precision, recall, f1, support })
        })
        .collect();
    let avg = |weight: &dyn Fn(&ClassMetrics) -> f64| {
        let w: f64 = classes.iter().map(weight).sum();
        Averages {
            precision: ratio(classes.iter().map(|m| weight(m) * m.precision).sum(), w),
            recall: ratio(classes.iter().map(|m| weight(m) * m.recall).sum(), w),
            f1: ratio(classes.iter().map(|m| weight(m) * m.f1).sum(), w),
        }
    };
    let macro_avg = avg(&|_| 1.0);
    let weighted_avg = avg(&|m| m.support as f64);
    ClassificationReport { accuracy: ratio(trace as f64, total as f64), classes, macro_avg, weighted_avg, total }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_rows: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaReport {
    pub learner: String,
    pub dataset: String,
    pub normalize: bool,
    pub smote: bool,
    pub params: std::collections::BTreeMap<String, f64>,
    pub class_names: Vec<String>,
    /// True class (rows) by predicted class (columns).
    pub confusion: Vec<Vec<u64>>,
    pub metrics: ClassificationReport,
    /// trace / total over the pooled out-of-fold predictions.
    pub accuracy: f64,
    /// Unweighted mean of per-fold accuracies.
    pub fold_mean_accuracy: f64,
    /// Accuracy of always predicting each training fold's majority label.
    pub majority_accuracy: f64,
    pub base_level_ndcg: Option<f64>,
    pub folds: Vec<FoldSummary>,
    /// Out-of-fold prediction per row, in metadataset row order.
    pub predictions: Vec<MetaLabel>,
    /// Fold that produced each row's prediction.
    pub prediction_fold: Vec<usize>,
}

impl MetaReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.learner);
        let _ = writeln!(s, "dataset: {}", self.dataset);
        let _ = writeln!(s, "normalize: {}  smote: {}", self.normalize, self.smote);
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(s, "params: {}", params.join(" "));
        let _ = writeln!(s);
        s.push_str(&render_metrics(&self.metrics));
        let _ = writeln!(s);
        let _ = writeln!(s, "pooled accuracy:       {:.4}", self.accuracy);
        let _ = writeln!(s, "fold-mean accuracy:    {:.4}", self.fold_mean_accuracy);
        let _ = writeln!(s, "majority baseline:     {:.4}", self.majority_accuracy);
        if let Some(v) = self.base_level_ndcg {
            let _ = writeln!(s, "base-level NDCG:       {v:.4}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion matrix (rows = true, columns = predicted)");
        let w = self.class_names.iter().map(|c| c.len()).max().unwrap_or(0).max(6);
        let _ = write!(s, "{:>w$}", "");
        for c in &self.class_names {
            let _ = write!(s, " {c:>w$}");
        }
        let _ = writeln!(s);
        for (c, row) in self.class_names.iter().zip(&self.confusion) {
            let _ = write!(s, "{c:>w$}");
            for v in row {
                let _ = write!(s, " {v:>w$}");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        for f in &self.folds {
            let _ = writeln!(s, "fold {}: {} rows, accuracy {:.4}", f.fold, f.n_rows, f.accuracy);
        }
        s
    }
}

/// The precision/recall/F1 table with accuracy, macro and weighted rows.
pub fn render_metrics(r: &ClassificationReport) -> String {
    let w = r.classes.iter().map(|c| c.label.len()).max().unwrap_or(0).max("weighted avg".len());
    let mut s = String::new();
    let _ = writeln!(s, "{:>w$} {:>10} {:>10} {:>10} {:>10}", "", "precision", "recall", "f1-score", "support");
    for c in &r.classes {
        let _ = writeln!(
            s,
            "{:>w$} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            c.label, c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(s, "{:>w$} {:>10} {:>10} {:>10.4} {:>10}", "accuracy", "", "", r.accuracy, r.total);
    for (name, a) in [("macro avg", &r.macro_avg), ("weighted avg", &r.weighted_avg)] {
        let _ = writeln!(s, "{name:>w$} {:>10.4} {:>10.4} {:>10.4} {:>10}", a.precision, a.recall, a.f1, r.total);
    }
    s
}

/// Mean NDCG of the per-user oracle and of each constant predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactBaselines {
    pub fallback: BaseLearnerId,
    pub perfect: f64,
    /// One entry per label in registry order; `Zeroes` is served by the fallback.
    pub constant: Vec<(String, f64)>,
}

pub fn impact_baselines(t: &NdcgTable, fallback: BaseLearnerId) -> Result<ImpactBaselines> {
    let n = t.n_users();
    let perfect = if n == 0 {
        0.0
    } else {
        t.scores.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum::<f64>() / n as f64
    };
    let constant = MetaLabel::ALL
        .iter()
        .map(|&l| Ok((l.to_string(), base_level_impact(&vec![l; n], t, fallback)?.mean)))
        .collect::<Result<_>>()?;
    Ok(ImpactBaselines { fallback, perfect, constant })
}

impl ImpactBaselines {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>10}", "predictor", "NDCG");
        let _ = writeln!(s, "{:<16} {:>10.4}", "Perfect", self.perfect);
        for (name, v) in &self.constant {
            let shown = if name == "Zeroes" { format!("Zeroes->{}", self.fallback.name()) } else { name.clone() };
            let _ = writeln!(s, "{shown:<16} {v:>10.4}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn identity_is_perfect() {
        let c = vec![vec![3, 0], vec![0, 5]];
        let r = classification_report(&c, &names(2));
        assert_eq!(r.accuracy, 1.0);
        assert!(r.classes.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        let c = vec![vec![4, 0], vec![2, 0]];
        let r = classification_report(&c, &names(2));
        assert_eq!((r.classes[1].precision, r.classes[1].recall, r.classes[1].f1), (0.0, 0.0, 0.0));
        assert!((r.weighted_avg.recall - r.accuracy).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_three_class() {
        let c = vec![vec![5, 2, 1], vec![1, 3, 0], vec![2, 2, 4]];
        let r = classification_report(&c, &names(3));
        assert!((r.accuracy - 12.0 / 20.0).abs() < 1e-15);
        assert!((r.classes[0].precision - 5.0 / 8.0).abs() < 1e-15);
        assert!((r.classes[0].recall - 5.0 / 8.0).abs() < 1e-15);
        assert!((r.classes[1].precision - 3.0 / 7.0).abs() < 1e-15);
        assert!((r.classes[2].recall - 0.5).abs() < 1e-15);
        let macro_p = (5.0 / 8.0 + 3.0 / 7.0 + 4.0 / 5.0) / 3.0;
        assert!((r.macro_avg.precision - macro_p).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_left_out_of_averages() {
        let c = vec![vec![2, 0, 0], vec![0, 0, 0], vec![1, 0, 1]];
        let r = classification_report(&c, &names(3));
        let labels: Vec<&str> = r.classes.iter().map(|m| m.label.as_str()).collect();
        assert_eq!(labels, ["c0", "c2"]);
        let macro_r = (1.0 + 0.5) / 2.0;
        assert!((r.macro_avg.recall - macro_r).abs() < 1e-15);
    }

    #[test]
    fn text_table_lists_every_class() {
        let c = vec![vec![1, 1], vec![0, 2]];
        let t = render_metrics(&classification_report(&c, &names(2)));
        assert!(t.contains("macro avg") && t.contains("weighted avg") && t.contains("c1"));
    }
}
