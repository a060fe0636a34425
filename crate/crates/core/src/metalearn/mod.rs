//! Meta-classifiers predicting each user's best base learner from
//! metafeatures, plus grid search, cross-validation and reporting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetaLabel;
use crate::linalg::argmax;
use crate::metaset::{MetaDataset, Scaler};

pub mod cv;
pub mod forest;
pub mod gbt;
pub mod logistic;
pub mod mlp;
pub mod report;
pub mod svm;
pub mod tree;

pub use cv::{cross_validate, fit_pipeline, grid_search, CvOptions, GridOutcome, GridTrial, ImpactContext};
pub use report::{classification_report, impact_baselines, ClassMetrics, ClassificationReport, ImpactBaselines, MetaReport};

/// Hyperparameters by name. Integer-valued settings are stored as floats.
pub type Params = BTreeMap<String, f64>;

/// Candidate values per hyperparameter.
pub type Grid = BTreeMap<String, Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaLearnerId {
    LogisticRegression,
    #[serde(rename = "LinearSVM")]
    LinearSvm,
    #[serde(rename = "MLP")]
    Mlp,
    RandomForest,
    GradientBoostedTrees,
}

impl MetaLearnerId {
    pub const ALL: [MetaLearnerId; 5] = [
        MetaLearnerId::LogisticRegression,
        MetaLearnerId::LinearSvm,
        MetaLearnerId::Mlp,
        MetaLearnerId::RandomForest,
        MetaLearnerId::GradientBoostedTrees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaLearnerId::LogisticRegression => "LogisticRegression",
            MetaLearnerId::LinearSvm => "LinearSVM",
            MetaLearnerId::Mlp => "MLP",
            MetaLearnerId::RandomForest => "RandomForest",
            MetaLearnerId::GradientBoostedTrees => "GradientBoostedTrees",
        }
    }

    fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            MetaLearnerId::LogisticRegression => &[("iters", 300.0), ("l2", 1e-4), ("lr", 1.0)],
            MetaLearnerId::LinearSvm => &[("C", 1.0), ("batch", 32.0), ("epochs", 100.0), ("lr", 0.1)],
            MetaLearnerId::Mlp => {
                &[("batch", 64.0), ("epochs", 50.0), ("hidden", 64.0), ("l2", 1e-4), ("lr", 1e-2)]
            }
            MetaLearnerId::RandomForest => &[
                ("max_depth", 0.0),
                ("max_features", 0.0),
                ("min_samples_leaf", 1.0),
                ("trees", 100.0),
            ],
            MetaLearnerId::GradientBoostedTrees => &[
                ("bins", 32.0),
                ("depth", 6.0),
                ("lambda", 1.0),
                ("lr", 0.1),
                ("min_child_weight", 1.0),
                ("trees", 200.0),
            ],
        }
    }

    pub fn accepted_keys(self) -> Vec<&'static str> {
        self.defaults().iter().map(|(k, _)| *k).collect()
    }

    /// Defaults overlaid with `overrides`; unknown keys are rejected. Limits
    /// given as infinite or non-positive are stored as 0, meaning unlimited.
    pub fn resolve(self, overrides: &Params) -> Result<Params> {
        let mut p: Params = self.defaults().iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in overrides {
            if !p.contains_key(k) {
                return Err(Error::UnknownHyperparameter {
                    key: k.clone(),
                    learner: self.name().to_owned(),
                    accepted: self.accepted_keys().join(", "),
                });
            }
            let v = if LIMIT_KEYS.contains(&k.as_str()) && !(v.is_finite() && *v > 0.0) { 0.0 } else { *v };
            p.insert(k.clone(), v);
        }
        Ok(p)
    }

    pub fn default_grid(self) -> Grid {
        let g: Vec<(&str, Vec<f64>)> = match self {
            MetaLearnerId::LogisticRegression => vec![("l2", vec![1e-4, 1e-2, 1.0])],
            MetaLearnerId::LinearSvm => vec![("C", vec![0.1, 1.0, 10.0])],
            MetaLearnerId::Mlp => vec![("hidden", vec![32.0, 64.0]), ("lr", vec![1e-3, 1e-2])],
            MetaLearnerId::RandomForest => vec![
                ("max_depth", vec![0.0, 16.0]),
                ("min_samples_leaf", vec![1.0, 20.0, 200.0]),
                ("trees", vec![100.0]),
            ],
            MetaLearnerId::GradientBoostedTrees => vec![
                ("depth", vec![2.0, 6.0]),
                ("lr", vec![0.1, 0.01]),
                ("min_child_weight", vec![1.0, 50.0]),
                ("trees", vec![200.0]),
            ],
        };
        g.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }
}

impl fmt::Display for MetaLearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaLearnerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let short = match s.to_ascii_lowercase().as_str() {
            "logreg" | "lr" => Some(MetaLearnerId::LogisticRegression),
            "svm" => Some(MetaLearnerId::LinearSvm),
            "rf" => Some(MetaLearnerId::RandomForest),
            "gbt" | "lightgbm" => Some(MetaLearnerId::GradientBoostedTrees),
            _ => None,
        };
        short
            .or_else(|| Self::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s)))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown meta learner `{s}`")))
    }
}

const LIMIT_KEYS: [&str; 2] = ["max_depth", "max_features"];

/// Reads a count-like hyperparameter; non-finite or non-positive means "no limit".
pub(crate) fn limit(p: &Params, key: &str) -> Option<usize> {
    let v = p[key];
    (v.is_finite() && v > 0.0).then_some(v as usize)
}

pub(crate) fn count(p: &Params, key: &str, min: usize) -> Result<usize> {
    let v = p[key];
    if !v.is_finite() || v < min as f64 {
        return Err(Error::InvalidArgument(format!("`{key}` must be a number >= {min}, got {v}")));
    }
    Ok(v as usize)
}

pub(crate) fn positive(p: &Params, key: &str) -> Result<f64> {
    let v = p[key];
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidArgument(format!("`{key}` must be positive, got {v}")));
    }
    Ok(v)
}

pub(crate) fn non_negative(p: &Params, key: &str) -> Result<f64> {
    let v = p[key];
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidArgument(format!("`{key}` must be non-negative, got {v}")));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    LogisticRegression(logistic::LogisticModel),
    LinearSvm(svm::SvmModel),
    Mlp(mlp::MlpModel),
    RandomForest(forest::ForestModel),
    GradientBoostedTrees(gbt::GbtModel),
}

impl Fitted {
    fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        match self {
            Fitted::LogisticRegression(m) => m.scores(x),
            Fitted::LinearSvm(m) => m.scores(x),
            Fitted::Mlp(m) => m.predict_proba(x),
            Fitted::RandomForest(m) => m.predict_proba(x),
            Fitted::GradientBoostedTrees(m) => m.scores(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub learner: MetaLearnerId,
    pub params: Params,
    pub classes: Vec<MetaLabel>,
    pub n_features: usize,
    /// Applied to rows before scoring when present.
    pub scaler: Option<Scaler>,
    pub fitted: Fitted,
}

impl MetaModel {
    /// Per-class scores for one raw (unscaled) row.
    pub fn class_scores(&self, row: ArrayView1<f64>) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::Shape(format!("expected {} features, got {}", self.n_features, row.len())));
        }
        Ok(match &self.scaler {
            Some(s) => {
                let scaled: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| if s.std[j] > 0.0 { (v - s.mean[j]) / s.std[j] } else { 0.0 })
                    .collect();
                self.fitted.scores(ArrayView1::from(&scaled))
            }
            None => self.fitted.scores(row),
        })
    }

    /// Class index per row; ties go to the earlier class.
    pub fn predict_indices(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape(format!("expected {} features, got {}", self.n_features, x.ncols())));
        }
        x.rows().into_iter().map(|r| self.class_scores(r).map(|s| argmax(&s))).collect()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<MetaLabel>> {
        Ok(self.predict_indices(x)?.into_iter().map(|c| self.classes[c]).collect())
    }
}

/// Fits one learner on `train` (already scaled/resampled as desired).
pub fn train_meta(learner: MetaLearnerId, train: &MetaDataset, params: &Params, seed: u64) -> Result<MetaModel> {
    let params = learner.resolve(params)?;
    let present = train.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::InvalidArgument(format!(
            "{learner} needs at least 2 classes in the training rows, found {present}"
        )));
    }
    let (x, y, k) = (&train.features, &train.labels[..], train.n_classes());
    let fitted = match learner {
        MetaLearnerId::LogisticRegression => Fitted::LogisticRegression(logistic::fit(x, y, k, &params)?),
        MetaLearnerId::LinearSvm => Fitted::LinearSvm(svm::fit(x, y, k, &params, seed)?),
        MetaLearnerId::Mlp => Fitted::Mlp(mlp::fit(x, y, k, &params, seed)?),
        MetaLearnerId::RandomForest => Fitted::RandomForest(forest::fit(x, y, k, &params, seed)?),
        MetaLearnerId::GradientBoostedTrees => Fitted::GradientBoostedTrees(gbt::fit(x, y, k, &params)?),
    };
    Ok(MetaModel {
        learner,
        params,
        classes: train.classes.clone(),
        n_features: train.n_features(),
        scaler: None,
        fitted,
    })
}

/// Constant predictor of the most frequent training label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub class: usize,
    pub label: MetaLabel,
}

impl MajorityModel {
    pub fn predict(&self, n_rows: usize) -> Vec<usize> {
        vec![self.class; n_rows]
    }
}

/// Ties go to the earlier class.
pub fn predict_majority(train: &MetaDataset) -> Result<MajorityModel> {
    if train.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let counts = train.class_counts();
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(MajorityModel { class: best, label: train.classes[best] })
}

/// Every combination of grid values; keys in sorted order, last key varying fastest.
pub fn enumerate_grid(grid: &Grid) -> Vec<Params> {
    let mut out = vec![Params::new()];
    for (k, values) in grid {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for p in &out {
            for &v in values {
                let mut q = p.clone();
                q.insert(k.clone(), v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}
