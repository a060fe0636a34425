//! Grid search and k-fold cross-validation. Scaling and oversampling are fit
//! on each training portion only.

use std::collections::HashMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{classification_report, FoldSummary, MetaReport};
use super::{enumerate_grid, predict_majority, train_meta, Grid, MetaLearnerId, MetaModel, Params};
use crate::cf::BaseLearnerId;
use crate::error::{Error, Result};
use crate::eval::{base_level_impact, NdcgTable};
use crate::metaset::{smote_oversample, zscore_fit_transform, FoldPlan, MetaDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub normalize: bool,
    pub smote: bool,
    pub smote_k: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { normalize: true, smote: false, smote_k: 5 }
    }
}

/// Applies the options to `train`, fits, and attaches the scaler.
pub fn fit_pipeline(
    learner: MetaLearnerId,
    train: &MetaDataset,
    params: &Params,
    opts: CvOptions,
    seed: u64,
) -> Result<MetaModel> {
    let (scaler, mut rows) = if opts.normalize {
        let (s, t) = zscore_fit_transform(train)?;
        (Some(s), t)
    } else {
        (None, train.clone())
    };
    if opts.smote {
        rows = smote_oversample(&rows, opts.smote_k, seed)?;
    }
    let mut model = train_meta(learner, &rows, params, seed)?;
    model.scaler = scaler;
    Ok(model)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub params: Params,
    pub score: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: Params,
    pub trials: Vec<GridTrial>,
}

/// Scores one configuration: for every fold, a seeded 20% of the fold's
/// training rows is held out, the rest trains.
fn inner_score(
    learner: MetaLearnerId,
    ds: &MetaDataset,
    params: &Params,
    folds: &FoldPlan,
    opts: CvOptions,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..folds.n_folds() {
        let mut rows = folds.train_rows(f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(f as u64));
        rows.shuffle(&mut rng);
        let n_val = (rows.len() / 5).max(1);
        let (val, fit_rows) = rows.split_at(n_val);
        let model = fit_pipeline(learner, &ds.subset(fit_rows), params, opts, seed)?;
        let val_ds = ds.subset(val);
        let pred = model.predict_indices(&val_ds.features)?;
        total += accuracy(&pred, &val_ds.labels);
    }
    Ok(total / folds.n_folds() as f64)
}

/// Exhaustive sweep; failing configurations score 0. Ties keep the earliest
/// configuration in enumeration order. Trials carry fully resolved parameters.
pub fn grid_search(
    learner: MetaLearnerId,
    ds: &MetaDataset,
    grid: &Grid,
    folds: &FoldPlan,
    opts: CvOptions,
    seed: u64,
) -> Result<GridOutcome> {
    if grid.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(Error::InvalidArgument("grid must have at least one value per key".into()));
    }
    let configs = enumerate_grid(grid).iter().map(|c| learner.resolve(c)).collect::<Result<Vec<_>>>()?;
    let trials: Vec<GridTrial> = configs
        .into_par_iter()
        .map(|params| match inner_score(learner, ds, &params, folds, opts, seed) {
            Ok(score) => GridTrial { params, score, error: None },
            Err(e) => {
                warn!("{learner} {params:?} failed during grid search: {e}");
                GridTrial { params, score: 0.0, error: Some(e.to_string()) }
            }
        })
        .collect();
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.score > trials[best].score {
            best = i;
        }
    }
    Ok(GridOutcome { best: trials[best].params.clone(), trials })
}

/// Optional base-level scoring of the out-of-fold predictions.
#[derive(Clone, Copy, Debug)]
pub struct ImpactContext<'a> {
    pub table: &'a NdcgTable,
    pub fallback: BaseLearnerId,
}

struct FoldResult {
    pred: Vec<usize>,
    majority: usize,
}

pub fn cross_validate(
    learner: MetaLearnerId,
    ds: &MetaDataset,
    folds: &FoldPlan,
    params: &Params,
    opts: CvOptions,
    seed: u64,
    impact: Option<ImpactContext<'_>>,
) -> Result<MetaReport> {
    let params = learner.resolve(params)?;
    let results: Vec<FoldResult> = (0..folds.n_folds())
        .into_par_iter()
        .map(|f| {
            let train = ds.subset(&folds.train_rows(f));
            let test = ds.subset(&folds.folds[f]);
            let model = fit_pipeline(learner, &train, &params, opts, seed.wrapping_add(f as u64))?;
            let pred = model.predict_indices(&test.features)?;
            Ok(FoldResult { pred, majority: predict_majority(&train)?.class })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::InvalidArgument(format!("{learner} cross-validation: {e}")))?;

    let k = ds.n_classes();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut prediction: Vec<Option<(usize, usize)>> = vec![None; ds.n_rows()];
    let mut fold_summaries = Vec::new();
    let mut majority_hits = 0usize;
    for (f, res) in results.iter().enumerate() {
        let rows = &folds.folds[f];
        let mut hits = 0;
        for (&r, &p) in rows.iter().zip(&res.pred) {
            if prediction[r].replace((p, f)).is_some() {
                return Err(Error::InvalidArgument(format!("row {r} appears in more than one fold")));
            }
            confusion[ds.labels[r]][p] += 1;
            hits += usize::from(ds.labels[r] == p);
            majority_hits += usize::from(ds.labels[r] == res.majority);
        }
        fold_summaries.push(FoldSummary { fold: f, n_rows: rows.len(), accuracy: hits as f64 / rows.len().max(1) as f64 });
    }
    let prediction: Vec<(usize, usize)> = prediction
        .into_iter()
        .enumerate()
        .map(|(r, p)| p.ok_or_else(|| Error::InvalidArgument(format!("row {r} is in no fold"))))
        .collect::<Result<_>>()?;

    let class_names: Vec<String> = ds.classes.iter().map(|c| c.to_string()).collect();
    let metrics = classification_report(&confusion, &class_names);
    let predictions: Vec<_> = prediction.iter().map(|&(p, _)| ds.classes[p]).collect();
    let base_level_ndcg = match impact {
        None => None,
        Some(ctx) => {
            let index: HashMap<&str, usize> =
                ctx.table.user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
            let rows = ds
                .user_ids
                .iter()
                .map(|u| index.get(u.as_str()).copied().ok_or_else(|| Error::UnknownLabel(format!("user `{u}` has no NDCG row"))))
                .collect::<Result<Vec<_>>>()?;
            Some(base_level_impact(&predictions, &ctx.table.subset(&rows), ctx.fallback)?.mean)
        }
    };
    let n_folds = fold_summaries.len() as f64;
    Ok(MetaReport {
        learner: learner.to_string(),
        dataset: ds.provenance.clone(),
        normalize: opts.normalize,
        smote: opts.smote,
        params,
        class_names,
        accuracy: metrics.accuracy,
        fold_mean_accuracy: fold_summaries.iter().map(|f| f.accuracy).sum::<f64>() / n_folds,
        majority_accuracy: majority_hits as f64 / ds.n_rows().max(1) as f64,
        confusion,
        metrics,
        base_level_ndcg,
        folds: fold_summaries,
        predictions,
        prediction_fold: prediction.iter().map(|&(_, f)| f).collect(),
    })
}
