//! Serving: pick a base learner for one user and return its recommendations.

use std::collections::BTreeSet;

use anyhow::anyhow;
use log::warn;
use metaselect_core::cf::{fold_in_user, top_k_from_scores, BaseModel, Recommender};
use metaselect_core::{BaseLearnerId, MetaLabel};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::stages::{
    load_base_model, load_prepared, read_embedding, Context, SelectorArtifact, BASE, EMBED, META, PREPARE,
    SELECTOR_PATH,
};

pub const INFER: &str = "infer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferResult {
    pub user: String,
    pub known_user: bool,
    /// Selector output, absent for users without an embedding.
    pub predicted_label: Option<MetaLabel>,
    pub served_learner: BaseLearnerId,
    pub fallback_used: bool,
    pub reason: String,
    pub recommendations: Vec<String>,
    pub unknown_items: Vec<String>,
}

/// The base learner served for a selector output, whether the fallback was
/// used, and a human-readable reason. `None` means the user has no embedding.
pub fn choose_learner(label: Option<MetaLabel>, fallback: BaseLearnerId) -> (BaseLearnerId, bool, String) {
    match label {
        None => (fallback, true, format!("unknown user, serving fallback {}", fallback.name())),
        Some(MetaLabel::Zeroes) => {
            (fallback, true, format!("selector predicted Zeroes, serving fallback {}", fallback.name()))
        }
        Some(l) => (l.served(fallback), false, format!("selector predicted {l}")),
    }
}

/// Recommends `k` items for `user`. `items` are extra interactions to
/// exclude and, for users outside the training data, the fold-in history.
pub fn infer(ctx: &Context, user: &str, items: &[String], k: usize) -> CliResult<InferResult> {
    for s in [PREPARE, BASE, EMBED] {
        ctx.completed(s)?;
    }
    let meta = ctx.completed(META)?;
    let bytes = ctx.work.read_verified(&meta, SELECTOR_PATH)?;
    let stage = |e: anyhow::Error| CliError::stage(INFER, e);
    let selector: SelectorArtifact = serde_json::from_slice(&bytes).map_err(|e| stage(e.into()))?;
    let fallback = ctx.cfg.meta.fallback().map_err(CliError::Config)?;
    let p = load_prepared(ctx).map_err(stage)?;

    let mut provided = BTreeSet::new();
    let mut unknown_items = Vec::new();
    for it in items {
        match p.items.get(it) {
            Some(i) => {
                provided.insert(i as u32);
            }
            None => {
                warn!("unknown item {it} ignored");
                unknown_items.push(it.clone());
            }
        }
    }

    let result = match p.users.get(user) {
        Some(u) => {
            let entry = ctx
                .cfg
                .embed
                .iter()
                .find(|e| e.name().ok().as_deref() == Some(selector.embedding.as_str()))
                .ok_or_else(|| stage(anyhow!("embedding {} is not configured", selector.embedding)))?;
            let emb = read_embedding(ctx, entry).map_err(stage)?;
            let row = emb
                .user_ids
                .iter()
                .position(|id| id == user)
                .ok_or_else(|| stage(anyhow!("user {user} has no embedding row")))?;
            let x = Array2::from_shape_vec((1, emb.dim()), emb.values.row(row).to_vec())
                .map_err(|e| stage(e.into()))?;
            let label = selector.model.predict(&x).map_err(|e| stage(e.into()))?[0];
            let (served, fallback_used, reason) = choose_learner(Some(label), fallback);
            let model = load_base_model(ctx, served).map_err(stage)?;
            let mut exclude: BTreeSet<u32> = provided.clone();
            exclude.extend(p.split.train.row(u));
            exclude.extend(p.split.validation.row(u));
            let exclude: Vec<u32> = exclude.into_iter().collect();
            let recs = top_k_from_scores(&model.item_scores(u), k, &exclude);
            InferResult {
                user: user.to_owned(),
                known_user: true,
                predicted_label: Some(label),
                served_learner: served,
                fallback_used,
                reason,
                recommendations: recs.iter().map(|&i| p.items.id(i as usize).to_owned()).collect(),
                unknown_items,
            }
        }
        None => {
            let history: Vec<u32> = provided.iter().copied().collect();
            let model = load_base_model(ctx, fallback).map_err(stage)?;
            let (scores, served, reason) = match &model {
                BaseModel::Mf(m) => {
                    let als = &ctx.cfg.base.als;
                    match fold_in_user(m, &history, als.reg, als.alpha) {
                        Some(v) => (m.scores_for(&v), fallback, format!("unknown user, {} folded in", fallback.name())),
                        None => {
                            let pop = load_base_model(ctx, BaseLearnerId::MostPopular).map_err(stage)?;
                            let reason = "unknown user without known items, serving MostPopular".to_owned();
                            (pop.item_scores(0), BaseLearnerId::MostPopular, reason)
                        }
                    }
                }
                BaseModel::Popular(pm) => {
                    let (served, _, reason) = choose_learner(None, fallback);
                    (pm.item_scores(0), served, reason)
                }
            };
            let recs = top_k_from_scores(&scores, k, &history);
            InferResult {
                user: user.to_owned(),
                known_user: false,
                predicted_label: None,
                served_learner: served,
                fallback_used: true,
                reason,
                recommendations: recs.iter().map(|&i| p.items.id(i as usize).to_owned()).collect(),
                unknown_items,
            }
        }
    };
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroes_and_unknown_users_get_the_fallback() {
        let fb = BaseLearnerId::MostPopular;
        assert_eq!(choose_learner(Some(MetaLabel::Zeroes), fb).0, fb);
        assert!(choose_learner(Some(MetaLabel::Zeroes), fb).1);
        assert_eq!(choose_learner(None, fb).0, fb);
        assert_eq!(choose_learner(Some(MetaLabel::Als), fb), (BaseLearnerId::Als, false, "selector predicted ALS".into()));
        assert_eq!(choose_learner(Some(MetaLabel::Zeroes), BaseLearnerId::Lmf).0, BaseLearnerId::Lmf);
    }
}
