//! Per-user NDCG@K evaluation of the base learners, the best-learner
//! metatarget and the base-level impact of meta predictions.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::{recommend_top_k, BaseLearnerId, BaseModel};
use crate::error::{Error, Result};
use crate::ingest::PerUserSplit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k: 30 }
    }
}

/// Best-learner label of a user; `Zeroes` when every learner scored 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaLabel {
    #[serde(rename = "ALS")]
    Als,
    #[serde(rename = "BPR")]
    Bpr,
    #[serde(rename = "LMF")]
    Lmf,
    MostPopular,
    Zeroes,
}

impl MetaLabel {
    pub const ALL: [MetaLabel; 5] = [
        MetaLabel::Als,
        MetaLabel::Bpr,
        MetaLabel::Lmf,
        MetaLabel::MostPopular,
        MetaLabel::Zeroes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaLabel::Als => "ALS",
            MetaLabel::Bpr => "BPR",
            MetaLabel::Lmf => "LMF",
            MetaLabel::MostPopular => "MostPopular",
            MetaLabel::Zeroes => "Zeroes",
        }
    }

    pub fn learner(self) -> Option<BaseLearnerId> {
        match self {
            MetaLabel::Als => Some(BaseLearnerId::Als),
            MetaLabel::Bpr => Some(BaseLearnerId::Bpr),
            MetaLabel::Lmf => Some(BaseLearnerId::Lmf),
            MetaLabel::MostPopular => Some(BaseLearnerId::MostPopular),
            MetaLabel::Zeroes => None,
        }
    }

    /// The learner actually served: `Zeroes` maps to `fallback`.
    pub fn served(self, fallback: BaseLearnerId) -> BaseLearnerId {
        self.learner().unwrap_or(fallback)
    }
}

impl From<BaseLearnerId> for MetaLabel {
    fn from(b: BaseLearnerId) -> Self {
        MetaLabel::ALL[b.index()]
    }
}

impl fmt::Display for MetaLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLabel(s.to_owned()))
    }
}

/// Binary-relevance NDCG@k. IDCG is truncated at min(k, |relevant|); an
/// empty relevant set scores 0.
pub fn ndcg_at_k(recommended: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let listed = recommended.len().min(k);
    let ideal = relevant.len().min(k);
    let (mut dcg, mut idcg) = (0.0, 0.0);
    for p in 0..listed.max(ideal) {
        let discount = 1.0 / ((p + 2) as f64).log2();
        if p < ideal {
            idcg += discount;
        }
        if p < listed && relevant.contains(&recommended[p]) {
            dcg += discount;
        }
    }
    dcg / idcg
}

/// Per-user NDCG of every base learner, columns in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct NdcgTable {
    pub user_ids: Vec<String>,
    pub scores: Vec<[f64; 4]>,
}

impl NdcgTable {
    pub fn n_users(&self) -> usize {
        self.scores.len()
    }

    pub fn get(&self, user: usize, learner: BaseLearnerId) -> f64 {
        self.scores[user][learner.index()]
    }

    /// Rows restricted to `users`, in that order.
    pub fn subset(&self, users: &[usize]) -> NdcgTable {
        NdcgTable {
            user_ids: users.iter().map(|&u| self.user_ids[u].clone()).collect(),
            scores: users.iter().map(|&u| self.scores[u]).collect(),
        }
    }

    /// CSV `user_id,als,bpr,lmf,most_popular,label`.
    pub fn write_csv<W: Write>(&self, target: &MetaTarget, mut w: W) -> std::io::Result<()> {
        writeln!(w, "user_id,als,bpr,lmf,most_popular,label")?;
        for ((id, row), label) in self.user_ids.iter().zip(&self.scores).zip(&target.labels) {
            writeln!(w, "{id},{},{},{},{},{label}", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<(NdcgTable, MetaTarget)> {
        let mut table = NdcgTable { user_ids: Vec::new(), scores: Vec::new() };
        let mut labels = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            if n == 0 || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(Error::Parse { line: n + 1, message: "expected 6 fields".into() });
            }
            let mut row = [0.0; 4];
            for (c, v) in row.iter_mut().enumerate() {
                *v = parts[c + 1].parse().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("bad NDCG `{}`", parts[c + 1]),
                })?;
            }
            table.user_ids.push(parts[0].to_owned());
            table.scores.push(row);
            labels.push(parts[5].parse()?);
        }
        Ok((table, MetaTarget { labels }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaTarget {
    pub labels: Vec<MetaLabel>,
}

impl MetaTarget {
    pub fn counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for l in &self.labels {
            c[*l as usize] += 1;
        }
        c
    }
}

/// Fills the NDCG table: each learner recommends top-k excluding the user's
/// train and validation items, scored against the test items.
pub fn evaluate_all(
    models: &[BaseModel],
    split: &PerUserSplit,
    user_ids: &[String],
    cfg: &EvalConfig,
) -> Result<NdcgTable> {
    if models.len() != 4 || models.iter().zip(BaseLearnerId::ALL).any(|(m, b)| m.learner() != b) {
        return Err(Error::InvalidArgument("need one model per base learner in registry order".into()));
    }
    let n_users = split.train.n_rows();
    if user_ids.len() != n_users {
        return Err(Error::Shape(format!("{} user ids for {n_users} users", user_ids.len())));
    }
    let scores: Vec<Result<[f64; 4]>> = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let relevant: HashSet<u32> = split.test.row(u).iter().copied().collect();
            assert!(!relevant.is_empty(), "user {u} has an empty test set");
            let mut exclude = split.train.row(u).to_vec();
            exclude.extend_from_slice(split.validation.row(u));
            let mut row = [0.0; 4];
            for (b, model) in models.iter().enumerate() {
                let recs = recommend_top_k(model, u, cfg.k, &exclude)?;
                row[b] = ndcg_at_k(&recs, &relevant, cfg.k);
            }
            Ok(row)
        })
        .collect();
    Ok(NdcgTable {
        user_ids: user_ids.to_vec(),
        scores: scores.into_iter().collect::<Result<_>>()?,
    })
}

/// Argmax learner per user, ties by registry order; all-zero rows are `Zeroes`.
pub fn compute_metatarget(t: &NdcgTable) -> MetaTarget {
    let labels = t
        .scores
        .iter()
        .map(|row| {
            if row.iter().all(|&v| v == 0.0) {
                MetaLabel::Zeroes
            } else {
                MetaLabel::ALL[crate::linalg::argmax(row)]
            }
        })
        .collect();
    MetaTarget { labels }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Impact {
    pub mean: f64,
    pub per_user: Vec<f64>,
}

/// Mean NDCG obtained by serving each user the predicted learner.
pub fn base_level_impact(predictions: &[MetaLabel], t: &NdcgTable, fallback: BaseLearnerId) -> Result<Impact> {
    if predictions.len() != t.n_users() {
        return Err(Error::Shape(format!(
            "{} predictions for {} users",
            predictions.len(),
            t.n_users()
        )));
    }
    let per_user: Vec<f64> = predictions
        .iter()
        .enumerate()
        .map(|(u, p)| t.get(u, p.served(fallback)))
        .collect();
    let mean = if per_user.is_empty() {
        0.0
    } else {
        per_user.iter().sum::<f64>() / per_user.len() as f64
    };
    Ok(Impact { mean, per_user })
}

/// Impact of string labels, rejecting unknown names.
pub fn base_level_impact_named(predictions: &[&str], t: &NdcgTable, fallback: BaseLearnerId) -> Result<Impact> {
    let labels = predictions.iter().map(|p| p.parse()).collect::<Result<Vec<MetaLabel>>>()?;
    base_level_impact(&labels, t, fallback)
}
