//! Gradient-boosted regression trees on the multiclass softmax objective.
//!
//! Each round fits one depth-limited tree per class to the Newton step of the
//! cross-entropy (gradient p - y, hessian p (1 - p)); splits are searched over
//! per-feature quantile histograms.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{count, non_negative, positive, Params};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf(v) => return *v,
                RegNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Log class priors.
    pub base: Vec<f64>,
    /// One tree per class per round; leaf values already include the learning rate.
    pub rounds: Vec<Vec<RegTree>>,
}

impl GbtModel {
    /// Raw class margins (softmax logits).
    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut s = self.base.clone();
        for round in &self.rounds {
            for (k, t) in round.iter().enumerate() {
                s[k] += t.value(x);
            }
        }
        s
    }
}

/// Quantile cut points and per-row bin codes for one feature. Row value v
/// falls in the first bin b with v <= cuts[b], or in bin cuts.len().
struct Binned {
    cuts: Vec<Vec<f64>>,
    codes: Vec<Vec<u16>>,
}

fn bin_features(x: &Array2<f64>, max_bins: usize) -> Binned {
    let (cuts, codes): (Vec<Vec<f64>>, Vec<Vec<u16>>) = x
        .columns()
        .into_iter()
        .map(|col| {
            let mut v: Vec<f64> = col.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            let cuts: Vec<f64> = if v.len() <= max_bins {
                v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c: Vec<f64> = (1..max_bins)
                    .map(|j| {
                        let i = j * v.len() / max_bins;
                        0.5 * (v[i - 1] + v[i])
                    })
                    .collect();
                c.dedup();
                c
            };
            let codes = col.iter().map(|&val| cuts.partition_point(|&c| c < val) as u16).collect();
            (cuts, codes)
        })
        .unzip();
    Binned { cuts, codes }
}

struct TreeParams {
    depth: usize,
    lambda: f64,
    min_child_weight: f64,
    lr: f64,
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn grow(bins: &Binned, g: &[f64], h: &[f64], rows: Vec<usize>, depth: usize, tp: &TreeParams, nodes: &mut Vec<RegNode>) -> usize {
    let (gs, hs) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + g[r], b + h[r]));
    let id = nodes.len();
    nodes.push(RegNode::Leaf(tp.lr * leaf_weight(gs, hs, tp.lambda)));
    if depth >= tp.depth || rows.len() < 2 {
        return id;
    }
    let parent = score(gs, hs, tp.lambda);
    // Best split per feature, computed in parallel and reduced in feature order.
    let best = (0..bins.cuts.len())
        .into_par_iter()
        .map(|f| {
            let n_bins = bins.cuts[f].len() + 1;
            let mut hg = vec![0.0; n_bins];
            let mut hh = vec![0.0; n_bins];
            for &r in &rows {
                let b = bins.codes[f][r] as usize;
                hg[b] += g[r];
                hh[b] += h[r];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut best: Option<(f64, usize)> = None;
            for b in 0..n_bins - 1 {
                gl += hg[b];
                hl += hh[b];
                let (gr, hr) = (gs - gl, hs - hl);
                if hl < tp.min_child_weight || hr < tp.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl, tp.lambda) + score(gr, hr, tp.lambda) - parent);
                if best.is_none_or(|(bg, _)| gain > bg) {
                    best = Some((gain, b));
                }
            }
            best.map(|(gain, b)| (gain, f, b))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, usize, usize)>, c| match acc {
            Some(a) if a.0 >= c.0 => Some(a),
            _ => Some(c),
        });
    let Some((gain, feature, bin)) = best else { return id };
    if gain <= 1e-12 {
        return id;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| bins.codes[feature][i] as usize <= bin);
    if l.is_empty() || r.is_empty() {
        return id;
    }
    let left = grow(bins, g, h, l, depth + 1, tp, nodes);
    let right = grow(bins, g, h, r, depth + 1, tp, nodes);
    nodes[id] = RegNode::Split { feature, threshold: bins.cuts[feature][bin], left, right };
    id
}

pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, p: &Params) -> Result<GbtModel> {
    let n_rounds = count(p, "trees", 0)?;
    let max_bins = count(p, "bins", 2)?.min(u16::MAX as usize);
    let tp = TreeParams {
        depth: count(p, "depth", 1)?,
        lambda: non_negative(p, "lambda")?,
        min_child_weight: non_negative(p, "min_child_weight")?,
        lr: positive(p, "lr")?,
    };
    let n = x.nrows();
    let bins = bin_features(x, max_bins);
    let mut prior = vec![0.0; n_classes];
    for &l in y {
        prior[l] += 1.0;
    }
    let base: Vec<f64> = prior.iter().map(|c| (c / n as f64).max(1e-12).ln()).collect();
    let mut margins: Vec<Vec<f64>> = vec![base.clone(); n];
    let mut rounds = Vec::with_capacity(n_rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for round in 0..n_rounds {
        let probs: Vec<Vec<f64>> = margins
            .iter()
            .map(|m| {
                let mx = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = m.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let mut trees = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..n {
                let pk = probs[i][k];
                g[i] = pk - if y[i] == k { 1.0 } else { 0.0 };
                h[i] = (pk * (1.0 - pk)).max(1e-16);
            }
            let mut nodes = Vec::new();
            grow(&bins, &g, &h, (0..n).collect(), 0, &tp, &mut nodes);
            trees.push(RegTree { nodes });
        }
        for (i, m) in margins.iter_mut().enumerate() {
            for (k, t) in trees.iter().enumerate() {
                m[k] += t.value(x.row(i));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::diverged(format!("gradient boosting at round {round}")));
            }
        }
        rounds.push(trees);
    }
    Ok(GbtModel { base, rounds })
}
