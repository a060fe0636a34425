//! Random forest: CART trees on bootstrap samples with per-split feature
//! subsampling, combined by averaging leaf class proportions.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{count, limit, Params};
use crate::error::Result;
use crate::metalearn::tree::{DecisionTree, TreeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_classes: usize,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.predict_proba(x)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}

/// Resolved forest settings; `bootstrap = false` trains every tree on all rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestConfig {
    pub trees: usize,
    pub bootstrap: bool,
    pub tree: TreeConfig,
}

pub(crate) fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_add((t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn fit_with(x: &Array2<f64>, y: &[usize], n_classes: usize, cfg: ForestConfig, seed: u64) -> ForestModel {
    let n = x.nrows();
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let rows: Vec<usize> =
                if cfg.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
            DecisionTree::fit(x, y, n_classes, rows, cfg.tree, &mut rng)
        })
        .collect();
    ForestModel { n_classes, trees }
}

/// `max_features = 0` means sqrt(n_features); `max_depth` <= 0 or infinite is unlimited.
pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, p: &Params, seed: u64) -> Result<ForestModel> {
    let d = x.ncols();
    let max_features = match limit(p, "max_features") {
        None => ((d as f64).sqrt().round() as usize).max(1),
        Some(m) => m.min(d),
    };
    let cfg = ForestConfig {
        trees: count(p, "trees", 1)?,
        bootstrap: true,
        tree: TreeConfig {
            max_depth: limit(p, "max_depth"),
            min_samples_leaf: count(p, "min_samples_leaf", 1)?,
            max_features: Some(max_features),
        },
    };
    Ok(fit_with(x, y, n_classes, cfg, seed))
}
