//! Bayesian personalized ranking with uniform triple sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cf::{BaseLearnerId, MfModel};
use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::sparse::SparseBinary;

#[derive(Clone, Debug, PartialEq)]
pub struct BprConfig {
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            factors: 64,
            lr: 0.05,
            reg: 0.01,
            epochs: 30,
        }
    }
}

/// Checks that every user has at least one positive and one negative.
pub(crate) fn check_sampleable(train: &SparseBinary, learner: &str) -> Result<()> {
    for u in 0..train.n_rows() {
        let n = train.row_len(u);
        if n == 0 || n == train.n_cols() {
            return Err(Error::InvalidArgument(format!(
                "{learner}: user {u} has {n} of {} items; need at least one positive and one negative",
                train.n_cols()
            )));
        }
    }
    Ok(())
}

pub(crate) fn sample_negative(train: &SparseBinary, user: usize, rng: &mut ChaCha8Rng) -> usize {
    loop {
        let j = rng.gen_range(0..train.n_cols());
        if !train.contains(user, j) {
            return j;
        }
    }
}

pub fn train_bpr(train: &SparseBinary, cfg: &BprConfig, seed: u64) -> Result<MfModel> {
    if cfg.factors == 0 || !(cfg.lr > 0.0) || cfg.reg < 0.0 {
        return Err(Error::InvalidArgument(format!("invalid BPR config {cfg:?}")));
    }
    check_sampleable(train, "BPR")?;
    let mut model = MfModel::init(BaseLearnerId::Bpr, train.n_rows(), train.n_cols(), cfg.factors, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB9B);
    let pairs: Vec<(usize, usize)> = train.iter().collect();
    let f = cfg.factors;
    let mut xu = vec![0.0; f];
    for epoch in 0..cfg.epochs {
        for _ in 0..pairs.len() {
            let (u, i) = pairs[rng.gen_range(0..pairs.len())];
            let j = sample_negative(train, u, &mut rng);
            let diff = model.score(u, i) - model.score(u, j);
            let g = sigmoid(-diff);
            xu.copy_from_slice(model.user_factors.row(u).as_slice().unwrap());
            for d in 0..f {
                let yi = model.item_factors[[i, d]];
                let yj = model.item_factors[[j, d]];
                model.user_factors[[u, d]] += cfg.lr * (g * (yi - yj) - cfg.reg * xu[d]);
                model.item_factors[[i, d]] += cfg.lr * (g * xu[d] - cfg.reg * yi);
                model.item_factors[[j, d]] += cfg.lr * (-g * xu[d] - cfg.reg * yj);
            }
        }
        model
            .check_finite(|| format!("BPR epoch {epoch}, lr {}", cfg.lr))
            .map_err(|_| Error::diverged(format!("BPR epoch {epoch} with lr {}", cfg.lr)))?;
    }
    Ok(model)
}
