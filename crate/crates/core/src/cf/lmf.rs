//! Logistic matrix factorization trained by stochastic gradient ascent.
//! Each positive is weighted by `neg_ratio` so positive and sampled
//! negative mass are balanced.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cf::bpr::{check_sampleable, sample_negative};
use crate::cf::{BaseLearnerId, MfModel};
use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::sparse::SparseBinary;

#[derive(Clone, Debug, PartialEq)]
pub struct LmfConfig {
    pub factors: usize,
    pub lr: f64,
    pub reg: f64,
    pub neg_ratio: usize,
    pub epochs: usize,
}

impl Default for LmfConfig {
    fn default() -> Self {
        LmfConfig {
            factors: 64,
            lr: 0.05,
            reg: 0.01,
            neg_ratio: 4,
            epochs: 30,
        }
    }
}

fn step(model: &mut MfModel, u: usize, i: usize, label: f64, weight: f64, lr: f64, reg: f64) {
    // d/ds [l log σ(s) + (1-l) log σ(-s)] = l - σ(s)
    let g = weight * (label - sigmoid(model.score(u, i)));
    for d in 0..model.factors() {
        let x = model.user_factors[[u, d]];
        let y = model.item_factors[[i, d]];
        model.user_factors[[u, d]] += lr * (g * y - reg * x);
        model.item_factors[[i, d]] += lr * (g * x - reg * y);
    }
}

pub fn train_lmf(train: &SparseBinary, cfg: &LmfConfig, seed: u64) -> Result<MfModel> {
    if cfg.factors == 0 || !(cfg.lr > 0.0) || cfg.reg < 0.0 || cfg.neg_ratio == 0 {
        return Err(Error::InvalidArgument(format!("invalid LMF config {cfg:?}")));
    }
    check_sampleable(train, "LMF")?;
    let mut model = MfModel::init(BaseLearnerId::Lmf, train.n_rows(), train.n_cols(), cfg.factors, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1F);
    let mut pairs: Vec<(usize, usize)> = train.iter().collect();
    let pos_weight = cfg.neg_ratio as f64;
    for epoch in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        for &(u, i) in &pairs {
            step(&mut model, u, i, 1.0, pos_weight, cfg.lr, cfg.reg);
            for _ in 0..cfg.neg_ratio {
                let j = sample_negative(train, u, &mut rng);
                step(&mut model, u, j, 0.0, 1.0, cfg.lr, cfg.reg);
            }
        }
        model.check_finite(|| format!("LMF epoch {epoch} with lr {}", cfg.lr))?;
    }
    Ok(model)
}
