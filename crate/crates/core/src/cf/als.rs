//! Implicit-feedback ALS with confidence weighting c = 1 + alpha * p.

use ndarray::Array2;
use rayon::prelude::*;

use crate::cf::{BaseLearnerId, MfModel};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::sparse::SparseBinary;

#[derive(Clone, Debug, PartialEq)]
pub struct AlsConfig {
    pub factors: usize,
    pub reg: f64,
    pub alpha: f64,
    pub iters: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            factors: 64,
            reg: 0.01,
            alpha: 40.0,
            iters: 15,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 || !(self.reg > 0.0) || !(self.alpha > 0.0) || self.iters == 0 {
            return Err(Error::InvalidArgument(format!(
                "ALS needs factors >= 1, reg > 0, alpha > 0, iters >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

pub fn train_als(train: &SparseBinary, cfg: &AlsConfig, seed: u64) -> Result<MfModel> {
    cfg.validate()?;
    let mut model = MfModel::init(BaseLearnerId::Als, train.n_rows(), train.n_cols(), cfg.factors, seed);
    let train_t = train.transpose();
    for it in 0..cfg.iters {
        als_sweep(train, &train_t, &mut model, cfg)?;
        model.check_finite(|| format!("ALS sweep {it}"))?;
    }
    Ok(model)
}

/// One full sweep: exact user solves against fixed items, then exact item
/// solves against fixed users.
pub fn als_sweep(train: &SparseBinary, train_t: &SparseBinary, model: &mut MfModel, cfg: &AlsConfig) -> Result<()> {
    model.user_factors = solve_side(train, &model.item_factors, cfg)?;
    model.item_factors = solve_side(train_t, &model.user_factors, cfg)?;
    Ok(())
}

fn gram(fixed: &Array2<f64>) -> Vec<f64> {
    let g = fixed.t().dot(fixed);
    g.iter().copied().collect()
}

fn solve_side(rows: &SparseBinary, fixed: &Array2<f64>, cfg: &AlsConfig) -> Result<Array2<f64>> {
    let f = fixed.ncols();
    let yty = gram(fixed);
    let solved: Vec<Option<Vec<f64>>> = (0..rows.n_rows())
        .into_par_iter()
        .map(|r| solve_one(rows.row(r), fixed, &yty, cfg.reg, cfg.alpha))
        .collect();
    let mut out = Array2::zeros((rows.n_rows(), f));
    for (r, x) in solved.into_iter().enumerate() {
        let x = x.ok_or_else(|| Error::diverged(format!("ALS normal equations for row {r}")))?;
        out.row_mut(r).assign(&ndarray::ArrayView1::from(&x));
    }
    Ok(out)
}

fn solve_one(items: &[u32], fixed: &Array2<f64>, yty: &[f64], reg: f64, alpha: f64) -> Option<Vec<f64>> {
    let f = fixed.ncols();
    let mut a = yty.to_vec();
    let mut b = vec![0.0; f];
    for d in 0..f {
        a[d * f + d] += reg;
    }
    for &i in items {
        let y = fixed.row(i as usize);
        for p in 0..f {
            let yp = y[p];
            b[p] += (1.0 + alpha) * yp;
            for q in 0..f {
                a[p * f + q] += alpha * yp * y[q];
            }
        }
    }
    cholesky_solve(&mut a, &mut b, f)?;
    Some(b)
}

/// Solves for a new user's factors from an interaction list against the
/// trained item factors.
pub fn fold_in_user(model: &MfModel, items: &[u32], reg: f64, alpha: f64) -> Option<Vec<f64>> {
    let yty = gram(&model.item_factors);
    solve_one(items, &model.item_factors, &yty, reg, alpha)
}

/// Weighted regularized loss over all cells:
/// sum c_ui (p_ui - s_ui)^2 + reg (|X|^2 + |Y|^2).
pub fn als_objective(train: &SparseBinary, model: &MfModel, reg: f64, alpha: f64) -> f64 {
    let yty = model.item_factors.t().dot(&model.item_factors);
    let mut loss = 0.0;
    for u in 0..train.n_rows() {
        let x = model.user_factors.row(u);
        // All cells treated as unobserved, then corrected on observed ones.
        loss += x.dot(&yty.dot(&x));
        for &i in train.row(u) {
            let s = model.score(u, i as usize);
            loss += (1.0 + alpha) * (1.0 - s).powi(2) - s * s;
        }
    }
    let norms: f64 = model.user_factors.iter().chain(model.item_factors.iter()).map(|v| v * v).sum();
    loss + reg * norms
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::Recommender;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_objective(train: &SparseBinary, m: &MfModel, reg: f64, alpha: f64) -> f64 {
        let mut loss = 0.0;
        for u in 0..train.n_rows() {
            for i in 0..train.n_cols() {
                let p = if train.contains(u, i) { 1.0 } else { 0.0 };
                let c = 1.0 + alpha * p;
                loss += c * (p - m.score(u, i)).powi(2);
            }
        }
        let norms: f64 = m.user_factors.iter().chain(m.item_factors.iter()).map(|v| v * v).sum();
        loss + reg * norms
    }

    #[test]
    fn single_cell_scores_positive() {
        let train = SparseBinary::from_pairs(1, 1, &[(0, 0)]).unwrap();
        let cfg = AlsConfig { factors: 1, iters: 3, ..AlsConfig::default() };
        let m = train_als(&train, &cfg, 5).unwrap();
        assert!(m.score(0, 0) > 0.0);
    }

    #[test]
    fn block_structure_recovered() {
        // Users 0..4 like items 0..5; users 4..8 like items 5..10.
        let pairs: Vec<_> = (0..8)
            .flat_map(|u| {
                let items = if u < 4 { 0..5 } else { 5..10 };
                items.map(move |i| (u, i))
            })
            .collect();
        let train = SparseBinary::from_pairs(8, 10, &pairs).unwrap();
        let cfg = AlsConfig { factors: 2, iters: 10, alpha: 10.0, reg: 0.1 };
        let m = train_als(&train, &cfg, 1).unwrap();
        for u in 0..8 {
            let s = m.item_scores(u);
            let (own, other) = if u < 4 { (0..5, 5..10) } else { (5..10, 0..5) };
            let min_own = own.map(|i| s[i]).fold(f64::INFINITY, f64::min);
            let max_other = other.map(|i| s[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(min_own > max_other, "user {u}: {min_own} <= {max_other}");
        }
    }

    #[test]
    fn objective_non_increasing_and_fast_formula_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<_> = (0..12)
            .flat_map(|u| (0..9).map(move |i| (u, i)))
            .filter(|_| rng.gen_bool(0.3))
            .collect();
        let train = SparseBinary::from_pairs(12, 9, &pairs).unwrap();
        let train_t = train.transpose();
        let cfg = AlsConfig { factors: 3, iters: 1, reg: 0.05, alpha: 5.0 };
        let mut m = MfModel::init(BaseLearnerId::Als, 12, 9, 3, 4);
        let mut prev = brute_objective(&train, &m, cfg.reg, cfg.alpha);
        for _ in 0..5 {
            als_sweep(&train, &train_t, &mut m, &cfg).unwrap();
            let obj = brute_objective(&train, &m, cfg.reg, cfg.alpha);
            assert!((obj - als_objective(&train, &m, cfg.reg, cfg.alpha)).abs() < 1e-9 * obj.max(1.0));
            assert!(obj <= prev + 1e-9, "{obj} > {prev}");
            prev = obj;
        }
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let train = SparseBinary::from_pairs(5, 6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)]).unwrap();
        let cfg = AlsConfig { factors: 4, iters: 3, ..AlsConfig::default() };
        assert_eq!(train_als(&train, &cfg, 3).unwrap(), train_als(&train, &cfg, 3).unwrap());
    }

    #[test]
    fn fold_in_matches_a_user_solve() {
        let pairs: Vec<_> = (0..6).flat_map(|u| (0..4).map(move |i| (u, (i + u) % 7))).collect();
        let train = SparseBinary::from_pairs(6, 7, &pairs).unwrap();
        let cfg = AlsConfig { factors: 3, iters: 4, ..AlsConfig::default() };
        let m = train_als(&train, &cfg, 8).unwrap();
        let x = fold_in_user(&m, train.row(2), cfg.reg, cfg.alpha).unwrap();
        // The last half-sweep solved items, so recompute user 2 explicitly.
        let mut again = m.clone();
        again.user_factors = solve_side(&train, &m.item_factors, &cfg).unwrap();
        for (a, b) in x.iter().zip(again.user_factors.row(2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let train = SparseBinary::from_pairs(1, 1, &[(0, 0)]).unwrap();
        assert!(train_als(&train, &AlsConfig { reg: 0.0, ..AlsConfig::default() }, 0).is_err());
    }
}
