//! Collaborative-filtering base learners and top-K recommendation.

mod als;
mod bpr;
mod lmf;
mod popular;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use als::{als_objective, als_sweep, fold_in_user, train_als, AlsConfig};
pub use bpr::{train_bpr, BprConfig};
pub use lmf::{train_lmf, LmfConfig};
pub use popular::{train_most_popular, PopularityModel};

/// The base-learner registry. Declaration order is the tie-break order
/// used everywhere downstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseLearnerId {
    #[serde(rename = "ALS")]
    Als,
    #[serde(rename = "BPR")]
    Bpr,
    #[serde(rename = "LMF")]
    Lmf,
    MostPopular,
}

impl BaseLearnerId {
    pub const ALL: [BaseLearnerId; 4] = [
        BaseLearnerId::Als,
        BaseLearnerId::Bpr,
        BaseLearnerId::Lmf,
        BaseLearnerId::MostPopular,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseLearnerId::Als => "ALS",
            BaseLearnerId::Bpr => "BPR",
            BaseLearnerId::Lmf => "LMF",
            BaseLearnerId::MostPopular => "MostPopular",
        }
    }

    /// Lowercase key used in file names and CSV headers.
    pub fn key(self) -> &'static str {
        match self {
            BaseLearnerId::Als => "als",
            BaseLearnerId::Bpr => "bpr",
            BaseLearnerId::Lmf => "lmf",
            BaseLearnerId::MostPopular => "most_popular",
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for BaseLearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseLearnerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s) || b.key() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_owned()))
    }
}

/// A latent-factor model: score(u, i) = dot(user_factors[u], item_factors[i]).
#[derive(Clone, Debug, PartialEq)]
pub struct MfModel {
    pub learner: BaseLearnerId,
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
    pub seed: u64,
}

impl MfModel {
    pub fn factors(&self) -> usize {
        self.user_factors.ncols()
    }

    /// Seeded uniform initialization in [-0.01, 0.01], users first.
    pub fn init(learner: BaseLearnerId, n_users: usize, n_items: usize, f: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| Array2::from_shape_simple_fn((n, f), || rng.gen_range(-0.01..=0.01));
        let user_factors = draw(n_users);
        let item_factors = draw(n_items);
        MfModel {
            learner,
            user_factors,
            item_factors,
            seed,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.user_factors.row(user).dot(&self.item_factors.row(item))
    }

    pub fn scores_for(&self, user_vec: &[f64]) -> Vec<f64> {
        self.item_factors
            .rows()
            .into_iter()
            .map(|y| y.iter().zip(user_vec).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub(crate) fn check_finite(&self, context: impl FnOnce() -> String) -> Result<()> {
        let finite = self.user_factors.iter().chain(self.item_factors.iter()).all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::diverged(context()))
        }
    }
}

/// Anything that can score every item for a known user.
pub trait Recommender {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn item_scores(&self, user: usize) -> Vec<f64>;
}

impl Recommender for MfModel {
    fn n_users(&self) -> usize {
        self.user_factors.nrows()
    }

    fn n_items(&self) -> usize {
        self.item_factors.nrows()
    }

    fn item_scores(&self, user: usize) -> Vec<f64> {
        self.item_factors.dot(&self.user_factors.row(user)).to_vec()
    }
}

/// A trained base model of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseModel {
    Mf(MfModel),
    Popular(PopularityModel),
}

impl BaseModel {
    pub fn learner(&self) -> BaseLearnerId {
        match self {
            BaseModel::Mf(m) => m.learner,
            BaseModel::Popular(_) => BaseLearnerId::MostPopular,
        }
    }
}

impl Recommender for BaseModel {
    fn n_users(&self) -> usize {
        match self {
            BaseModel::Mf(m) => m.n_users(),
            BaseModel::Popular(p) => p.n_users(),
        }
    }

    fn n_items(&self) -> usize {
        match self {
            BaseModel::Mf(m) => m.n_items(),
            BaseModel::Popular(p) => p.n_items(),
        }
    }

    fn item_scores(&self, user: usize) -> Vec<f64> {
        match self {
            BaseModel::Mf(m) => m.item_scores(user),
            BaseModel::Popular(p) => p.item_scores(user),
        }
    }
}

/// The `k` best-scoring items outside `exclude`, by descending score with
/// ties broken by ascending item index.
pub fn top_k_from_scores(scores: &[f64], k: usize, exclude: &[u32]) -> Vec<u32> {
    let mut excluded = vec![false; scores.len()];
    for &i in exclude {
        if let Some(e) = excluded.get_mut(i as usize) {
            *e = true;
        }
    }
    let mut cands: Vec<u32> = (0..scores.len() as u32).filter(|&i| !excluded[i as usize]).collect();
    let cmp = |a: &u32, b: &u32| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b));
    if k == 0 {
        return Vec::new();
    }
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_unstable_by(cmp);
    cands
}

pub fn recommend_top_k<R: Recommender + ?Sized>(
    model: &R,
    user: usize,
    k: usize,
    exclude: &[u32],
) -> Result<Vec<u32>> {
    if user >= model.n_users() {
        return Err(Error::OutOfRange {
            index: user,
            len: model.n_users(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(top_k_from_scores(&model.item_scores(user), k, exclude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn brute_force_top_k(scores: &[f64], k: usize, exclude: &[u32]) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| !exclude.contains(&(*i as u32)))
            .map(|(i, &s)| (s, i as u32))
            .collect();
        // Stable sort on descending score keeps ascending index among ties.
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn hand_set_factors_match_full_sort() {
        let model = MfModel {
            learner: BaseLearnerId::Als,
            user_factors: array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
            item_factors: array![[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.1, 0.1], [0.5, 0.5]],
            seed: 0,
        };
        for u in 0..3 {
            let scores = model.item_scores(u);
            for k in 1..=5 {
                assert_eq!(
                    recommend_top_k(&model, u, k, &[1]).unwrap(),
                    brute_force_top_k(&scores, k, &[1])
                );
            }
        }
        // Items 0, 1, 2 and 4 tie for user 2; lower indices win.
        assert_eq!(recommend_top_k(&model, 2, 2, &[]).unwrap(), vec![0, 1]);
        assert_eq!(recommend_top_k(&model, 2, 3, &[1]).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn excluding_everything_gives_empty_list() {
        let model = MfModel::init(BaseLearnerId::Als, 2, 3, 2, 1);
        assert!(recommend_top_k(&model, 0, 3, &[0, 1, 2]).unwrap().is_empty());
        assert!(recommend_top_k(&model, 2, 3, &[]).is_err());
    }

    #[test]
    fn swapping_user_rows_swaps_lists() {
        let mut m = MfModel::init(BaseLearnerId::Bpr, 3, 12, 4, 9);
        let a = recommend_top_k(&m, 0, 5, &[]).unwrap();
        let b = recommend_top_k(&m, 2, 5, &[]).unwrap();
        let r0 = m.user_factors.row(0).to_owned();
        let r2 = m.user_factors.row(2).to_owned();
        m.user_factors.row_mut(0).assign(&r2);
        m.user_factors.row_mut(2).assign(&r0);
        assert_eq!(recommend_top_k(&m, 0, 5, &[]).unwrap(), b);
        assert_eq!(recommend_top_k(&m, 2, 5, &[]).unwrap(), a);
    }

    #[test]
    fn learner_names_round_trip() {
        for b in BaseLearnerId::ALL {
            assert_eq!(b.name().parse::<BaseLearnerId>().unwrap(), b);
            assert_eq!(b.key().parse::<BaseLearnerId>().unwrap(), b);
            assert_eq!(BaseLearnerId::from_index(b.index()), Some(b));
        }
    }

    proptest! {
        #[test]
        fn top_k_is_sorted_unique_and_respects_exclusion(
            scores in prop::collection::vec(-3i32..3, 1..40),
            k in 1usize..12,
            exclude in prop::collection::vec(0u32..40, 0..10),
        ) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let got = top_k_from_scores(&scores, k, &exclude);
            prop_assert_eq!(&got, &brute_force_top_k(&scores, k, &exclude));
            let mut seen = std::collections::HashSet::new();
            for w in got.windows(2) {
                prop_assert!(scores[w[0] as usize] >= scores[w[1] as usize]);
            }
            for i in &got {
                prop_assert!(seen.insert(*i));
                prop_assert!(!exclude.contains(i));
            }
        }
    }
}
