use crate::cf::Recommender;
use crate::error::{Error, Result};
use crate::sparse::SparseBinary;

/// Items ranked by training popularity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopularityModel {
    /// Permutation of item indices: descending count, ties by ascending index.
    pub item_order: Vec<u32>,
    pub counts: Vec<u64>,
    pub n_users: usize,
}

impl PopularityModel {
    pub fn from_counts(counts: Vec<u64>, n_users: usize) -> Self {
        let mut item_order: Vec<u32> = (0..counts.len() as u32).collect();
        item_order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        PopularityModel {
            item_order,
            counts,
            n_users,
        }
    }
}

impl Recommender for PopularityModel {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.counts.len()
    }

    /// Every user gets the same scores; the shared tie rule reproduces `item_order`.
    fn item_scores(&self, _user: usize) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

pub fn train_most_popular(train: &SparseBinary) -> Result<PopularityModel> {
    if train.n_cols() == 0 || train.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let counts = train.col_counts().into_iter().map(|c| c as u64).collect();
    Ok(PopularityModel::from_counts(counts, train.n_rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::recommend_top_k;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orders_by_descending_count() {
        let m = PopularityModel::from_counts(vec![5, 9, 1], 1);
        assert_eq!(m.item_order, vec![1, 0, 2]);
    }

    #[test]
    fn equal_counts_give_identity() {
        let m = PopularityModel::from_counts(vec![3; 6], 1);
        assert_eq!(m.item_order, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn random_matrix_matches_count_and_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<_> = (0..20)
            .flat_map(|u| (0..30).map(move |i| (u, i)))
            .filter(|_| rng.gen_bool(0.3))
            .collect();
        let train = SparseBinary::from_pairs(20, 30, &pairs).unwrap();
        let model = train_most_popular(&train).unwrap();

        let mut counts = vec![0u64; 30];
        for &(_, i) in &pairs {
            counts[i] += 1;
        }
        let mut expected: Vec<u32> = (0..30).collect();
        // Stable sort keeps index order among equal counts.
        expected.sort_by_key(|&i| std::cmp::Reverse(counts[i as usize]));
        assert_eq!(model.item_order, expected);
        assert_eq!(recommend_top_k(&model, 4, 3, &[]).unwrap(), expected[..3].to_vec());
    }
}
