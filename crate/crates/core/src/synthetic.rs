//! Generator of explicit-rating datasets with planted user groups whose
//! interaction structure favours different base learners.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ExplicitDataset, Rating};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserGroup {
    /// Draws from the global Zipf popularity curve.
    Mainstream,
    /// Draws mostly from one item cluster.
    Niche(usize),
    /// Draws uniformly from the long tail.
    Erratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Items 0..head_items form the popular head.
    pub head_items: usize,
    pub n_clusters: usize,
    pub mainstream_share: f64,
    pub erratic_share: f64,
    pub min_interactions: usize,
    pub max_interactions: usize,
    pub zipf_exponent: f64,
    /// Probability a niche user's interaction comes from their cluster.
    pub niche_focus: f64,
    /// Extra low ratings per user, discarded by the implicit threshold.
    pub low_ratings: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 2000,
            n_items: 500,
            head_items: 50,
            n_clusters: 10,
            mainstream_share: 0.4,
            erratic_share: 0.3,
            min_interactions: 20,
            max_interactions: 40,
            zipf_exponent: 1.0,
            niche_focus: 0.85,
            low_ratings: 3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub ratings: ExplicitDataset,
    /// Planted group of user `u{i}`.
    pub groups: Vec<UserGroup>,
}

impl SyntheticData {
    /// `user_id,item_id,rating` CSV with a header row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::InvalidArgument(format!("writing ratings: {e}"));
        wr.write_record(["user_id", "item_id", "rating"]).map_err(err)?;
        for r in &self.ratings.rows {
            wr.write_record([r.user.as_str(), r.item.as_str(), &r.rating.to_string()]).map_err(err)?;
        }
        wr.flush().map_err(|e| Error::InvalidArgument(format!("writing ratings: {e}")))?;
        Ok(())
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let tail = cfg.n_items.saturating_sub(cfg.head_items);
    if cfg.n_users == 0 || cfg.head_items == 0 || cfg.n_clusters == 0 || tail < cfg.n_clusters {
        return Err(Error::InvalidArgument("synthetic config leaves no users, head items or clusters".into()));
    }
    if cfg.min_interactions == 0 || cfg.min_interactions > cfg.max_interactions || cfg.max_interactions > cfg.n_items / 2 {
        return Err(Error::InvalidArgument("interaction counts must satisfy 1 <= min <= max <= n_items / 2".into()));
    }
    if cfg.mainstream_share + cfg.erratic_share > 1.0 || cfg.mainstream_share < 0.0 || cfg.erratic_share < 0.0 {
        return Err(Error::InvalidArgument("group shares must be non-negative and sum to at most 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipf: Vec<f64> = (0..cfg.n_items).map(|i| 1.0 / ((i + 1) as f64).powf(cfg.zipf_exponent)).collect();
    let global = WeightedIndex::new(&zipf).expect("positive weights");
    let cluster_size = tail / cfg.n_clusters;
    let clusters: Vec<Vec<usize>> = (0..cfg.n_clusters)
        .map(|c| (cfg.head_items + c * cluster_size..cfg.head_items + (c + 1) * cluster_size).collect())
        .collect();
    // Within a cluster, popularity also decays so the cluster has structure.
    let cluster_pick =
        WeightedIndex::new((0..cluster_size).map(|i| 1.0 / (1.0 + i as f64).sqrt())).expect("positive weights");

    let n_main = (cfg.n_users as f64 * cfg.mainstream_share).round() as usize;
    let n_erratic = (cfg.n_users as f64 * cfg.erratic_share).round() as usize;
    let mut groups: Vec<UserGroup> = (0..cfg.n_users)
        .map(|u| {
            if u < n_main {
                UserGroup::Mainstream
            } else if u < n_main + n_erratic {
                UserGroup::Erratic
            } else {
                UserGroup::Niche(u % cfg.n_clusters)
            }
        })
        .collect();
    groups.shuffle(&mut rng);

    let mut rows = Vec::new();
    for (u, group) in groups.iter().enumerate() {
        let n = rng.gen_range(cfg.min_interactions..=cfg.max_interactions);
        let mut items: Vec<usize> = Vec::with_capacity(n);
        while items.len() < n {
            let item = match group {
                UserGroup::Mainstream => global.sample(&mut rng),
                UserGroup::Niche(c) => {
                    if rng.gen_bool(cfg.niche_focus) {
                        clusters[*c][cluster_pick.sample(&mut rng)]
                    } else {
                        global.sample(&mut rng)
                    }
                }
                UserGroup::Erratic => cfg.head_items + rng.gen_range(0..tail),
            };
            if !items.contains(&item) {
                items.push(item);
            }
        }
        let user = format!("u{u}");
        for item in items {
            let rating = if rng.gen_bool(0.5) { 4.0 } else { 5.0 };
            rows.push(Rating { user: user.clone(), item: format!("i{item}"), rating, timestamp: None });
        }
        for _ in 0..cfg.low_ratings {
            let item = rng.gen_range(0..cfg.n_items);
            let rating = rng.gen_range(1..=3) as f64;
            let item = format!("i{item}");
            if !rows.iter().rev().take(cfg.max_interactions + cfg.low_ratings).any(|r: &Rating| r.user == user && r.item == item) {
                rows.push(Rating { user: user.clone(), item, rating, timestamp: None });
            }
        }
    }
    Ok(SyntheticData { ratings: ExplicitDataset { rows }, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig { n_users: 200, n_items: 120, head_items: 20, n_clusters: 4, min_interactions: 15, max_interactions: 25, ..Default::default() }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.ratings, b.ratings);
        let mut pairs: Vec<(&str, &str)> = a.ratings.rows.iter().map(|r| (r.user.as_str(), r.item.as_str())).collect();
        let n = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), n);
        for u in 0..200 {
            let id = format!("u{u}");
            let pos = a.ratings.rows.iter().filter(|r| r.user == id && r.rating > 3.5).count();
            assert!((15..=25).contains(&pos));
        }
    }

    #[test]
    fn niche_users_stay_in_cluster() {
        let cfg = small();
        let d = generate(&cfg).unwrap();
        let size = (cfg.n_items - cfg.head_items) / cfg.n_clusters;
        let (mut inside, mut total) = (0, 0);
        for r in d.ratings.rows.iter().filter(|r| r.rating > 3.5) {
            let u: usize = r.user[1..].parse().unwrap();
            if let UserGroup::Niche(c) = d.groups[u] {
                let i: usize = r.item[1..].parse().unwrap();
                total += 1;
                inside += usize::from(i >= cfg.head_items + c * size && i < cfg.head_items + (c + 1) * size);
            }
        }
        assert!(inside as f64 / total as f64 > 0.75);
    }
}
