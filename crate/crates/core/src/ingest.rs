//! Rating ingestion: explicit ratings file, implicit conversion, sparsity
//! filtering and the per-user train/validation/test split.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseBinary;

#[derive(Clone, Debug, PartialEq)]
pub struct Rating {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Explicit ratings with at most one row per (user, item).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExplicitDataset {
    pub rows: Vec<Rating>,
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// Bidirectional map between dense indices and external ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id `{id}`")));
            }
        }
        Ok(IdMap { ids, index })
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Binary user × item interaction matrix with its id maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitDataset {
    pub interactions: SparseBinary,
    pub users: IdMap,
    pub items: IdMap,
}

impl ImplicitDataset {
    pub fn n_users(&self) -> usize {
        self.interactions.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.interactions.n_cols()
    }
}

/// Disjoint per-user partition of an interaction matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PerUserSplit {
    pub train: SparseBinary,
    pub validation: SparseBinary,
    pub test: SparseBinary,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

pub fn load_ratings(path: &Path, opts: &LoadOptions) -> Result<ExplicitDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, opts)
}

/// Parses `user,item,rating[,timestamp]` rows. Repeated (user, item) pairs
/// keep the position of their first occurrence and the value of the last.
pub fn read_ratings<R: Read>(reader: R, opts: &LoadOptions) -> Result<ExplicitDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<Rating> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 3 || record.len() > 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 or 4 fields, found {}", record.len()),
            });
        }
        let rating: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("rating `{}` is not a number", &record[2]),
        })?;
        if !rating.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("rating `{}` is not finite", &record[2]),
            });
        }
        let timestamp = match record.get(3) {
            Some(s) if !s.is_empty() => Some(s.parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("timestamp `{s}` is not an integer"),
            })?),
            _ => None,
        };
        let row = Rating {
            user: record[0].to_owned(),
            item: record[1].to_owned(),
            rating,
            timestamp,
        };
        match seen.get(&(row.user.clone(), row.item.clone())) {
            Some(&pos) => rows[pos] = row,
            None => {
                seen.insert((row.user.clone(), row.item.clone()), rows.len());
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ExplicitDataset { rows })
}

/// Keeps ratings strictly greater than `threshold` as interactions. Ids are
/// assigned in order of first surviving appearance.
pub fn to_implicit(d: &ExplicitDataset, threshold: f64) -> Result<ImplicitDataset> {
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold {threshold} is not finite")));
    }
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut pairs = Vec::new();
    for r in d.rows.iter().filter(|r| r.rating > threshold) {
        pairs.push((users.intern(&r.user), items.intern(&r.item)));
    }
    let interactions = SparseBinary::from_pairs(users.len(), items.len(), &pairs)?;
    Ok(ImplicitDataset {
        interactions,
        users,
        items,
    })
}

/// Drops users and items with fewer than `min_count` interactions, repeating
/// until every surviving row and column meets the threshold.
pub fn filter_min_interactions(d: &ImplicitDataset, min_count: usize) -> Result<ImplicitDataset> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let m = &d.interactions;
    let mut user_alive = vec![true; m.n_rows()];
    let mut item_alive = vec![true; m.n_cols()];
    loop {
        let mut changed = false;
        let mut item_counts = vec![0usize; m.n_cols()];
        for u in 0..m.n_rows() {
            if !user_alive[u] {
                continue;
            }
            let n = m.row(u).iter().filter(|&&i| item_alive[i as usize]).count();
            if n < min_count {
                user_alive[u] = false;
                changed = true;
            } else {
                for &i in m.row(u) {
                    item_counts[i as usize] += 1;
                }
            }
        }
        for (i, alive) in item_alive.iter_mut().enumerate() {
            if *alive && item_counts[i] < min_count {
                *alive = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let item_remap: Vec<Option<usize>> = remap(&item_alive);
    let user_remap: Vec<Option<usize>> = remap(&user_alive);
    let n_items = item_alive.iter().filter(|&&a| a).count();
    let rows: Vec<Vec<u32>> = (0..m.n_rows())
        .filter(|&u| user_alive[u])
        .map(|u| {
            m.row(u)
                .iter()
                .filter_map(|&i| item_remap[i as usize].map(|j| j as u32))
                .collect()
        })
        .collect();
    if rows.is_empty() || n_items == 0 {
        return Err(Error::EmptyAfterFilter { min_count });
    }
    let users = d
        .users
        .ids()
        .iter()
        .zip(&user_remap)
        .filter(|(_, r)| r.is_some())
        .map(|(id, _)| id.clone())
        .collect();
    let items = d
        .items
        .ids()
        .iter()
        .zip(&item_remap)
        .filter(|(_, r)| r.is_some())
        .map(|(id, _)| id.clone())
        .collect();
    Ok(ImplicitDataset {
        interactions: SparseBinary::from_rows(n_items, rows),
        users: IdMap::from_ids(users)?,
        items: IdMap::from_ids(items)?,
    })
}

fn remap(alive: &[bool]) -> Vec<Option<usize>> {
    let mut next = 0;
    alive
        .iter()
        .map(|&a| {
            a.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Partition sizes for a user with `n` interactions: floor-based with at
/// least one interaction per partition; the remainder goes to test.
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Option<(usize, usize, usize)> {
    if n < 3 {
        return None;
    }
    let mut train = ((ratios.0 * n as f64 + 1e-9).floor() as usize).max(1);
    let val = ((ratios.1 * n as f64 + 1e-9).floor() as usize).max(1);
    while train + val >= n && train > 1 {
        train -= 1;
    }
    if train + val >= n {
        return None;
    }
    Some((train, val, n - train - val))
}

pub fn split_per_user(d: &ImplicitDataset, ratios: (f64, f64, f64), seed: u64) -> Result<PerUserSplit> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(r.is_finite() && *r > 0.0 && *r < 1.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios ({a}, {b}, {c}) must be in (0,1) and sum to 1"
        )));
    }
    let m = &d.interactions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(m.n_rows());
    let mut val = Vec::with_capacity(m.n_rows());
    let mut test = Vec::with_capacity(m.n_rows());
    for u in 0..m.n_rows() {
        let n = m.row_len(u);
        let (n_train, n_val, _) = split_sizes(n, ratios).ok_or_else(|| Error::Split {
            user: d.users.id(u).to_owned(),
            count: n,
        })?;
        let mut items = m.row(u).to_vec();
        items.shuffle(&mut rng);
        let rest = items.split_off(n_train);
        let (v, t) = rest.split_at(n_val);
        train.push(items);
        val.push(v.to_vec());
        test.push(t.to_vec());
    }
    Ok(PerUserSplit {
        train: SparseBinary::from_rows(m.n_cols(), train),
        validation: SparseBinary::from_rows(m.n_cols(), val),
        test: SparseBinary::from_rows(m.n_cols(), test),
        ratios,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<ExplicitDataset> {
        read_ratings(text.as_bytes(), &LoadOptions { delimiter: b',', has_header: false })
    }

    #[test]
    fn loads_well_formed_rows() {
        let d = load("u1,i1,4.0\nu1,i2,3.0,1000\nu2,i1,5\n").unwrap();
        assert_eq!(d.rows.len(), 3);
        assert_eq!(d.rows[1].timestamp, Some(1000));
    }

    #[test]
    fn duplicate_pair_keeps_last_rating() {
        let d = load("u1,i1,2.0\nu2,i1,1.0\nu1,i1,4.0\n").unwrap();
        assert_eq!(d.rows.len(), 2);
        assert_eq!(d.rows[0].user, "u1");
        assert_eq!(d.rows[0].rating, 4.0);
    }

    #[test]
    fn malformed_rating_names_line() {
        match load("u1,i1,4.0\nu1,i1,abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(load(""), Err(Error::EmptyDataset)));
    }

    #[test]
    fn header_and_tab_delimiter() {
        let d = read_ratings(
            "userId\tmovieId\trating\na\tb\t4.5\n".as_bytes(),
            &LoadOptions { delimiter: b'\t', has_header: true },
        )
        .unwrap();
        assert_eq!(d.rows[0].item, "b");
    }

    #[test]
    fn implicit_threshold_is_strict() {
        let d = load("u1,i1,4.0\nu1,i2,3.5\nu2,i2,3.0\n").unwrap();
        let imp = to_implicit(&d, 3.5).unwrap();
        assert_eq!(imp.n_users(), 1);
        assert_eq!(imp.n_items(), 1);
        assert!(imp.interactions.contains(0, 0));
        assert_eq!(imp.items.id(0), "i1");
    }

    #[test]
    fn all_low_ratings_give_empty_dataset() {
        let d = load("u1,i1,1.0\nu2,i2,1.0\n").unwrap();
        let imp = to_implicit(&d, 3.5).unwrap();
        assert_eq!(imp.interactions.nnz(), 0);
        assert_eq!(imp.n_users(), 0);
    }

    fn dataset(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> ImplicitDataset {
        ImplicitDataset {
            interactions: SparseBinary::from_pairs(n_users, n_items, pairs).unwrap(),
            users: IdMap::from_ids((0..n_users).map(|u| format!("u{u}")).collect()).unwrap(),
            items: IdMap::from_ids((0..n_items).map(|i| format!("i{i}")).collect()).unwrap(),
        }
    }

    #[test]
    fn user_below_min_count_removed() {
        // 11 users × 10 items dense, plus user 11 with only 9 items.
        let mut pairs = Vec::new();
        for u in 0..11 {
            for i in 0..10 {
                pairs.push((u, i));
            }
        }
        for i in 0..9 {
            pairs.push((11, i));
        }
        let d = dataset(12, 10, &pairs);
        let f = filter_min_interactions(&d, 10).unwrap();
        assert_eq!(f.n_users(), 11);
        assert!(f.users.get("u11").is_none());
        assert_eq!(f.n_items(), 10);
    }

    #[test]
    fn filter_identity_when_dense_enough() {
        let pairs: Vec<_> = (0..4).flat_map(|u| (0..4).map(move |i| (u, i))).collect();
        let d = dataset(4, 4, &pairs);
        assert_eq!(filter_min_interactions(&d, 3).unwrap(), d);
    }

    /// Repeatedly drop every row and column below threshold from a dense
    /// boolean grid until nothing changes.
    fn brute_force_filter(grid: &[[bool; 5]; 5], min: usize) -> (Vec<usize>, Vec<usize>) {
        let mut users: Vec<usize> = (0..5).collect();
        let mut items: Vec<usize> = (0..5).collect();
        loop {
            let nu: Vec<usize> = users
                .iter()
                .copied()
                .filter(|&u| items.iter().filter(|&&i| grid[u][i]).count() >= min)
                .collect();
            let ni: Vec<usize> = items
                .iter()
                .copied()
                .filter(|&i| nu.iter().filter(|&&u| grid[u][i]).count() >= min)
                .collect();
            if nu == users && ni == items {
                return (users, items);
            }
            users = nu;
            items = ni;
        }
    }

    #[test]
    fn chained_removal_matches_brute_force() {
        // Item 4 has 2 interactions; removing it drops user 3 below 3.
        let grid = [
            [true, true, true, false, false],
            [true, true, true, true, false],
            [true, true, false, true, false],
            [false, true, true, false, true],
            [true, false, true, true, true],
        ];
        let pairs: Vec<_> = (0..5)
            .flat_map(|u| (0..5).map(move |i| (u, i)))
            .filter(|&(u, i)| grid[u][i])
            .collect();
        let d = dataset(5, 5, &pairs);
        let f = filter_min_interactions(&d, 3).unwrap();
        let (users, items) = brute_force_filter(&grid, 3);
        let got_users: Vec<usize> = f.users.ids().iter().map(|s| s[1..].parse().unwrap()).collect();
        let got_items: Vec<usize> = f.items.ids().iter().map(|s| s[1..].parse().unwrap()).collect();
        assert_eq!(got_users, users);
        assert_eq!(got_items, items);
        assert!(!got_users.contains(&3));
        for (u, &ou) in got_users.iter().enumerate() {
            for (i, &oi) in got_items.iter().enumerate() {
                assert_eq!(f.interactions.contains(u, i), grid[ou][oi]);
            }
        }
        assert_eq!(filter_min_interactions(&f, 3).unwrap(), f);
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        let d = dataset(2, 2, &[(0, 0), (1, 1)]);
        assert!(matches!(
            filter_min_interactions(&d, 2),
            Err(Error::EmptyAfterFilter { .. })
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(10, (0.7, 0.1, 0.2)), Some((7, 1, 2)));
        assert_eq!(split_sizes(3, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)), Some((1, 1, 1)));
        assert_eq!(split_sizes(3, (0.7, 0.1, 0.2)), Some((1, 1, 1)));
        assert_eq!(split_sizes(23, (0.7, 0.1, 0.2)), Some((16, 2, 5)));
        assert_eq!(split_sizes(2, (0.7, 0.1, 0.2)), None);
    }

    #[test]
    fn split_of_ten_interactions() {
        let pairs: Vec<_> = (0..10).map(|i| (0, i)).collect();
        let d = dataset(1, 10, &pairs);
        let s = split_per_user(&d, (0.7, 0.1, 0.2), 7).unwrap();
        assert_eq!((s.train.nnz(), s.validation.nnz(), s.test.nnz()), (7, 1, 2));
        let all = s.train.union(&s.validation).unwrap().union(&s.test).unwrap();
        assert_eq!(all, d.interactions);
    }

    #[test]
    fn split_rejects_tiny_user() {
        let d = dataset(2, 4, &[(0, 0), (0, 1), (0, 2), (1, 3), (1, 0)]);
        match split_per_user(&d, (0.7, 0.1, 0.2), 1) {
            Err(Error::Split { user, count }) => assert_eq!((user.as_str(), count), ("u1", 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let pairs: Vec<_> = (0..8).flat_map(|u| (0..20).map(move |i| (u, i))).collect();
        let d = dataset(8, 20, &pairs);
        let a = split_per_user(&d, (0.7, 0.1, 0.2), 3).unwrap();
        let b = split_per_user(&d, (0.7, 0.1, 0.2), 3).unwrap();
        let c = split_per_user(&d, (0.7, 0.1, 0.2), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
    }
}
