//! The metadataset: one row of metafeatures plus the best-learner label per
//! user, with the transforms applied around cross-validation.

use std::io::{BufRead, Write};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{MetaLabel, MetaTarget};
use crate::repr::EmbeddingMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct MetaDataset {
    pub user_ids: Vec<String>,
    pub features: Array2<f64>,
    /// Index into `classes` per row.
    pub labels: Vec<usize>,
    pub classes: Vec<MetaLabel>,
    pub provenance: String,
}

impl MetaDataset {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, row: usize) -> MetaLabel {
        self.classes[self.labels[row]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn subset(&self, rows: &[usize]) -> MetaDataset {
        MetaDataset {
            user_ids: rows.iter().map(|&r| self.user_ids[r].clone()).collect(),
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            classes: self.classes.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// CSV `user_id,f0..f{k-1},label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "user_id")?;
        for j in 0..self.n_features() {
            write!(w, ",f{j}")?;
        }
        writeln!(w, ",label")?;
        for r in 0..self.n_rows() {
            write!(w, "{}", self.user_ids[r])?;
            for v in self.features.row(r) {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.label(r))?;
        }
        Ok(())
    }

    /// Reads the CSV back over the full label registry.
    pub fn read_csv<R: BufRead>(r: R, provenance: &str) -> Result<MetaDataset> {
        let mut user_ids = Vec::new();
        let mut flat = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
            if n == 0 {
                width = Some(line.split(',').count().saturating_sub(2));
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if Some(parts.len().saturating_sub(2)) != width || parts.len() < 2 {
                return Err(Error::Parse { line: n + 1, message: "wrong column count".into() });
            }
            user_ids.push(parts[0].to_owned());
            for p in &parts[1..parts.len() - 1] {
                flat.push(p.parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("bad value `{p}`"),
                })?);
            }
            labels.push(parts[parts.len() - 1].parse::<MetaLabel>()?);
        }
        let width = width.ok_or(Error::EmptyDataset)?;
        let features =
            Array2::from_shape_vec((user_ids.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))?;
        let classes = MetaLabel::ALL.to_vec();
        let labels = labels.into_iter().map(|l| l as usize).collect();
        Ok(MetaDataset { user_ids, features, labels, classes, provenance: provenance.to_owned() })
    }
}

/// Row-aligned join of embeddings and labels over the full label registry.
pub fn assemble(e: &EmbeddingMatrix, t: &MetaTarget) -> Result<MetaDataset> {
    if e.n_users() != t.labels.len() {
        return Err(Error::Shape(format!("{} embedding rows vs {} labels", e.n_users(), t.labels.len())));
    }
    if e.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite metafeature".into()));
    }
    Ok(MetaDataset {
        user_ids: e.user_ids.clone(),
        features: e.values.clone(),
        labels: t.labels.iter().map(|&l| l as usize).collect(),
        classes: MetaLabel::ALL.to_vec(),
        provenance: e.source.to_string(),
    })
}

/// Per-feature standardization statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Array2<f64>) -> Result<Scaler> {
        if x.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot fit a scaler on zero rows".into()));
        }
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Scaler { mean, std })
    }

    /// (x - mean) / std; zero-variance features map to 0.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| if s > 0.0 { (v - m) / s } else { 0.0 });
        }
        out
    }
}

pub fn zscore_fit_transform(train: &MetaDataset) -> Result<(Scaler, MetaDataset)> {
    let scaler = Scaler::fit(&train.features)?;
    let mut out = train.clone();
    out.features = scaler.apply(&train.features);
    Ok((scaler, out))
}

pub fn zscore_apply(scaler: &Scaler, rows: &MetaDataset) -> MetaDataset {
    let mut out = rows.clone();
    out.features = scaler.apply(&rows.features);
    out
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// SMOTE: every non-empty class below the majority count is topped up with
/// points x + r (x_nn - x), r ~ U[0, 1), x_nn among the k nearest same-class
/// neighbours. Original rows come first and are untouched.
pub fn smote_oversample(ds: &MetaDataset, k_neighbors: usize, seed: u64) -> Result<MetaDataset> {
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be >= 1".into()));
    }
    let counts = ds.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut new_rows: Vec<Vec<f64>> = Vec::new();
    let mut new_labels = Vec::new();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 || count == target {
            continue;
        }
        if count == 1 {
            return Err(Error::ClassTooSmall { class: ds.classes[c].to_string(), count, needed: 2 });
        }
        let members: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.labels[r] == c).collect();
        let kk = k_neighbors.min(count - 1);
        let neighbours: Vec<Vec<usize>> = members
            .iter()
            .map(|&a| {
                let mut others: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| (sq_dist(ds.features.row(a), ds.features.row(b)), b))
                    .collect();
                others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                others.into_iter().take(kk).map(|(_, b)| b).collect()
            })
            .collect();
        for _ in 0..target - count {
            let m = rng.gen_range(0..members.len());
            let base = ds.features.row(members[m]);
            let nn = ds.features.row(*neighbours[m].choose(&mut rng).expect("kk >= 1"));
            let r: f64 = rng.gen();
            new_rows.push(base.iter().zip(nn).map(|(x, y)| x + r * (y - x)).collect());
            new_labels.push(c);
        }
    }
    let mut out = ds.clone();
    if new_rows.is_empty() {
        return Ok(out);
    }
    let width = ds.n_features();
    let flat: Vec<f64> = new_rows.into_iter().flatten().collect();
    let extra = Array2::from_shape_vec((new_labels.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))?;
    out.features = ndarray::concatenate(Axis(0), &[ds.features.view(), extra.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let start = ds.n_rows();
    out.user_ids.extend((0..new_labels.len()).map(|i| format!("~synthetic{}", start + i)));
    out.labels.extend(new_labels);
    Ok(out)
}

/// Drops `Zeroes` rows and removes the class from the class list.
pub fn remove_zeroes(ds: &MetaDataset) -> MetaDataset {
    let Some(z) = ds.classes.iter().position(|&c| c == MetaLabel::Zeroes) else {
        return ds.clone();
    };
    let keep: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.labels[r] != z).collect();
    let mut out = ds.subset(&keep);
    out.classes.remove(z);
    for l in out.labels.iter_mut() {
        if *l > z {
            *l -= 1;
        }
    }
    out
}

/// Stratified disjoint folds over the rows of a metadataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// All rows outside fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Each class is shuffled and dealt round-robin, continuing from where the
/// previous class stopped so fold sizes also differ by at most one.
pub fn make_folds(ds: &MetaDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    let counts = ds.class_counts();
    if let Some(c) = counts.iter().position(|&n| n > 0 && n < n_folds) {
        return Err(Error::ClassTooSmall { class: ds.classes[c].to_string(), count: counts[c], needed: n_folds });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); n_folds];
    let mut next = 0;
    for c in 0..ds.n_classes() {
        let mut members: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.labels[r] == c).collect();
        members.shuffle(&mut rng);
        for r in members {
            folds[next].push(r);
            next = (next + 1) % n_folds;
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}
