//! CART classification trees with Gini impurity.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: None, min_samples_leaf: 1, max_features: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Class proportions of the training rows that reached the leaf.
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct Builder<'a, R> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    n_classes: usize,
    cfg: TreeConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

fn gini_mass(counts: &[usize], n: usize) -> f64 {
    // n * gini = n - sum(c^2) / n
    if n == 0 {
        return 0.0;
    }
    n as f64 - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mut dist = vec![0.0; self.n_classes];
        for &r in rows {
            dist[self.y[r]] += 1.0;
        }
        let n = rows.len() as f64;
        dist.iter_mut().for_each(|v| *v /= n);
        self.nodes.push(Node::Leaf(dist));
        self.nodes.len() - 1
    }

    /// Best (feature, threshold, impurity mass of children) over the sampled features.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let d = self.x.ncols();
        let features: Vec<usize> = match self.cfg.max_features {
            Some(m) if m < d => sample(self.rng, d, m).into_vec(),
            _ => (0..d).collect(),
        };
        let n = rows.len();
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let mut total = vec![0usize; self.n_classes];
        for &r in rows {
            total[self.y[r]] += 1;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in features {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            for i in 0..n - 1 {
                left[sorted[i].1] += 1;
                let n_left = i + 1;
                if sorted[i].0 == sorted[i + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let mass = gini_mass(&left, n_left) + gini_mass(&right, n - n_left);
                if best.is_none_or(|b| mass < b.2) {
                    best = Some((f, 0.5 * (sorted[i].0 + sorted[i + 1].0), mass));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[self.y[r]] += 1;
        }
        let parent = gini_mass(&counts, rows.len());
        let stop = parent <= 1e-12
            || self.cfg.max_depth.is_some_and(|m| depth >= m)
            || rows.len() < 2 * self.cfg.min_samples_leaf.max(1);
        if stop {
            return self.leaf(&rows);
        }
        match self.best_split(&rows) {
            Some((feature, threshold, mass)) if mass < parent - 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
                let id = self.nodes.len();
                self.nodes.push(Node::Leaf(Vec::new()));
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split { feature, threshold, left, right };
                id
            }
            _ => self.leaf(&rows),
        }
    }
}

impl DecisionTree {
    /// Fits on `rows` of `x` (duplicates allowed, as in a bootstrap sample).
    pub fn fit<R: Rng>(
        x: &Array2<f64>,
        y: &[usize],
        n_classes: usize,
        rows: Vec<usize>,
        cfg: TreeConfig,
        rng: &mut R,
    ) -> DecisionTree {
        assert!(!rows.is_empty(), "cannot grow a tree on zero rows");
        let mut b = Builder { x, y, n_classes, cfg, rng, nodes: Vec::new() };
        b.grow(rows, 0);
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict_proba(&self, x: ArrayView1<f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(dist) => return dist,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> usize {
        argmax(self.predict_proba(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}
