//! Collaborative denoising autoencoder with a per-user offset vector V.
//!
//! hidden = tanh(W_encᵀ x̃ + V[u] + b_enc), output = σ(W_decᵀ hidden + b_dec),
//! trained with the logistic loss against the uncorrupted row.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{log_sigmoid, sigmoid};
use crate::nn::{glorot, slice1, slice1_mut, slice2, slice2_mut, Parameters};
use crate::sparse::SparseBinary;

#[derive(Clone, Debug, PartialEq)]
pub struct CdaeConfig {
    pub hidden: usize,
    pub corruption: f64,
    pub lr: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for CdaeConfig {
    fn default() -> Self {
        CdaeConfig {
            hidden: 50,
            corruption: 0.5,
            lr: 0.05,
            l2: 0.001,
            epochs: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdaeModel {
    pub w_enc: Array2<f64>,
    pub user_emb: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
    pub corruption: f64,
    pub l2: f64,
    /// Uncorrupted objective before training and after each epoch.
    pub loss_history: Vec<f64>,
}

impl Parameters for CdaeModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            slice2(&self.w_enc),
            slice2(&self.user_emb),
            slice1(&self.b_enc),
            slice2(&self.w_dec),
            slice1(&self.b_dec),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice2_mut(&mut self.w_enc),
            slice2_mut(&mut self.user_emb),
            slice1_mut(&mut self.b_enc),
            slice2_mut(&mut self.w_dec),
            slice1_mut(&mut self.b_dec),
        ]
    }
}

/// Surviving input entries of a corrupted user row: (item, scaled value).
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedInput(pub Vec<(u32, f64)>);

impl CorruptedInput {
    pub fn identity(row: &[u32]) -> Self {
        CorruptedInput(row.iter().map(|&i| (i, 1.0)).collect())
    }

    /// Drops each entry with probability `q`, scaling survivors by 1/(1-q).
    pub fn sample<R: Rng>(row: &[u32], q: f64, rng: &mut R) -> Self {
        if q == 0.0 {
            return Self::identity(row);
        }
        let scale = 1.0 / (1.0 - q);
        CorruptedInput(row.iter().filter(|_| rng.gen::<f64>() >= q).map(|&i| (i, scale)).collect())
    }
}

struct UserPass {
    loss: f64,
    hidden: Vec<f64>,
    d_out: Vec<f64>,
    d_pre: Vec<f64>,
}

impl CdaeModel {
    pub fn init(n_users: usize, n_items: usize, cfg: &CdaeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        let w_enc = glorot(n_items, h, &mut rng);
        let user_emb = Array2::from_shape_simple_fn((n_users, h), || rng.gen_range(-0.01..=0.01));
        let w_dec = glorot(h, n_items, &mut rng);
        CdaeModel {
            w_enc,
            user_emb,
            b_enc: Array1::zeros(h),
            w_dec,
            b_dec: Array1::zeros(n_items),
            corruption: cfg.corruption,
            l2: cfg.l2,
            loss_history: Vec::new(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_enc.len()
    }

    pub fn n_items(&self) -> usize {
        self.b_dec.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_emb.nrows()
    }

    fn zeros_like(&self) -> CdaeModel {
        CdaeModel {
            w_enc: Array2::zeros(self.w_enc.raw_dim()),
            user_emb: Array2::zeros(self.user_emb.raw_dim()),
            b_enc: Array1::zeros(self.b_enc.raw_dim()),
            w_dec: Array2::zeros(self.w_dec.raw_dim()),
            b_dec: Array1::zeros(self.b_dec.raw_dim()),
            corruption: self.corruption,
            l2: self.l2,
            loss_history: Vec::new(),
        }
    }

    /// Reconstruction probability of every item for user `u`.
    pub fn reconstruct(&self, u: usize, input: &CorruptedInput) -> Vec<f64> {
        let hidden = self.hidden_layer(u, input);
        self.output_logits(&hidden).into_iter().map(sigmoid).collect()
    }

    fn hidden_layer(&self, u: usize, input: &CorruptedInput) -> Vec<f64> {
        let mut pre: Vec<f64> = self.user_emb.row(u).iter().zip(&self.b_enc).map(|(v, b)| v + b).collect();
        for &(i, x) in &input.0 {
            for (p, w) in pre.iter_mut().zip(self.w_enc.row(i as usize)) {
                *p += x * w;
            }
        }
        pre.into_iter().map(f64::tanh).collect()
    }

    fn output_logits(&self, hidden: &[f64]) -> Vec<f64> {
        let h = ndarray::ArrayView1::from(hidden);
        let mut out = h.dot(&self.w_dec);
        out += &self.b_dec;
        out.to_vec()
    }

    fn user_pass(&self, u: usize, target: &[u32], input: &CorruptedInput) -> UserPass {
        let hidden = self.hidden_layer(u, input);
        let logits = self.output_logits(&hidden);
        let mut d_out: Vec<f64> = logits.iter().map(|&o| sigmoid(o)).collect();
        // -[y log σ(o) + (1-y) log σ(-o)]
        let mut loss: f64 = logits.iter().map(|&o| -log_sigmoid(-o)).sum();
        for &i in target {
            let o = logits[i as usize];
            loss += log_sigmoid(-o) - log_sigmoid(o);
            d_out[i as usize] -= 1.0;
        }
        let d_hidden = self.w_dec.dot(&ndarray::ArrayView1::from(&d_out));
        let d_pre = d_hidden.iter().zip(&hidden).map(|(d, h)| d * (1.0 - h * h)).collect();
        UserPass { loss, hidden, d_out, d_pre }
    }

    /// Objective over `users` with fixed corrupted inputs:
    /// sum_u [loss_u + l2/2 |V_u|^2] + (|users|/n_users) l2/2 (|W_enc|^2 + |W_dec|^2),
    /// together with its exact gradient.
    pub fn loss_and_grad(&self, train: &SparseBinary, users: &[usize], inputs: &[CorruptedInput]) -> (f64, CdaeModel) {
        let mut g = self.zeros_like();
        let frac = users.len() as f64 / self.n_users() as f64;
        let mut loss = 0.5 * self.l2 * frac * (sq_norm(&self.w_enc) + sq_norm(&self.w_dec));
        g.w_enc.scaled_add(self.l2 * frac, &self.w_enc);
        g.w_dec.scaled_add(self.l2 * frac, &self.w_dec);
        for (&u, input) in users.iter().zip(inputs) {
            let pass = self.user_pass(u, train.row(u), input);
            loss += pass.loss + 0.5 * self.l2 * self.user_emb.row(u).dot(&self.user_emb.row(u));
            for (j, &h) in pass.hidden.iter().enumerate() {
                for (gi, &d) in g.w_dec.row_mut(j).iter_mut().zip(&pass.d_out) {
                    *gi += h * d;
                }
            }
            for (gb, d) in g.b_dec.iter_mut().zip(&pass.d_out) {
                *gb += d;
            }
            for &(i, x) in &input.0 {
                for (gw, d) in g.w_enc.row_mut(i as usize).iter_mut().zip(&pass.d_pre) {
                    *gw += x * d;
                }
            }
            for (j, d) in pass.d_pre.iter().enumerate() {
                g.b_enc[j] += d;
                g.user_emb[[u, j]] += d + self.l2 * self.user_emb[[u, j]];
            }
        }
        (loss, g)
    }

    /// In-place SGD step on one user's share of the objective.
    fn sgd_step(&mut self, u: usize, target: &[u32], input: &CorruptedInput, lr: f64) -> f64 {
        let pass = self.user_pass(u, target, input);
        let decay = lr * self.l2 / self.n_users() as f64;
        self.w_dec.mapv_inplace(|w| w * (1.0 - decay));
        for (j, &h) in pass.hidden.iter().enumerate() {
            for (w, &d) in self.w_dec.row_mut(j).iter_mut().zip(&pass.d_out) {
                *w -= lr * h * d;
            }
        }
        for (b, d) in self.b_dec.iter_mut().zip(&pass.d_out) {
            *b -= lr * d;
        }
        self.w_enc.mapv_inplace(|w| w * (1.0 - decay));
        for &(i, x) in &input.0 {
            for (w, d) in self.w_enc.row_mut(i as usize).iter_mut().zip(&pass.d_pre) {
                *w -= lr * x * d;
            }
        }
        for (j, d) in pass.d_pre.iter().enumerate() {
            self.b_enc[j] -= lr * d;
            let v = self.user_emb[[u, j]];
            self.user_emb[[u, j]] -= lr * (d + self.l2 * v);
        }
        pass.loss
    }

    /// Full uncorrupted objective over all users.
    pub fn objective(&self, train: &SparseBinary) -> f64 {
        let users: Vec<usize> = (0..self.n_users()).collect();
        let inputs: Vec<CorruptedInput> = users.iter().map(|&u| CorruptedInput::identity(train.row(u))).collect();
        let frac = 1.0;
        let mut loss = 0.5 * self.l2 * frac * (sq_norm(&self.w_enc) + sq_norm(&self.w_dec));
        for (&u, input) in users.iter().zip(&inputs) {
            loss += self.user_pass(u, train.row(u), input).loss;
            loss += 0.5 * self.l2 * self.user_emb.row(u).dot(&self.user_emb.row(u));
        }
        loss
    }
}

fn sq_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn train_cdae(train: &SparseBinary, cfg: &CdaeConfig, seed: u64) -> Result<CdaeModel> {
    if cfg.hidden == 0 || !(0.0..1.0).contains(&cfg.corruption) || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid CDAE config {cfg:?}")));
    }
    let mut model = CdaeModel::init(train.n_rows(), train.n_cols(), cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xCDAE));
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    model.loss_history.push(model.objective(train));
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &u in &order {
            let input = CorruptedInput::sample(train.row(u), cfg.corruption, &mut rng);
            model.sgd_step(u, train.row(u), &input, cfg.lr);
        }
        let loss = model.objective(train);
        if !loss.is_finite() || !model.all_finite() {
            return Err(Error::diverged(format!("CDAE epoch {epoch}")));
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
