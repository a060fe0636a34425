//! Variational autoencoder with a multinomial decoder.
//!
//! Encoder: L2-normalized input (with dropout while training) → tanh hidden
//! → (mean, log-variance). Decoder: z → tanh hidden → softmax over items.
//! The loss per user is the negative multinomial log-likelihood plus
//! beta · KL(q(z|x) ‖ N(0, I)), with beta annealed linearly from 0.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{glorot, slice1, slice1_mut, slice2, slice2_mut, Adam, Parameters};
use crate::sparse::SparseBinary;


#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub latent: usize,
    pub hidden: usize,
    pub beta: f64,
    pub lr: f64,
    pub l2: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Internal (train, validation, test) user fractions.
    pub user_split: (f64, f64, f64),
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent: 200,
            hidden: 600,
            beta: 0.2,
            lr: 1e-3,
            l2: 1e-4,
            dropout: 0.5,
            epochs: 50,
            batch_size: 100,
            user_split: (0.8, 0.1, 0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub w_lv: Array2<f64>,
    pub b_lv: Array1<f64>,
    pub w_zh: Array2<f64>,
    pub b_zh: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub beta: f64,
    pub l2: f64,
    /// Validation objective of the selected epoch.
    pub best_validation: f64,
    pub best_epoch: usize,
    /// Objective on the internal test users at the selected epoch.
    pub test_loss: f64,
}

impl Parameters for VaeModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            slice2(&self.w_in),
            slice1(&self.b_in),
            slice2(&self.w_mu),
            slice1(&self.b_mu),
            slice2(&self.w_lv),
            slice1(&self.b_lv),
            slice2(&self.w_zh),
            slice1(&self.b_zh),
            slice2(&self.w_out),
            slice1(&self.b_out),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice2_mut(&mut self.w_in),
            slice1_mut(&mut self.b_in),
            slice2_mut(&mut self.w_mu),
            slice1_mut(&mut self.b_mu),
            slice2_mut(&mut self.w_lv),
            slice1_mut(&mut self.b_lv),
            slice2_mut(&mut self.w_zh),
            slice1_mut(&mut self.b_zh),
            slice2_mut(&mut self.w_out),
            slice1_mut(&mut self.b_out),
        ]
    }
}

/// KL(N(mu, exp(logvar)) ‖ N(0, I)).
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

/// Intermediate values of a batch forward pass.
pub struct VaeForward {
    pub input: Array2<f64>,
    pub h_enc: Array2<f64>,
    pub mu: Array2<f64>,
    pub logvar: Array2<f64>,
    pub z: Array2<f64>,
    pub h_dec: Array2<f64>,
    pub log_probs: Array2<f64>,
}

impl VaeModel {
    pub fn init(n_items: usize, cfg: &VaeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, k) = (cfg.hidden, cfg.latent);
        VaeModel {
            w_in: glorot(n_items, h, &mut rng),
            b_in: Array1::zeros(h),
            w_mu: glorot(h, k, &mut rng),
            b_mu: Array1::zeros(k),
            w_lv: glorot(h, k, &mut rng),
            b_lv: Array1::zeros(k),
            w_zh: glorot(k, h, &mut rng),
            b_zh: Array1::zeros(h),
            w_out: glorot(h, n_items, &mut rng),
            b_out: Array1::zeros(n_items),
            beta: cfg.beta,
            l2: cfg.l2,
            best_validation: f64::NAN,
            best_epoch: 0,
            test_loss: f64::NAN,
        }
    }

    pub fn n_items(&self) -> usize {
        self.b_out.len()
    }

    pub fn latent(&self) -> usize {
        self.b_mu.len()
    }

    fn zeros_like(&self) -> VaeModel {
        let z2 = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        let z1 = |a: &Array1<f64>| Array1::zeros(a.raw_dim());
        VaeModel {
            w_in: z2(&self.w_in),
            b_in: z1(&self.b_in),
            w_mu: z2(&self.w_mu),
            b_mu: z1(&self.b_mu),
            w_lv: z2(&self.w_lv),
            b_lv: z1(&self.b_lv),
            w_zh: z2(&self.w_zh),
            b_zh: z1(&self.b_zh),
            w_out: z2(&self.w_out),
            b_out: z1(&self.b_out),
            beta: self.beta,
            l2: self.l2,
            best_validation: f64::NAN,
            best_epoch: 0,
            test_loss: f64::NAN,
        }
    }

    /// L2-normalized dense rows of `users`.
    pub fn normalized_rows(train: &SparseBinary, users: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((users.len(), train.n_cols()));
        for (r, &u) in users.iter().enumerate() {
            let row = train.row(u);
            if row.is_empty() {
                continue;
            }
            let v = 1.0 / (row.len() as f64).sqrt();
            for &i in row {
                x[[r, i as usize]] = v;
            }
        }
        x
    }

    fn encode(&self, input: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = (input.dot(&self.w_in) + &self.b_in).mapv(f64::tanh);
        let mu = h.dot(&self.w_mu) + &self.b_mu;
        let lv = h.dot(&self.w_lv) + &self.b_lv;
        (h, mu, lv)
    }

    /// Item log-probabilities for latent codes `z` (one row per user).
    pub fn decode(&self, z: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = (z.dot(&self.w_zh) + &self.b_zh).mapv(f64::tanh);
        let mut logits = h.dot(&self.w_out) + &self.b_out;
        for mut row in logits.rows_mut() {
            crate::linalg::log_softmax(row.as_slice_mut().expect("contiguous"));
        }
        (h, logits)
    }

    /// Forward pass with explicit input (already normalized and masked) and
    /// reparameterization noise `eps`.
    pub fn forward(&self, input: Array2<f64>, eps: &Array2<f64>) -> VaeForward {
        let (h_enc, mu, logvar) = self.encode(&input);
        let z = &mu + &(logvar.mapv(|v| (0.5 * v).exp()) * eps);
        let (h_dec, log_probs) = self.decode(&z);
        VaeForward { input, h_enc, mu, logvar, z, h_dec, log_probs }
    }

    /// Batch objective (1/B) sum_u [NLL_u + beta KL_u] + l2/2 sum |W|^2 for
    /// fixed inputs and noise, and its gradient.
    pub fn loss_and_grad(&self, input: Array2<f64>, targets: &Array2<f64>, eps: &Array2<f64>, beta: f64) -> (f64, VaeModel) {
        let b = input.nrows() as f64;
        let fw = self.forward(input, eps);
        let mut loss = 0.0;
        for r in 0..fw.mu.nrows() {
            let nll: f64 = -targets.row(r).dot(&fw.log_probs.row(r));
            let kl = kl_standard_normal(
                fw.mu.row(r).as_slice().expect("contiguous"),
                fw.logvar.row(r).as_slice().expect("contiguous"),
            );
            loss += (nll + beta * kl) / b;
        }
        let weights = [&self.w_in, &self.w_mu, &self.w_lv, &self.w_zh, &self.w_out];
        loss += 0.5 * self.l2 * weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();

        let mut g = self.zeros_like();
        // d NLL / d logits = p * sum(x) - x
        let totals = targets.sum_axis(Axis(1));
        let mut d_logits = fw.log_probs.mapv(f64::exp);
        for (mut row, t) in d_logits.rows_mut().into_iter().zip(totals.iter()) {
            row *= *t;
        }
        d_logits -= targets;
        d_logits /= b;
        g.w_out = fw.h_dec.t().dot(&d_logits);
        g.b_out = d_logits.sum_axis(Axis(0));
        let d_hdec = d_logits.dot(&self.w_out.t()) * fw.h_dec.mapv(|h| 1.0 - h * h);
        g.w_zh = fw.z.t().dot(&d_hdec);
        g.b_zh = d_hdec.sum_axis(Axis(0));
        let d_z = d_hdec.dot(&self.w_zh.t());
        let std = fw.logvar.mapv(|v| (0.5 * v).exp());
        let d_mu = &d_z + &(&fw.mu * (beta / b));
        let d_lv = &d_z * eps * &std * 0.5 + fw.logvar.mapv(|v| v.exp() - 1.0) * (0.5 * beta / b);
        g.w_mu = fw.h_enc.t().dot(&d_mu);
        g.b_mu = d_mu.sum_axis(Axis(0));
        g.w_lv = fw.h_enc.t().dot(&d_lv);
        g.b_lv = d_lv.sum_axis(Axis(0));
        let d_henc = (d_mu.dot(&self.w_mu.t()) + d_lv.dot(&self.w_lv.t())) * fw.h_enc.mapv(|h| 1.0 - h * h);
        g.w_in = fw.input.t().dot(&d_henc);
        g.b_in = d_henc.sum_axis(Axis(0));

        g.w_in.scaled_add(self.l2, &self.w_in);
        g.w_mu.scaled_add(self.l2, &self.w_mu);
        g.w_lv.scaled_add(self.l2, &self.w_lv);
        g.w_zh.scaled_add(self.l2, &self.w_zh);
        g.w_out.scaled_add(self.l2, &self.w_out);
        (loss, g)
    }

    /// Deterministic objective (no dropout, z = mean) at the target beta.
    pub fn evaluate(&self, train: &SparseBinary, users: &[usize]) -> f64 {
        if users.is_empty() {
            return f64::NAN;
        }
        let input = Self::normalized_rows(train, users);
        let targets = dense_rows(train, users);
        let eps = Array2::zeros((users.len(), self.latent()));
        let fw = self.forward(input, &eps);
        let mut loss = 0.0;
        for r in 0..users.len() {
            let nll = -targets.row(r).dot(&fw.log_probs.row(r));
            let kl = kl_standard_normal(
                fw.mu.row(r).as_slice().expect("contiguous"),
                fw.logvar.row(r).as_slice().expect("contiguous"),
            );
            loss += nll + self.beta * kl;
        }
        loss / users.len() as f64
    }

    /// Encoder mean of each user's full (undropped) training row.
    pub fn encode_mean(&self, train: &SparseBinary) -> Array2<f64> {
        let users: Vec<usize> = (0..train.n_rows()).collect();
        let mut out = Array2::zeros((users.len(), self.latent()));
        for chunk in users.chunks(512) {
            let (_, mu, _) = self.encode(&Self::normalized_rows(train, chunk));
            out.slice_mut(ndarray::s![chunk[0]..chunk[0] + chunk.len(), ..]).assign(&mu);
        }
        out
    }
}

fn dense_rows(train: &SparseBinary, users: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((users.len(), train.n_cols()));
    for (r, &u) in users.iter().enumerate() {
        for &i in train.row(u) {
            x[[r, i as usize]] = 1.0;
        }
    }
    x
}

/// Internal user partition used only to fit and select the model.
pub(crate) fn internal_user_split(n: usize, split: (f64, f64, f64), rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n_val = (split.1 * n as f64 + 1e-9).floor() as usize;
    let n_test = (split.2 * n as f64 + 1e-9).floor() as usize;
    if n_val == 0 || n_val + n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "{n} users is too few for an internal validation split of {:?}",
            split
        )));
    }
    let mut users: Vec<usize> = (0..n).collect();
    users.shuffle(rng);
    let test = users.split_off(n - n_test);
    let val = users.split_off(users.len() - n_val);
    Ok((users, val, test))
}

pub fn train_vae(train: &SparseBinary, cfg: &VaeConfig, seed: u64) -> Result<VaeModel> {
    if cfg.latent == 0 || cfg.hidden == 0 || !(cfg.lr > 0.0) || cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::InvalidArgument(format!("invalid VAE config {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7AE));
    let (mut fit_users, val_users, test_users) = internal_user_split(train.n_rows(), cfg.user_split, &mut rng)?;
    let mut model = VaeModel::init(train.n_cols(), cfg, seed);
    let mut opt = Adam::new(cfg.lr);
    let steps_per_epoch = fit_users.len().div_ceil(cfg.batch_size);
    let total_steps = (steps_per_epoch * cfg.epochs).max(1);
    let mut step = 0usize;
    let mut best = model.clone();
    best.best_validation = model.evaluate(train, &val_users);
    let keep = 1.0 - cfg.dropout;
    for epoch in 1..=cfg.epochs {
        fit_users.shuffle(&mut rng);
        for batch in fit_users.chunks(cfg.batch_size) {
            let mut input = VaeModel::normalized_rows(train, batch);
            if cfg.dropout > 0.0 {
                input.mapv_inplace(|v| if v != 0.0 && rng.gen::<f64>() < keep { v / keep } else { 0.0 });
            }
            let eps = Array2::from_shape_simple_fn((batch.len(), cfg.latent), || rng.sample::<f64, _>(StandardNormal));
            let beta = cfg.beta * (step as f64 / total_steps as f64).min(1.0);
            let (loss, grad) = model.loss_and_grad(input, &dense_rows(train, batch), &eps, beta);
            if !loss.is_finite() {
                return Err(Error::diverged(format!("VAE epoch {epoch}")));
            }
            opt.step(&mut model, &grad);
            step += 1;
        }
        if !model.all_finite() {
            return Err(Error::diverged(format!("VAE epoch {epoch}")));
        }
        let val = model.evaluate(train, &val_users);
        if val < best.best_validation || best.best_validation.is_nan() {
            best = model.clone();
            best.best_validation = val;
            best.best_epoch = epoch;
        }
    }
    best.test_loss = best.evaluate(train, &test_users);
    Ok(best)
}
