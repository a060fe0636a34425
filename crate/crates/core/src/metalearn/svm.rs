//! One-vs-rest linear SVM with the squared hinge loss, trained by minibatch SGD.
//!
//! Per class the objective is (1 / (2 C n)) ||w||^2 + mean max(0, 1 - y f(x))^2
//! with y = +1 for the class and -1 otherwise; the bias is not penalized.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{count, positive, Params};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// n_classes x n_features.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl SvmModel {
    /// Decision values, one per class.
    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        (self.weights.dot(&x) + &self.bias).to_vec()
    }

    /// The per-class objectives summed over classes.
    pub fn objective(&self, x: &Array2<f64>, y: &[usize], c: f64) -> f64 {
        let n = x.nrows() as f64;
        let lambda = 1.0 / (c * n);
        let mut total = 0.5 * lambda * self.weights.iter().map(|w| w * w).sum::<f64>();
        for (row, &label) in x.rows().into_iter().zip(y) {
            for (k, s) in self.scores(row).into_iter().enumerate() {
                let t = if k == label { 1.0 } else { -1.0 };
                total += (1.0 - t * s).max(0.0).powi(2) / n;
            }
        }
        total
    }
}

pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, p: &Params, seed: u64) -> Result<SvmModel> {
    let c = positive(p, "C")?;
    let lr = positive(p, "lr")?;
    let epochs = count(p, "epochs", 0)?;
    let batch = count(p, "batch", 1)?;
    let (n, d) = x.dim();
    let lambda = 1.0 / (c * n as f64);
    let mut model = SvmModel { weights: Array2::zeros((n_classes, d)), bias: Array1::zeros(n_classes) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let eta = lr / (1.0 + epoch as f64).sqrt();
        for chunk in order.chunks(batch) {
            let mut gw = &model.weights * lambda;
            let mut gb = Array1::<f64>::zeros(n_classes);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let row = x.row(i);
                let s = model.scores(row);
                for k in 0..n_classes {
                    let t = if k == y[i] { 1.0 } else { -1.0 };
                    let slack = 1.0 - t * s[k];
                    if slack > 0.0 {
                        let g = -2.0 * slack * t * scale;
                        gw.row_mut(k).scaled_add(g, &row);
                        gb[k] += g;
                    }
                }
            }
            model.weights.scaled_add(-eta, &gw);
            model.bias.scaled_add(-eta, &gb);
        }
        if model.weights.iter().chain(model.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::diverged(format!("linear SVM at epoch {epoch}")));
        }
    }
    Ok(model)
}
