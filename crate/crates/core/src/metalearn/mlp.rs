//! One-hidden-layer perceptron (tanh hidden units, softmax output) trained
//! with minibatch Adam on mean cross-entropy plus L2 on the weight matrices.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{count, non_negative, positive, Params};
use crate::error::{Error, Result};
use crate::linalg::log_softmax;
use crate::nn::{glorot, slice1, slice1_mut, slice2, slice2_mut, Adam, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// hidden x n_features.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// n_classes x hidden.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Parameters for MlpModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![slice2(&self.w1), slice1(&self.b1), slice2(&self.w2), slice1(&self.b2)]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            slice2_mut(&mut self.w1),
            slice1_mut(&mut self.b1),
            slice2_mut(&mut self.w2),
            slice1_mut(&mut self.b2),
        ]
    }
}

impl MlpModel {
    pub fn init(n_features: usize, hidden: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel {
            w1: glorot(hidden, n_features, &mut rng),
            b1: Array1::zeros(hidden),
            w2: glorot(n_classes, hidden, &mut rng),
            b2: Array1::zeros(n_classes),
        }
    }

    fn hidden(&self, x: &Array2<f64>) -> Array2<f64> {
        (x.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh)
    }

    /// Row-wise log-probabilities.
    fn log_probs(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut z = h.dot(&self.w2.t()) + &self.b2;
        for mut row in z.axis_iter_mut(Axis(0)) {
            log_softmax(row.as_slice_mut().expect("row-major"));
        }
        z
    }

    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let x = x.to_owned().insert_axis(Axis(0));
        self.log_probs(&self.hidden(&x)).row(0).mapv(f64::exp).to_vec()
    }

    pub fn loss_and_grad(&self, x: &Array2<f64>, y: &[usize], l2: f64) -> (f64, MlpModel) {
        let n = x.nrows() as f64;
        let h = self.hidden(x);
        let mut d = self.log_probs(&h);
        let mut loss = 0.0;
        for (mut row, &label) in d.axis_iter_mut(Axis(0)).zip(y) {
            loss -= row[label];
            row.mapv_inplace(f64::exp);
            row[label] -= 1.0;
        }
        d /= n;
        let w2 = d.t().dot(&h) + &(&self.w2 * l2);
        let b2 = d.sum_axis(Axis(0));
        let mut dh = d.dot(&self.w2);
        dh.zip_mut_with(&h, |g, &a| *g *= 1.0 - a * a);
        let w1 = dh.t().dot(x) + &(&self.w1 * l2);
        let b1 = dh.sum_axis(Axis(0));
        let reg = 0.5 * l2 * (self.w1.iter().chain(self.w2.iter()).map(|w| w * w).sum::<f64>());
        (loss / n + reg, MlpModel { w1, b1, w2, b2 })
    }
}

pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, p: &Params, seed: u64) -> Result<MlpModel> {
    let hidden = count(p, "hidden", 1)?;
    let lr = positive(p, "lr")?;
    let l2 = non_negative(p, "l2")?;
    let epochs = count(p, "epochs", 0)?;
    let batch = count(p, "batch", 1)?;
    let mut model = MlpModel::init(x.ncols(), hidden, n_classes, seed);
    let mut opt = Adam::new(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grad) = model.loss_and_grad(&xb, &yb, l2);
            if !loss.is_finite() {
                return Err(Error::diverged(format!("MLP at epoch {epoch}")));
            }
            opt.step(&mut model, &grad);
        }
        if !model.all_finite() {
            return Err(Error::diverged(format!("MLP parameters at epoch {epoch}")));
        }
    }
    Ok(model)
}
