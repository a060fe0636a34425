//! Multinomial logistic regression fitted by full-batch gradient descent.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{count, non_negative, positive, Params};
use crate::error::{Error, Result};
use crate::linalg::log_softmax;
use crate::nn::{slice1, slice1_mut, slice2, slice2_mut, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// n_classes x n_features.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Parameters for LogisticModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![slice2(&self.weights), slice1(&self.bias)]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![slice2_mut(&mut self.weights), slice1_mut(&mut self.bias)]
    }
}

impl LogisticModel {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        LogisticModel { weights: Array2::zeros((n_classes, n_features)), bias: Array1::zeros(n_classes) }
    }

    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<f64> {
        (self.weights.dot(&x) + &self.bias).to_vec()
    }

    /// Mean cross-entropy plus (l2 / 2) ||W||^2, and its gradient.
    pub fn loss_and_grad(&self, x: &Array2<f64>, y: &[usize], l2: f64) -> (f64, LogisticModel) {
        let n = x.nrows() as f64;
        let mut logits = x.dot(&self.weights.t()) + &self.bias;
        let mut loss = 0.0;
        for (mut row, &label) in logits.axis_iter_mut(Axis(0)).zip(y) {
            let s = row.as_slice_mut().expect("row-major");
            log_softmax(s);
            loss -= s[label];
            // Turn log-probabilities into dL/dlogit = p - onehot.
            for v in s.iter_mut() {
                *v = v.exp();
            }
            s[label] -= 1.0;
        }
        logits /= n;
        let grad_w = logits.t().dot(x) + &(&self.weights * l2);
        let grad_b = logits.sum_axis(Axis(0));
        let reg = 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        (loss / n + reg, LogisticModel { weights: grad_w, bias: grad_b })
    }
}

/// Step size is `lr` divided by a curvature bound, so `lr = 1` is stable for
/// any feature scale.
pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, p: &Params) -> Result<LogisticModel> {
    let l2 = non_negative(p, "l2")?;
    let lr = positive(p, "lr")?;
    let iters = count(p, "iters", 0)?;
    let mean_sq = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).sum::<f64>() / x.nrows().max(1) as f64;
    let step = lr / (0.5 * mean_sq + l2);
    let mut model = LogisticModel::zeros(n_classes, x.ncols());
    for it in 0..iters {
        let (loss, grad) = model.loss_and_grad(x, y, l2);
        if !loss.is_finite() {
            return Err(Error::diverged(format!("logistic regression at iteration {it}")));
        }
        model.weights.scaled_add(-step, &grad.weights);
        model.bias.scaled_add(-step, &grad.bias);
    }
    if !model.all_finite() {
        return Err(Error::diverged("logistic regression parameters"));
    }
    Ok(model)
}
