//! L2-regularized logistic regression fitted by full-batch gradient descent
//! on standardized features.

use serde::{Deserialize, Serialize};

use super::{Features, RaterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            learning_rate: 0.1,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

impl LogRegParams {
    pub fn validate(&self) -> Result<(), RaterError> {
        if !(self.l2_lambda >= 0.0 && self.learning_rate > 0.0 && self.max_iters > 0 && self.tol >= 0.0) {
            return Err(RaterError::InvalidArgument(format!("logistic regression hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    /// Per-feature divisor; 1 for zero-variance features.
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean logistic loss plus `λ/2·‖w‖²` (bias unregularized), for
/// already-standardized rows.
pub fn log_loss(x: &[f64], y: &[u8], dim: usize, weights: &[f64], bias: f64, l2_lambda: f64) -> f64 {
    let n = y.len();
    let data_loss: f64 = (0..n)
        .map(|i| {
            let z = bias + dot(&x[i * dim..(i + 1) * dim], weights);
            softplus(z) - f64::from(y[i]) * z
        })
        .sum::<f64>()
        / n as f64;
    data_loss + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, m), s), w)| w * (v - m) / s)
                .sum::<f64>()
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (u8, f64) {
        let score = sigmoid(self.decision(x));
        (u8::from(score >= 0.5), score)
    }
}

struct Standardized {
    x: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(data: &Features) -> Standardized {
    let (n, dim) = (data.n, data.dim);
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let mut x = data.data.clone();
    for row in x.chunks_mut(dim.max(1)) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }
    Standardized { x, mean, scale }
}

pub fn fit_logistic_regression(data: &Features, params: &LogRegParams) -> Result<LogisticModel, RaterError> {
    fit_logistic_regression_traced(data, params).map(|(m, _)| m)
}

/// Fits and also returns the regularized training loss after every
/// accepted step (the first entry is the loss at zero initialization).
///
/// A step that would raise the loss is retried with half the learning
/// rate, and the reduced rate is kept from then on, so the trace is
/// non-increasing.
pub fn fit_logistic_regression_traced(
    data: &Features,
    params: &LogRegParams,
) -> Result<(LogisticModel, Vec<f64>), RaterError> {
    params.validate()?;
    data.check_two_classes()?;
    let (n, dim) = (data.n, data.dim);
    let Standardized { x, mean, scale } = standardize(data);
    let lambda = params.l2_lambda;

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let loss_at = |z: &[f64], w: &[f64]| -> f64 {
        let data_loss: f64 = z
            .iter()
            .zip(&data.y)
            .map(|(&zi, &yi)| softplus(zi) - f64::from(yi) * zi)
            .sum::<f64>()
            / n as f64;
        data_loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
    };
    let mut loss = loss_at(&z, &w);
    let mut trace = vec![loss];
    let mut lr = params.learning_rate;
    let mut grad_w = vec![0.0; dim];
    let mut cand_w = vec![0.0; dim];
    let mut cand_z = vec![0.0; n];
    let mut iterations = 0;

    while iterations < params.max_iters {
        grad_w.iter_mut().zip(&w).for_each(|(g, wj)| *g = lambda * wj);
        let mut grad_b = 0.0;
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let r = (sigmoid(z[i]) - f64::from(data.y[i])) * inv_n;
            grad_b += r;
            for (g, v) in grad_w.iter_mut().zip(&x[i * dim..(i + 1) * dim]) {
                *g += r * v;
            }
        }
        let g_inf = grad_w.iter().fold(grad_b.abs(), |acc, g| acc.max(g.abs()));
        if g_inf < params.tol {
            break;
        }

        let accepted = loop {
            for ((c, wj), g) in cand_w.iter_mut().zip(&w).zip(&grad_w) {
                *c = wj - lr * g;
            }
            let cand_b = b - lr * grad_b;
            for (i, zi) in cand_z.iter_mut().enumerate() {
                *zi = cand_b + dot(&x[i * dim..(i + 1) * dim], &cand_w);
            }
            let cand_loss = loss_at(&cand_z, &cand_w);
            if !cand_loss.is_finite() {
                return Err(RaterError::NonFiniteLoss);
            }
            if cand_loss <= loss {
                break Some((cand_b, cand_loss));
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break None;
            }
        };
        let Some((cand_b, cand_loss)) = accepted else {
            break;
        };
        std::mem::swap(&mut w, &mut cand_w);
        std::mem::swap(&mut z, &mut cand_z);
        b = cand_b;
        loss = cand_loss;
        trace.push(loss);
        iterations += 1;
    }

    Ok((
        LogisticModel {
            mean,
            scale,
            weights: w,
            bias: b,
            iterations,
            final_loss: loss,
        },
        trace,
    ))
}
