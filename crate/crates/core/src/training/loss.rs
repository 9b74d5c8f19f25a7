//! Training losses with their gradients.
//!
//! Every loss is a mean over the batch. The mass and positivity penalties are
//! evaluated in physical units through the back-transforms `g` and `h`, so
//! their gradients carry the chain factor `σ_y`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{output_group, Species, N_INPUTS, N_OUTPUTS, N_TENDENCIES, PAIR_OFFSET};
use crate::transforms::{NormStats, SignClass};

/// Species weights, in `Species::ALL` order.
pub const DEFAULT_ALPHA: [f64; 4] = [1e-7, 2e4, 2e3, 1e-1];
/// Group weights for SO4, BC, OC, DU, number and water outputs.
pub const DEFAULT_BETA: [f64; 6] = [1e-11, 1e7, 1e7, 1e3, 1e-8, 1e1];

pub type LossGrad = (f64, Matrix);

pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<LossGrad> {
    pred.ensure_shape(target.rows(), target.cols())?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    let scale = 1.0 / n as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d * scale;
    }
    Ok((loss * scale, grad))
}

fn check_batch(pred_std: &Matrix) -> Result<f64> {
    pred_std.ensure_cols(N_OUTPUTS)?;
    if pred_std.rows() == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    Ok(1.0 / pred_std.rows() as f64)
}

fn check_weights(w: &[f64], len: usize, name: &str) -> Result<()> {
    if w.len() != len {
        return Err(Error::Config(format!("{name} needs {len} weights, got {}", w.len())));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("{name} weights must be finite and non-negative")));
    }
    Ok(())
}

/// Mean over rows of `Σ_s α_s |Σ_{i∈I_s} g(pred)_i|`.
pub fn mass_loss(pred_std: &Matrix, stats: &NormStats, alpha: &[f64]) -> Result<LossGrad> {
    check_weights(alpha, 4, "alpha")?;
    let inv_n = check_batch(pred_std)?;
    let sd = stats.y_std();
    let mut grad = Matrix::zeros(pred_std.rows(), N_OUTPUTS);
    let mut loss = 0.0;
    for i in 0..pred_std.rows() {
        let p = pred_std.row(i);
        let g = grad.row_mut(i);
        for s in Species::ALL {
            let a = alpha[s.index()];
            let sum: f64 = s.output_indices().iter().map(|&k| stats.g(k, p[k])).sum();
            loss += a * sum.abs();
            let sign = if sum > 0.0 {
                1.0
            } else if sum < 0.0 {
                -1.0
            } else {
                0.0
            };
            for &k in s.output_indices() {
                g[k] = a * sign * sd[k] * inv_n;
            }
        }
    }
    Ok((loss * inv_n, grad))
}

/// Mean over rows of `Σ_k β_{group(k)} ReLU(-(g(pred)_k + h(x)_{paired(k)}))²`;
/// water outputs are full values already and get no input term.
pub fn pos_loss(pred_std: &Matrix, x_std: &Matrix, stats: &NormStats, beta: &[f64]) -> Result<LossGrad> {
    check_weights(beta, 6, "beta")?;
    let inv_n = check_batch(pred_std)?;
    x_std.ensure_shape(pred_std.rows(), N_INPUTS)?;
    let sd = stats.y_std();
    let mut grad = Matrix::zeros(pred_std.rows(), N_OUTPUTS);
    let mut loss = 0.0;
    for i in 0..pred_std.rows() {
        let (p, x) = (pred_std.row(i), x_std.row(i));
        let g = grad.row_mut(i);
        for k in 0..N_OUTPUTS {
            let mut full = stats.g(k, p[k]);
            if k < N_TENDENCIES {
                full += stats.h(k + PAIR_OFFSET, x[k + PAIR_OFFSET]);
            }
            if full < 0.0 {
                let b = beta[output_group(k).index()];
                loss += b * full * full;
                g[k] = 2.0 * b * full * sd[k] * inv_n;
            }
        }
    }
    Ok((loss * inv_n, grad))
}

/// Mean softmax cross-entropy over the `n·28` elements of an `n × 84` logit
/// matrix (three consecutive logits per output). `classes` is row-major `n × 28`.
pub fn bce_loss(logits: &Matrix, classes: &[SignClass]) -> Result<LossGrad> {
    let c = SignClass::COUNT;
    logits.ensure_cols(N_OUTPUTS * c)?;
    if classes.len() != logits.rows() * N_OUTPUTS {
        return Err(Error::shape(logits.rows() * N_OUTPUTS, classes.len()));
    }
    if classes.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let inv = 1.0 / classes.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for ((z, g), class) in logits
        .as_slice()
        .chunks_exact(c)
        .zip(grad.as_mut_slice().chunks_exact_mut(c))
        .zip(classes)
    {
        let (top, m) = z.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        let mut rest = 0.0;
        for (i, &v) in z.iter().enumerate() {
            let e = (v - m).exp();
            g[i] = e;
            if i != top {
                rest += e;
            }
        }
        // log-sum-exp minus the target logit, without cancellation near zero
        loss += (m - z[class.index()]) + rest.ln_1p();
        let total = 1.0 + rest;
        for (i, gi) in g.iter_mut().enumerate() {
            let target = if i == class.index() { 1.0 } else { 0.0 };
            *gi = (*gi / total - target) * inv;
        }
    }
    Ok((loss * inv, grad))
}
