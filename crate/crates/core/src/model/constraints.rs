//! Inference-time constraint layers.
//!
//! Correction clamps every reconstructed full value (input + tendency, or the
//! water value itself) at zero. Completion overwrites one tendency per species
//! with the negative sum of the species' other tendencies so the species sum
//! vanishes.
//!
//! Both layers exist in physical units (used by evaluation, where the full
//! values are formed from the original inputs) and in standardized units
//! (the network's output space, going through `g` and `h`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{Species, N_INPUTS, N_OUTPUTS, N_TENDENCIES, PAIR_OFFSET};
use crate::transforms::NormStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    #[default]
    None,
    Correct,
    Complete,
    /// Correction first, then completion. Completion may reintroduce
    /// negative full values.
    CorrectThenComplete,
}

impl ConstraintMode {
    pub fn corrects(self) -> bool {
        matches!(self, ConstraintMode::Correct | ConstraintMode::CorrectThenComplete)
    }

    pub fn completes(self) -> bool {
        matches!(self, ConstraintMode::Complete | ConstraintMode::CorrectThenComplete)
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConstraintMode::None),
            "correct" => Ok(ConstraintMode::Correct),
            "complete" => Ok(ConstraintMode::Complete),
            "correct_then_complete" => Ok(ConstraintMode::CorrectThenComplete),
            other => Err(Error::Config(format!("unknown constraint mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub mode: ConstraintMode,
    /// Output index replaced by completion, per species in `Species::ALL` order.
    pub completion: [usize; 4],
    /// Also apply the layers inside the training loss.
    pub apply_in_training: bool,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            mode: ConstraintMode::None,
            // last listed variable of each species
            completion: [4, 8, 12, 16],
            apply_in_training: false,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        for s in Species::ALL {
            let j = self.completion[s.index()];
            if !s.output_indices().contains(&j) {
                return Err(Error::Config(format!("completion index {j} is not a {s} output")));
            }
        }
        Ok(())
    }
}

fn check(y_cols: usize, rows: usize, x: Option<&Matrix>) -> Result<()> {
    if y_cols != N_OUTPUTS {
        return Err(Error::shape(N_OUTPUTS, y_cols));
    }
    if let Some(x) = x {
        x.ensure_shape(rows, N_INPUTS)?;
    }
    Ok(())
}

/// Correction in physical units: tendencies whose full value would be
/// negative become `-x`; negative water values become 0. Other entries are
/// left untouched.
pub fn correct_row(y: &mut [f64], x: &[f64]) {
    for k in 0..N_TENDENCIES {
        let xi = x[k + PAIR_OFFSET];
        if y[k] + xi < 0.0 {
            y[k] = -xi;
        }
    }
    for v in &mut y[N_TENDENCIES..N_OUTPUTS] {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Completion in physical units.
pub fn complete_row(y: &mut [f64], completion: &[usize; 4]) {
    for s in Species::ALL {
        let j = completion[s.index()];
        let rest: f64 = s.output_indices().iter().filter(|&&i| i != j).map(|&i| y[i]).sum();
        y[j] = -rest;
    }
}

/// Applies the configured layers to physical-unit predictions.
pub fn constrain_original(y: &mut Matrix, x: &Matrix, cfg: &ConstraintConfig) -> Result<()> {
    check(y.cols(), y.rows(), Some(x))?;
    cfg.validate()?;
    for i in 0..y.rows() {
        let row = y.row_mut(i);
        if cfg.mode.corrects() {
            correct_row(row, x.row(i));
        }
        if cfg.mode.completes() {
            complete_row(row, &cfg.completion);
        }
    }
    Ok(())
}

/// Correction in standardized units.
///
/// For every element whose reconstructed full value `g(y)_k + h(x)_k` is
/// negative, the output is re-standardized from full value zero and then
/// nudged up by ulps until the reconstruction is non-negative, so that
/// `g(out) + h(x) >= 0` holds exactly in floating point. All other elements
/// pass through bit-for-bit.
pub fn apply_correction(y_std: &Matrix, x_std: &Matrix, stats: &NormStats) -> Result<Matrix> {
    check(y_std.cols(), y_std.rows(), Some(x_std))?;
    let mut out = y_std.clone();
    for i in 0..out.rows() {
        let xr = x_std.row(i);
        let row = out.row_mut(i);
        for (k, v) in row.iter_mut().enumerate() {
            let hx = if k < N_TENDENCIES {
                stats.h(k + PAIR_OFFSET, xr[k + PAIR_OFFSET])
            } else {
                0.0
            };
            if stats.g(k, *v) + hx < 0.0 {
                let mut t = stats.standardize_y_at(k, -hx);
                while stats.g(k, t) + hx < 0.0 {
                    t = t.next_up();
                }
                *v = t;
            }
        }
    }
    Ok(out)
}

/// Completion in standardized units:
/// `y_j = (-Σ_{i∈I_s, i≠j} g(y)_i - μ_j) / σ_j`.
pub fn apply_completion(y_std: &Matrix, stats: &NormStats, cfg: &ConstraintConfig) -> Result<Matrix> {
    check(y_std.cols(), y_std.rows(), None)?;
    cfg.validate()?;
    let mut out = y_std.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for s in Species::ALL {
            let j = cfg.completion[s.index()];
            let rest: f64 = s
                .output_indices()
                .iter()
                .filter(|&&k| k != j)
                .map(|&k| stats.g(k, row[k]))
                .sum();
            row[j] = stats.standardize_y_at(j, -rest);
        }
    }
    Ok(out)
}

/// Layers applied in standardized units with the Jacobian information needed
/// to backpropagate through them during training.
pub struct ConstrainedOutput {
    pub y: Matrix,
    /// Elements clamped by correction (their gradient is zero).
    clamped: Vec<bool>,
}

pub fn constrain_std_forward(
    y_std: &Matrix,
    x_std: &Matrix,
    stats: &NormStats,
    cfg: &ConstraintConfig,
) -> Result<ConstrainedOutput> {
    let mut y = y_std.clone();
    let mut clamped = vec![false; y.as_slice().len()];
    if cfg.mode.corrects() {
        let corrected = apply_correction(&y, x_std, stats)?;
        for (c, (a, b)) in clamped.iter_mut().zip(corrected.as_slice().iter().zip(y.as_slice())) {
            *c = a.to_bits() != b.to_bits();
        }
        y = corrected;
    }
    if cfg.mode.completes() {
        y = apply_completion(&y, stats, cfg)?;
    }
    Ok(ConstrainedOutput { y, clamped })
}

/// Pulls a gradient with respect to the constrained output back to the raw
/// network output.
pub fn constrain_std_backward(
    out: &ConstrainedOutput,
    grad: &Matrix,
    stats: &NormStats,
    cfg: &ConstraintConfig,
) -> Matrix {
    let mut g = grad.clone();
    if cfg.mode.completes() {
        let sd = stats.y_std();
        for i in 0..g.rows() {
            let row = g.row_mut(i);
            for s in Species::ALL {
                let j = cfg.completion[s.index()];
                let gj = row[j];
                for &k in s.output_indices() {
                    if k != j {
                        row[k] -= gj * sd[k] / sd[j];
                    }
                }
                row[j] = 0.0;
            }
        }
    }
    if cfg.mode.corrects() {
        for (v, c) in g.as_mut_slice().iter_mut().zip(&out.clamped) {
            if *c {
                *v = 0.0;
            }
        }
    }
    g
}
