//! Feature transforms: per-column standardization (with back-transforms
//! `g` for outputs and `h` for inputs) and the sign/log-magnitude encoding of
//! tendencies used by the log pipeline.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{INPUT_NAMES, N_INPUTS, N_OUTPUTS, OUTPUT_NAMES};

pub const DEFAULT_LOG_EPSILON: f64 = 1e-20;

/// Relative humidity enters the water uptake as a power law, so the log
/// pipeline takes its logarithm along with the production rate, masses and
/// number concentrations (columns from `LOG_INPUT_START` on).
pub const LOG_INPUT_HUMIDITY: usize = 2;
pub const LOG_INPUT_START: usize = 7;
const LOG_INPUT_FLOOR: f64 = 1e-30;

/// Which feature space a model was trained in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// z-scored physical inputs and tendencies.
    Standard,
    /// z-scored log inputs and log tendency magnitudes.
    Log,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Transform::Standard),
            "log" => Ok(Transform::Log),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

/// Which data the statistics were fitted on. Only training splits exist as a
/// fitting source; evaluation checks the tag rather than refitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub split: String,
    pub dataset: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    provenance: FitProvenance,
}

fn column_stats(m: &Matrix, names: &[&str]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.rows() as f64;
    let cols = m.cols();
    let mut mean = vec![0.0; cols];
    for r in m.iter_rows() {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; cols];
    for r in m.iter_rows() {
        for j in 0..cols {
            let d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    if let Some(j) = std.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateColumn {
            column: names[j].to_string(),
        });
    }
    Ok((mean, std))
}

/// Fits standard-pipeline statistics (physical inputs and tendencies).
pub fn fit_stats(train: &Dataset) -> Result<NormStats> {
    NormStats::fit(train, Transform::Standard, &LogTransformConfig::default())
}

impl NormStats {
    /// Per-column mean and population standard deviation of the training
    /// features for the given transform.
    pub fn fit(train: &Dataset, transform: Transform, log: &LogTransformConfig) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::Empty(format!(
                "need at least 2 training rows to fit statistics, got {}",
                train.len()
            )));
        }
        let (x, y) = match transform {
            Transform::Standard => (train.inputs().clone(), train.outputs().clone()),
            Transform::Log => (log_inputs(train.inputs()), log.magnitudes(train.outputs())?),
        };
        let (x_mean, x_std) = column_stats(&x, &INPUT_NAMES)?;
        let (y_mean, y_std) = column_stats(&y, &OUTPUT_NAMES)?;
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
            provenance: FitProvenance {
                split: "train".into(),
                dataset: train.fingerprint(),
                rows: train.len(),
            },
        })
    }

    /// Builds statistics directly from mean/std vectors.
    pub fn from_parts(x_mean: Vec<f64>, x_std: Vec<f64>, y_mean: Vec<f64>, y_std: Vec<f64>) -> Result<Self> {
        let s = Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
            provenance: FitProvenance {
                split: "train".into(),
                dataset: "manual".into(),
                rows: 0,
            },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_mean.len() != N_INPUTS || self.x_std.len() != N_INPUTS {
            return Err(Error::shape(N_INPUTS, self.x_mean.len().min(self.x_std.len())));
        }
        if self.y_mean.len() != N_OUTPUTS || self.y_std.len() != N_OUTPUTS {
            return Err(Error::shape(N_OUTPUTS, self.y_mean.len().min(self.y_std.len())));
        }
        if let Some(j) = self.x_std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::DegenerateColumn {
                column: INPUT_NAMES[j].into(),
            });
        }
        if let Some(j) = self.y_std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::DegenerateColumn {
                column: OUTPUT_NAMES[j].into(),
            });
        }
        if self.provenance.split != "train" {
            return Err(Error::Normalization(format!(
                "statistics were fitted on `{}`, expected the training split",
                self.provenance.split
            )));
        }
        Ok(())
    }

    pub fn provenance(&self) -> &FitProvenance {
        &self.provenance
    }

    pub fn x_mean(&self) -> &[f64] {
        &self.x_mean
    }

    pub fn x_std(&self) -> &[f64] {
        &self.x_std
    }

    pub fn y_mean(&self) -> &[f64] {
        &self.y_mean
    }

    pub fn y_std(&self) -> &[f64] {
        &self.y_std
    }

    /// `g` for a single output column.
    #[inline]
    pub fn g(&self, k: usize, y: f64) -> f64 {
        y * self.y_std[k] + self.y_mean[k]
    }

    /// `h` for a single input column.
    #[inline]
    pub fn h(&self, j: usize, x: f64) -> f64 {
        x * self.x_std[j] + self.x_mean[j]
    }

    #[inline]
    pub fn standardize_y_at(&self, k: usize, y: f64) -> f64 {
        (y - self.y_mean[k]) / self.y_std[k]
    }

    pub fn standardize_x(&self, x: &Matrix) -> Result<Matrix> {
        affine(x, &self.x_mean, &self.x_std, true)
    }

    pub fn standardize_y(&self, y: &Matrix) -> Result<Matrix> {
        affine(y, &self.y_mean, &self.y_std, true)
    }

    /// `g` applied row-wise.
    pub fn back_y(&self, y: &Matrix) -> Result<Matrix> {
        affine(y, &self.y_mean, &self.y_std, false)
    }

    /// `h` applied row-wise.
    pub fn back_x(&self, x: &Matrix) -> Result<Matrix> {
        affine(x, &self.x_mean, &self.x_std, false)
    }
}

/// Standardizes (`forward`) or back-transforms a row-major matrix column-wise.
fn affine(m: &Matrix, mean: &[f64], std: &[f64], forward: bool) -> Result<Matrix> {
    m.ensure_cols(mean.len())?;
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for j in 0..row.len() {
            row[j] = if forward {
                standardize(row[j], mean[j], std[j])
            } else {
                row[j] * std[j] + mean[j]
            };
        }
    }
    Ok(out)
}

#[inline]
pub fn standardize(v: f64, mean: f64, std: f64) -> f64 {
    (v - mean) / std
}

/// Standardizes a single vector against explicit statistics.
pub fn standardize_vec(v: &[f64], mean: &[f64], std: &[f64]) -> Result<Vec<f64>> {
    if v.len() != mean.len() || v.len() != std.len() {
        return Err(Error::shape(mean.len(), v.len()));
    }
    Ok(v.iter()
        .zip(mean.iter().zip(std))
        .map(|(x, (m, s))| standardize(*x, *m, *s))
        .collect())
}

pub fn is_log_input(j: usize) -> bool {
    j == LOG_INPUT_HUMIDITY || j >= LOG_INPUT_START
}

/// Log-pipeline input features: `ln` of relative humidity, the production
/// rate, masses and numbers; other columns pass through.
pub fn log_inputs(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            if is_log_input(j) {
                *v = v.max(LOG_INPUT_FLOOR).ln();
            }
        }
    }
    out
}

/// Sign class of a tendency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignClass {
    Negative,
    Zero,
    Positive,
}

impl SignClass {
    pub const COUNT: usize = 3;

    /// Position of the class in a logit triple.
    pub fn index(self) -> usize {
        match self {
            SignClass::Negative => 0,
            SignClass::Zero => 1,
            SignClass::Positive => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(SignClass::Negative),
            1 => Ok(SignClass::Zero),
            2 => Ok(SignClass::Positive),
            _ => Err(Error::Config(format!("class index {i} out of range"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            SignClass::Negative => -1.0,
            SignClass::Zero => 0.0,
            SignClass::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTransformConfig {
    /// Magnitude floor per output, in physical units.
    pub epsilon: Vec<f64>,
}

impl Default for LogTransformConfig {
    fn default() -> Self {
        Self {
            epsilon: vec![DEFAULT_LOG_EPSILON; N_OUTPUTS],
        }
    }
}

impl LogTransformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.len() != N_OUTPUTS {
            return Err(Error::shape(N_OUTPUTS, self.epsilon.len()));
        }
        if self.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("log floor epsilon must be positive".into()));
        }
        Ok(())
    }

    /// `ln max(|y|, ε)` for every element of an `n×28` matrix.
    pub fn magnitudes(&self, y: &Matrix) -> Result<Matrix> {
        self.validate()?;
        y.ensure_cols(N_OUTPUTS)?;
        let mut out = y.clone();
        for r in 0..out.rows() {
            for (k, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = log_transform(*v, self.epsilon[k]).1;
            }
        }
        Ok(out)
    }

    pub fn classes(&self, y: &Matrix) -> Result<Vec<SignClass>> {
        self.validate()?;
        y.ensure_cols(N_OUTPUTS)?;
        Ok(y.as_slice()
            .iter()
            .enumerate()
            .map(|(i, v)| log_transform(*v, self.epsilon[i % N_OUTPUTS]).0)
            .collect())
    }
}

/// Splits a tendency into sign class and natural-log magnitude.
/// `|y| < ε` maps to `(Zero, ln ε)`.
pub fn log_transform(y: f64, epsilon: f64) -> (SignClass, f64) {
    let a = y.abs();
    if a < epsilon {
        (SignClass::Zero, epsilon.ln())
    } else if y > 0.0 {
        (SignClass::Positive, a.ln())
    } else {
        (SignClass::Negative, a.ln())
    }
}

pub fn inverse_log(class: SignClass, magnitude: f64) -> f64 {
    match class {
        SignClass::Zero => 0.0,
        c => c.sign() * magnitude.exp(),
    }
}
