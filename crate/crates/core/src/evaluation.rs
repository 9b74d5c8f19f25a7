//! Accuracy, conservation, positivity and classification metrics.
//!
//! Mass and positivity metrics are computed in physical units. Mass metrics are
//! normalized by `M_s`, the dataset mean of the total species mass (sum of
//! the paired input values over the species' variables). The negative mean is
//! normalized per variable by the dataset mean of its true full value.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Checkpoint, ConstraintMode, Head};
use crate::schema::{self, Species, N_INPUTS, N_OUTPUTS, N_TENDENCIES, OUTPUT_NAMES, PAIR_OFFSET};
use crate::transforms::{SignClass, Transform};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    if truth.len() < 2 {
        return Err(Error::UndefinedR2("need at least two values".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedR2("truth is constant".into()));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn per_variable_r2(pred: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    pred.ensure_shape(truth.rows(), truth.cols())?;
    (0..truth.cols())
        .map(|k| {
            r2(&pred.column(k), &truth.column(k))
                .map_err(|e| Error::UndefinedR2(format!("{}: {e}", OUTPUT_NAMES.get(k).unwrap_or(&"?"))))
        })
        .collect()
}

/// Mean squared difference over all elements.
pub fn mse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    pred.ensure_shape(truth.rows(), truth.cols())?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Err(Error::Empty("no elements to score".into()));
    }
    Ok(pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n as f64)
}

/// `M_s`: dataset mean over rows of the total input mass of each species.
pub fn species_mass_scale(x: &Matrix) -> Result<[f64; 4]> {
    x.ensure_cols(N_INPUTS)?;
    if x.rows() == 0 {
        return Err(Error::Empty("no rows".into()));
    }
    let mut scale = [0.0; 4];
    for s in Species::ALL {
        let total: f64 = x
            .iter_rows()
            .map(|r| s.output_indices().iter().map(|&k| r[k + PAIR_OFFSET]).sum::<f64>())
            .sum();
        let m = total / x.rows() as f64;
        if !(m > 0.0) {
            return Err(Error::Normalization(format!("species {s} has zero mean mass")));
        }
        scale[s.index()] = m;
    }
    Ok(scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassBias {
    #[serde(rename = "SO4")]
    pub so4: f64,
    #[serde(rename = "BC")]
    pub bc: f64,
    #[serde(rename = "OC")]
    pub oc: f64,
    #[serde(rename = "DU")]
    pub du: f64,
}

impl MassBias {
    pub fn to_array(self) -> [f64; 4] {
        [self.so4, self.bc, self.oc, self.du]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            so4: a[0],
            bc: a[1],
            oc: a[2],
            du: a[3],
        }
    }
}

/// Per-species bias (signed mean species sum over `M_s`) and the overall
/// violation (mean over species of the mean absolute species sum over `M_s`).
pub fn mass_metrics(pred: &Matrix, x: &Matrix) -> Result<(MassBias, f64)> {
    pred.ensure_shape(x.rows(), N_OUTPUTS)?;
    let scale = species_mass_scale(x)?;
    let n = pred.rows() as f64;
    let mut bias = [0.0; 4];
    let mut violation = 0.0;
    for s in Species::ALL {
        let (mut signed, mut abs) = (0.0, 0.0);
        for r in pred.iter_rows() {
            let sum: f64 = s.output_indices().iter().map(|&k| r[k]).sum();
            signed += sum;
            abs += sum.abs();
        }
        bias[s.index()] = signed / n / scale[s.index()];
        violation += abs / n / scale[s.index()];
    }
    Ok((MassBias::from_array(bias), violation / Species::ALL.len() as f64))
}

/// Reconstructed full values: tendency plus paired input, water as-is.
pub fn full_values(y: &Matrix, x: &Matrix) -> Result<Matrix> {
    y.ensure_shape(x.rows(), N_OUTPUTS)?;
    x.ensure_cols(N_INPUTS)?;
    let mut out = y.clone();
    for i in 0..out.rows() {
        let xr = x.row(i);
        for (k, v) in out.row_mut(i)[..N_TENDENCIES].iter_mut().enumerate() {
            *v += xr[k + PAIR_OFFSET];
        }
    }
    Ok(out)
}

/// `m_k`: per-variable dataset mean of the true full value.
pub fn full_value_scale(x: &Matrix, y_true: &Matrix) -> Result<Vec<f64>> {
    let full = full_values(y_true, x)?;
    let n = full.rows() as f64;
    let scale: Vec<f64> = (0..N_OUTPUTS)
        .map(|k| full.iter_rows().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    if let Some(k) = scale.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::Normalization(format!(
            "mean full value of {} is zero",
            OUTPUT_NAMES[k]
        )));
    }
    Ok(scale)
}

/// Fraction of negative entries and mean of `ReLU(-v) / m_k` over all entries
/// of a matrix of full values with per-column scales `m_k`.
pub fn negativity(values: &Matrix, scale: &[f64]) -> Result<(f64, f64)> {
    values.ensure_cols(scale.len())?;
    if let Some(k) = scale.iter().position(|m| *m == 0.0) {
        return Err(Error::Normalization(format!("column {k} has zero scale")));
    }
    let total = values.as_slice().len();
    if total == 0 {
        return Err(Error::Empty("no values".into()));
    }
    let mut count = 0usize;
    let mut extent = 0.0;
    for r in values.iter_rows() {
        for (v, m) in r.iter().zip(scale) {
            if *v < 0.0 {
                count += 1;
                extent += -v / m;
            }
        }
    }
    Ok((count as f64 / total as f64, extent / total as f64))
}

pub fn positivity_metrics(pred: &Matrix, x: &Matrix, scale: &[f64]) -> Result<(f64, f64)> {
    negativity(&full_values(pred, x)?, scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub accuracy: f64,
    /// Positive-class precision; `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// Positive-class recall; `None` when no true positives exist.
    pub recall: Option<f64>,
}

pub fn class_metrics(pred: &[SignClass], truth: &[SignClass]) -> Result<ClassScores> {
    if pred.len() != truth.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no labels".into()));
    }
    let (mut tp, mut fp, mut fn_, mut hit) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if p == t {
            hit += 1;
        }
        match (*p == SignClass::Positive, *t == SignClass::Positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(ClassScores {
        accuracy: hit as f64 / truth.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// Class metrics per output column of row-major `n × 28` class arrays.
pub fn class_metrics_per_variable(pred: &[SignClass], truth: &[SignClass]) -> Result<Vec<ClassScores>> {
    if pred.len() != truth.len() || !truth.len().is_multiple_of(N_OUTPUTS) {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    (0..N_OUTPUTS)
        .map(|k| {
            let p: Vec<_> = pred.iter().skip(k).step_by(N_OUTPUTS).copied().collect();
            let t: Vec<_> = truth.iter().skip(k).step_by(N_OUTPUTS).copied().collect();
            class_metrics(&p, &t)
        })
        .collect()
}

/// Scale on which per-variable R² and MSE are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    Standardized,
    LogMagnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub dataset: String,
    pub rows: usize,
    pub constraint_mode: ConstraintMode,
    pub score_scale: ScoreScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean of the per-variable R² values.
    pub r2: f64,
    pub mse: f64,
    pub rmse: f64,
    pub mass_bias: MassBias,
    pub mass_violation: f64,
    pub negative_fraction: f64,
    pub negative_mean: f64,
    pub r2_per_variable: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<Vec<ClassScores>>,
    pub meta: ReportMeta,
}

pub const REPORT_CSV_HEADER: &str =
    "r2,mse,rmse,mass_bias_so4,mass_bias_bc,mass_bias_oc,mass_bias_du,mass_violation,negative_fraction,negative_mean";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        let b = self.mass_bias;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.r2,
            self.mse,
            self.rmse,
            b.so4,
            b.bc,
            b.oc,
            b.du,
            self.mass_violation,
            self.negative_fraction,
            self.negative_mean
        )
    }

    /// One line per output variable: name, R² and (when present) classifier scores.
    pub fn per_variable_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("variable,r2");
        if self.classifier.is_some() {
            out.push_str(",accuracy,precision,recall");
        }
        out.push('\n');
        for (k, r) in self.r2_per_variable.iter().enumerate() {
            out.push_str(&format!("{},{}", OUTPUT_NAMES[k], r));
            if let Some(c) = &self.classifier {
                let c = c[k];
                out.push_str(&format!(",{},{},{}", c.accuracy, opt(c.precision), opt(c.recall)));
            }
            out.push('\n');
        }
        out
    }
}

/// Inputs to [`build_report`]: physical predictions plus the score-scale pair.
pub struct ScoredPredictions<'a> {
    pub pred: &'a Matrix,
    /// Predictions and truth on the R²/MSE scale (already standardized).
    pub score_pred: &'a Matrix,
    pub score_truth: &'a Matrix,
    pub scale: ScoreScale,
    pub classifier: Option<Vec<ClassScores>>,
    pub model: String,
    pub mode: ConstraintMode,
}

pub fn build_report(data: &Dataset, p: ScoredPredictions<'_>) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset has no rows".into()));
    }
    let x = data.inputs();
    let r2v = per_variable_r2(p.score_pred, p.score_truth)?;
    let mse = mse(p.score_pred, p.score_truth)?;
    let (mass_bias, mass_violation) = mass_metrics(p.pred, x)?;
    let scale = full_value_scale(x, data.outputs())?;
    let (negative_fraction, negative_mean) = positivity_metrics(p.pred, x, &scale)?;
    Ok(MetricsReport {
        r2: r2v.iter().sum::<f64>() / r2v.len() as f64,
        mse,
        rmse: mse.sqrt(),
        mass_bias,
        mass_violation,
        negative_fraction,
        negative_mean,
        r2_per_variable: r2v,
        classifier: p.classifier,
        meta: ReportMeta {
            model: p.model,
            dataset: data.fingerprint(),
            rows: data.len(),
            constraint_mode: p.mode,
            score_scale: p.scale,
        },
    })
}

/// Short fingerprint of a network's parameters.
pub fn model_fingerprint(ck: &Checkpoint) -> String {
    let mut h = Sha256::new();
    for p in ck.mlp.params() {
        h.update(p.to_le_bytes());
    }
    schema::hex(&h.finalize()[..8])
}

/// Evaluates a standard-pipeline regressor checkpoint on a dataset, applying
/// `mode` (or the checkpoint's configured mode) in physical units.
pub fn evaluate(ck: &Checkpoint, data: &Dataset, mode: Option<ConstraintMode>) -> Result<MetricsReport> {
    if ck.head != Head::Regression || ck.transform != Transform::Standard {
        return Err(Error::Config(
            "evaluate expects a standard-transform regression checkpoint; use the log bundle for log models".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset has no rows".into()));
    }
    let mode = mode.unwrap_or(ck.constraint.mode);
    let pred = ck.predict_original(data.inputs(), Some(mode))?;
    let stats = &ck.stats;
    build_report(
        data,
        ScoredPredictions {
            pred: &pred,
            score_pred: &stats.standardize_y(&pred)?,
            score_truth: &stats.standardize_y(data.outputs())?,
            scale: ScoreScale::Standardized,
            classifier: None,
            model: model_fingerprint(ck),
            mode,
        },
    )
}
