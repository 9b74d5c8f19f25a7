//! Mini-batch training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{mass_loss, mse_loss, pos_loss, LossGrad, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{full_value_scale, mass_metrics, mse, per_variable_r2, positivity_metrics};
use crate::matrix::Matrix;
use crate::model::constraints::{constrain_std_backward, constrain_std_forward};
use crate::model::{Activation, Checkpoint, ConstraintConfig, ConstraintMode, Head, Mlp, Tape};
use crate::rng::{stream, Purpose};
use crate::schema::{Species, N_INPUTS, N_OUTPUTS};
use crate::transforms::{inverse_log, log_inputs, LogTransformConfig, NormStats, SignClass, Transform};

/// Rows per gradient shard. Fixed so the reduction order, and with it every
/// bit of the trajectory, does not depend on the worker count.
pub const SHARD_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decoupled_weight_decay: bool,
    pub batch_size: usize,
    pub lambda_mass: f64,
    pub mu_pos: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub transform: Transform,
    pub activation: Activation,
    pub arch: Vec<usize>,
    pub constraint_mode: ConstraintMode,
    pub constrain_in_training: bool,
    /// Overrides the worst-R² choice of completion variables.
    pub completion_indices: Option<[usize; 4]>,
    pub val_fraction: f64,
    pub log_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 100,
            learning_rate: 1e-3,
            weight_decay: 1e-9,
            decoupled_weight_decay: false,
            batch_size: 256,
            lambda_mass: 0.0,
            mu_pos: 0.0,
            alpha: DEFAULT_ALPHA.to_vec(),
            beta: DEFAULT_BETA.to_vec(),
            transform: Transform::Standard,
            activation: Activation::Relu,
            arch: vec![N_INPUTS, 128, 128, 128, N_OUTPUTS],
            constraint_mode: ConstraintMode::None,
            constrain_in_training: false,
            completion_indices: None,
            val_fraction: 0.1,
            log_epsilon: crate::transforms::DEFAULT_LOG_EPSILON,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        for (name, v) in [("lambda_mass", self.lambda_mass), ("mu_pos", self.mu_pos)] {
            if v != 0.0 && v != 1.0 {
                return bad(format!("{name} must be 0 or 1, got {v}"));
            }
        }
        if self.alpha.len() != 4 || self.alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad(format!("alpha must be 4 non-negative weights, got {:?}", self.alpha));
        }
        if self.beta.len() != 6 || self.beta.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad(format!("beta must be 6 non-negative weights, got {:?}", self.beta));
        }
        if self.arch.len() < 2 || self.arch[0] != N_INPUTS || *self.arch.last().unwrap() != N_OUTPUTS {
            return bad(format!(
                "arch must start at {N_INPUTS} and end at {N_OUTPUTS}, got {:?}",
                self.arch
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if !(self.log_epsilon > 0.0) {
            return bad("log_epsilon must be positive".into());
        }
        if self.transform == Transform::Log && (self.lambda_mass != 0.0 || self.mu_pos != 0.0) {
            return bad("mass and positivity losses are defined for the standard transform only".into());
        }
        if self.transform == Transform::Log && self.constrain_in_training {
            return bad("constraint layers in training need the standard transform".into());
        }
        self.constraint_config(self.completion_indices.unwrap_or([4, 8, 12, 16]))
            .validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            decoupled: self.decoupled_weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn log_config(&self) -> LogTransformConfig {
        LogTransformConfig {
            epsilon: vec![self.log_epsilon; N_OUTPUTS],
        }
    }

    fn constraint_config(&self, completion: [usize; 4]) -> ConstraintConfig {
        ConstraintConfig {
            mode: self.constraint_mode,
            completion,
            apply_in_training: self.constrain_in_training,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub r2: f64,
    pub mass_violation: f64,
    pub neg_fraction: f64,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub records: Vec<EpochRecord>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,mse,r2,mass_violation,neg_fraction,train_loss";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.mse, r.r2, r.mass_violation, r.neg_fraction, r.train_loss
            ));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: EpochLog,
    /// Validation R² per output of the final network (before constraint layers).
    pub val_r2: Vec<f64>,
}

/// Network inputs for a transform: standardized physical or log inputs.
pub(crate) fn encode(stats: &NormStats, transform: Transform, x: &Matrix) -> Result<Matrix> {
    match transform {
        Transform::Standard => stats.standardize_x(x),
        Transform::Log => stats.standardize_x(&log_inputs(x)),
    }
}

/// Loss and parameter gradient for one batch. The forward and backward
/// passes run per shard in parallel; shard gradients are summed in shard order.
pub(crate) fn batch_gradient<F>(mlp: &Mlp, xb: &Matrix, loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&Matrix) -> Result<LossGrad>,
{
    let n = xb.rows();
    let bounds: Vec<(usize, usize)> = (0..n)
        .step_by(SHARD_ROWS)
        .map(|s| (s, (s + SHARD_ROWS).min(n)))
        .collect();
    let tapes: Vec<Tape> = bounds
        .par_iter()
        .map(|&(s, e)| mlp.forward_tape(&xb.slice_rows(s, e)))
        .collect::<Result<_>>()?;
    let d_out = mlp.output_dim();
    let mut pred = Matrix::zeros(n, d_out);
    for (&(s, e), tape) in bounds.iter().zip(&tapes) {
        pred.as_mut_slice()[s * d_out..e * d_out].copy_from_slice(tape.output().as_slice());
    }
    let (value, grad_out) = loss(&pred)?;
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let shard_grads: Vec<Vec<f64>> = bounds
        .par_iter()
        .zip(tapes.par_iter())
        .map(|(&(s, e), tape)| mlp.backward_tape(tape, &grad_out.slice_rows(s, e)).map(|g| g.0))
        .collect::<Result<_>>()?;
    let mut iter = shard_grads.into_iter();
    let mut total = iter.next().unwrap_or_else(|| vec![0.0; mlp.n_params()]);
    for g in iter {
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
    }
    Ok((value, total))
}

/// Runs the epoch/batch loop. `batch_loss` maps batch row indices and the
/// network output to a loss; `after_epoch` receives the updated network and
/// the mean training loss.
pub(crate) fn fit<L, E>(
    mlp: &mut Mlp,
    x: &Matrix,
    cfg: &TrainConfig,
    mut batch_loss: L,
    mut after_epoch: E,
) -> Result<()>
where
    L: FnMut(&[usize], &Matrix) -> Result<LossGrad>,
    E: FnMut(usize, &Mlp, f64) -> Result<()>,
{
    let n = x.rows();
    if n == 0 {
        return Err(Error::Empty("training set has no rows".into()));
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(mlp.n_params());
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = stream(cfg.seed, Purpose::Shuffle, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select_rows(idx);
            let (value, grads) = batch_gradient(mlp, &xb, |pred| batch_loss(idx, pred))?;
            if !value.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b + 1,
                    detail: format!("training loss is {value}"),
                });
            }
            adam_step(mlp.params_mut(), &grads, &mut state, &adam);
            total += value;
            batches += 1;
        }
        after_epoch(epoch, mlp, total / batches as f64)?;
    }
    Ok(())
}

/// Species variable with the lowest R², per species.
pub fn worst_r2_completion(r2: &[f64]) -> [usize; 4] {
    let mut out = [0; 4];
    for s in Species::ALL {
        out[s.index()] = *s
            .output_indices()
            .iter()
            .min_by(|&&a, &&b| r2[a].total_cmp(&r2[b]))
            .expect("species has outputs");
    }
    out
}

struct Validation {
    x: Matrix,
    y: Matrix,
    x_phys: Matrix,
    full_scale: Vec<f64>,
    classes: Option<Vec<SignClass>>,
}

impl Validation {
    /// Physical predictions for the mass and positivity columns of the epoch
    /// log. Log-pipeline magnitudes are decoded with the true signs.
    fn physical(&self, stats: &NormStats, pred: &Matrix) -> Result<Matrix> {
        let mut y = stats.back_y(pred)?;
        if let Some(classes) = &self.classes {
            for (v, c) in y.as_mut_slice().iter_mut().zip(classes) {
                *v = inverse_log(*c, *v);
            }
        }
        Ok(y)
    }
}

/// Trains a regressor with the configured transform.
pub fn train(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    train_with(config, train, val, |_| {})
}

/// [`train`] with a callback receiving each epoch's record as it completes.
pub fn train_with<P: FnMut(&EpochRecord)>(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut progress: P,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set has no rows".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set has no rows".into()));
    }
    let log_cfg = config.log_config();
    let stats = NormStats::fit(train, config.transform, &log_cfg)?;
    let targets = |d: &Dataset| -> Result<Matrix> {
        match config.transform {
            Transform::Standard => stats.standardize_y(d.outputs()),
            Transform::Log => stats.standardize_y(&log_cfg.magnitudes(d.outputs())?),
        }
    };
    let x = encode(&stats, config.transform, train.inputs())?;
    let y = targets(train)?;
    let v = Validation {
        x: encode(&stats, config.transform, val.inputs())?,
        y: targets(val)?,
        x_phys: val.inputs().clone(),
        full_scale: full_value_scale(val.inputs(), val.outputs())?,
        classes: match config.transform {
            Transform::Standard => None,
            Transform::Log => Some(log_cfg.classes(val.outputs())?),
        },
    };

    let train_cc = config.constraint_config(config.completion_indices.unwrap_or([4, 8, 12, 16]));
    let constrain = config.constrain_in_training && config.constraint_mode != ConstraintMode::None;
    let (lambda, mu) = (config.lambda_mass, config.mu_pos);

    let batch_loss = |idx: &[usize], pred: &Matrix| -> Result<LossGrad> {
        let yb = y.select_rows(idx);
        let xb = if constrain || mu != 0.0 {
            Some(x.select_rows(idx))
        } else {
            None
        };
        let constrained = match (&xb, constrain) {
            (Some(xb), true) => Some(constrain_std_forward(pred, xb, &stats, &train_cc)?),
            _ => None,
        };
        let out = constrained.as_ref().map_or(pred, |c| &c.y);
        let (mut value, mut grad) = mse_loss(out, &yb)?;
        let mut add = |(v, g): LossGrad, w: f64| {
            value += w * v;
            for (a, b) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += w * b;
            }
        };
        if lambda != 0.0 {
            add(mass_loss(out, &stats, &config.alpha)?, lambda);
        }
        if mu != 0.0 {
            add(
                pos_loss(out, xb.as_ref().expect("inputs selected"), &stats, &config.beta)?,
                mu,
            );
        }
        let grad = match &constrained {
            Some(c) => constrain_std_backward(c, &grad, &stats, &train_cc),
            None => grad,
        };
        Ok((value, grad))
    };

    let mut log = EpochLog::default();
    let mut val_r2 = Vec::new();
    let after_epoch = |epoch: usize, mlp: &Mlp, train_loss: f64| -> Result<()> {
        let raw = mlp.forward_par(&v.x)?;
        let pred = if constrain {
            constrain_std_forward(&raw, &v.x, &stats, &train_cc)?.y
        } else {
            raw.clone()
        };
        let r2v = per_variable_r2(&pred, &v.y)?;
        let phys = v.physical(&stats, &pred)?;
        let (_, mass_violation) = mass_metrics(&phys, &v.x_phys)?;
        let (neg_fraction, _) = positivity_metrics(&phys, &v.x_phys, &v.full_scale)?;
        let rec = EpochRecord {
            epoch,
            mse: mse(&pred, &v.y)?,
            r2: r2v.iter().sum::<f64>() / r2v.len() as f64,
            mass_violation,
            neg_fraction,
            train_loss,
        };
        progress(&rec);
        log.records.push(rec);
        val_r2 = if constrain { per_variable_r2(&raw, &v.y)? } else { r2v };
        Ok(())
    };

    let mut mlp = Mlp::init(&config.arch, config.activation, config.seed)?;
    fit(&mut mlp, &x, config, batch_loss, after_epoch)?;

    let completion = config
        .completion_indices
        .unwrap_or_else(|| worst_r2_completion(&val_r2));
    let log_field = (config.transform == Transform::Log).then_some(log_cfg);
    let checkpoint = Checkpoint::new(
        Head::Regression,
        mlp,
        config.transform,
        stats,
        config.constraint_config(completion),
        log_field,
    )?;
    Ok(TrainOutcome {
        checkpoint,
        log,
        val_r2,
    })
}

/// Splits off the validation tail when no explicit validation set is given.
pub fn split_for_training(config: &TrainConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    data.split_tail(config.val_fraction)
}
