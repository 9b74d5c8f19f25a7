//! Log-transform pipeline: a regressor on standardized log magnitudes fused
//! with a three-class sign classifier.
//!
//! Prediction decodes each output to physical units (argmax sign times the
//! exponentiated magnitude, zero for the zero class) and then applies the
//! constraint layers. Water outputs skip the classifier and are always
//! decoded as positive.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{
    build_report, class_metrics, class_metrics_per_variable, model_fingerprint, MetricsReport, ScoreScale,
    ScoredPredictions,
};
use crate::matrix::Matrix;
use crate::model::constraints::constrain_original;
use crate::model::{Checkpoint, ConstraintConfig, ConstraintMode, Head, Mlp};
use crate::schema::{self, is_water_output, N_OUTPUTS, N_TENDENCIES};
use crate::training::loss::{bce_loss, LossGrad};
use crate::training::trainer::{encode, fit};
use crate::training::{train_with, EpochRecord, TrainConfig, TrainOutcome};
use crate::transforms::{inverse_log, log_transform, LogTransformConfig, NormStats, SignClass, Transform};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REGRESSOR_FILE: &str = "regressor.json";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean accuracy over the tendency outputs.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<ClassifierEpoch>,
}

pub fn classifier_log_csv(log: &[ClassifierEpoch]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,accuracy\n");
    for r in log {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.accuracy));
    }
    s
}

/// Index of the largest of three logits; ties go to the lower class index.
pub fn argmax_class(logits: &[f64]) -> SignClass {
    let mut best = 0;
    for i in 1..SignClass::COUNT {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    SignClass::from_index(best).expect("index below class count")
}

fn decode_classes(logits: &Matrix) -> Vec<SignClass> {
    logits
        .as_slice()
        .chunks_exact(SignClass::COUNT)
        .enumerate()
        .map(|(i, z)| {
            if is_water_output(i % N_OUTPUTS) {
                SignClass::Positive
            } else {
                argmax_class(z)
            }
        })
        .collect()
}

fn tendency_accuracy(pred: &[SignClass], truth: &[SignClass]) -> Result<f64> {
    let pick = |c: &[SignClass]| -> Vec<SignClass> {
        c.iter()
            .enumerate()
            .filter(|(i, _)| i % N_OUTPUTS < N_TENDENCIES)
            .map(|(_, c)| *c)
            .collect()
    };
    Ok(class_metrics(&pick(pred), &pick(truth))?.accuracy)
}

/// Trains the sign classifier with the regressor's architecture (output
/// widened to three logits per variable) and optimizer settings.
pub fn train_classifier(config: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<ClassifierOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty(
            "classifier training needs train and validation rows".into(),
        ));
    }
    let log_cfg = config.log_config();
    let stats = NormStats::fit(train, config.transform, &log_cfg)?;
    let x = encode(&stats, config.transform, train.inputs())?;
    let classes = log_cfg.classes(train.outputs())?;
    let x_val = encode(&stats, config.transform, val.inputs())?;
    let val_classes = log_cfg.classes(val.outputs())?;

    let mut arch = config.arch.clone();
    *arch.last_mut().expect("validated arch") = N_OUTPUTS * SignClass::COUNT;
    let mut mlp = Mlp::init(&arch, config.activation, config.seed)?;

    let batch_loss = |idx: &[usize], logits: &Matrix| -> Result<LossGrad> {
        let target: Vec<SignClass> = idx
            .iter()
            .flat_map(|&i| classes[i * N_OUTPUTS..(i + 1) * N_OUTPUTS].iter().copied())
            .collect();
        bce_loss(logits, &target)
    };
    let mut log = Vec::new();
    let after_epoch = |epoch: usize, mlp: &Mlp, train_loss: f64| -> Result<()> {
        let logits = mlp.forward_par(&x_val)?;
        let (val_loss, _) = bce_loss(&logits, &val_classes)?;
        log.push(ClassifierEpoch {
            epoch,
            train_loss,
            val_loss,
            accuracy: tendency_accuracy(&decode_classes(&logits), &val_classes)?,
        });
        Ok(())
    };
    fit(&mut mlp, &x, config, batch_loss, after_epoch)?;

    let checkpoint = Checkpoint::new(
        Head::SignClassifier,
        mlp,
        config.transform,
        stats,
        ConstraintConfig::default(),
        (config.transform == Transform::Log).then_some(log_cfg),
    )?;
    Ok(ClassifierOutcome { checkpoint, log })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogPipelineBundle {
    regressor: Checkpoint,
    classifier: Checkpoint,
    constraint: ConstraintConfig,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    schema_hash: String,
    regressor: String,
    classifier: String,
    log_transform: LogTransformConfig,
    constraint_mode: ConstraintMode,
    completion_indices: [usize; 4],
}

impl LogPipelineBundle {
    /// Pairs a log-magnitude regressor with a sign classifier. The
    /// regressor's constraint configuration becomes the bundle's.
    pub fn new(regressor: Checkpoint, classifier: Checkpoint) -> Result<Self> {
        let constraint = regressor.constraint;
        let b = Self {
            regressor,
            classifier,
            constraint,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        let (r, c) = (&self.regressor, &self.classifier);
        if r.head != Head::Regression || c.head != Head::SignClassifier {
            return Err(Error::Config("bundle needs a regressor and a sign classifier".into()));
        }
        if r.transform != Transform::Log || c.transform != Transform::Log {
            return Err(Error::Config("bundle models must use the log transform".into()));
        }
        if r.stats.x_mean() != c.stats.x_mean() || r.stats.x_std() != c.stats.x_std() {
            return Err(Error::Schema("regressor and classifier input statistics differ".into()));
        }
        if r.log != c.log {
            return Err(Error::Schema("regressor and classifier log floors differ".into()));
        }
        self.constraint.validate()
    }

    pub fn regressor(&self) -> &Checkpoint {
        &self.regressor
    }

    pub fn classifier(&self) -> &Checkpoint {
        &self.classifier
    }

    pub fn constraint(&self) -> &ConstraintConfig {
        &self.constraint
    }

    pub fn set_constraint_mode(&mut self, mode: ConstraintMode) {
        self.constraint.mode = mode;
    }

    pub fn log_config(&self) -> &LogTransformConfig {
        self.regressor.log.as_ref().expect("validated log config")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.regressor.save(&dir.join(REGRESSOR_FILE))?;
        self.classifier.save(&dir.join(CLASSIFIER_FILE))?;
        let manifest = Manifest {
            version: BUNDLE_VERSION,
            schema_hash: schema::schema_hash().to_string(),
            regressor: REGRESSOR_FILE.into(),
            classifier: CLASSIFIER_FILE.into(),
            log_transform: self.log_config().clone(),
            constraint_mode: self.constraint.mode,
            completion_indices: self.constraint.completion,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported bundle version {}", manifest.version),
            ));
        }
        schema::check_schema_hash(&manifest.schema_hash)?;
        let regressor = Checkpoint::load(&dir.join(&manifest.regressor))?;
        let classifier = Checkpoint::load(&dir.join(&manifest.classifier))?;
        if regressor.log.as_ref() != Some(&manifest.log_transform) {
            return Err(Error::format(&path, "manifest log floor differs from the regressor's"));
        }
        let mut b = Self::new(regressor, classifier)?;
        b.constraint.mode = manifest.constraint_mode;
        b.constraint.completion = manifest.completion_indices;
        b.validate()?;
        Ok(b)
    }

    /// Decoded classes (row-major `n × 28`) and physical predictions before
    /// any constraint layer.
    pub fn decode(&self, x: &Matrix) -> Result<(Vec<SignClass>, Matrix)> {
        let xs = self.regressor.encode_inputs(x)?;
        let mag = self.regressor.mlp.forward_par(&xs)?;
        let logits = self.classifier.mlp.forward_par(&xs)?;
        let classes = decode_classes(&logits);
        let mut y = self.regressor.stats.back_y(&mag)?;
        for (v, c) in y.as_mut_slice().iter_mut().zip(&classes) {
            *v = inverse_log(*c, *v);
        }
        Ok((classes, y))
    }

    /// Physical tendencies and water values, constrained by `mode` (the
    /// bundle's own mode when `None`).
    pub fn predict(&self, x: &Matrix, mode: Option<ConstraintMode>) -> Result<Matrix> {
        let (_, mut y) = self.decode(x)?;
        let cfg = ConstraintConfig {
            mode: mode.unwrap_or(self.constraint.mode),
            ..self.constraint
        };
        constrain_original(&mut y, x, &cfg)?;
        Ok(y)
    }
}

pub fn predict_tendencies(bundle: &LogPipelineBundle, x: &Matrix) -> Result<Matrix> {
    bundle.predict(x, None)
}

/// Standardized `ln max(|y|, ε)` of physical values.
fn log_scores(bundle: &LogPipelineBundle, y: &Matrix) -> Result<Matrix> {
    let eps = &bundle.log_config().epsilon;
    let stats = &bundle.regressor.stats;
    let mut out = y.clone();
    for i in 0..out.rows() {
        for (k, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = stats.standardize_y_at(k, log_transform(*v, eps[k]).1);
        }
    }
    Ok(out)
}

/// Metrics of a bundle: R² and MSE on the standardized log-magnitude scale of
/// the final predictions, mass and positivity metrics in physical units, and
/// per-variable classification scores.
pub fn evaluate_bundle(
    bundle: &LogPipelineBundle,
    data: &Dataset,
    mode: Option<ConstraintMode>,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset has no rows".into()));
    }
    let mode = mode.unwrap_or(bundle.constraint.mode);
    let (pred_classes, _) = bundle.decode(data.inputs())?;
    let pred = bundle.predict(data.inputs(), Some(mode))?;
    let truth_classes = bundle.log_config().classes(data.outputs())?;
    build_report(
        data,
        ScoredPredictions {
            pred: &pred,
            score_pred: &log_scores(bundle, &pred)?,
            score_truth: &log_scores(bundle, data.outputs())?,
            scale: ScoreScale::LogMagnitude,
            classifier: Some(class_metrics_per_variable(&pred_classes, &truth_classes)?),
            model: format!(
                "{}+{}",
                model_fingerprint(&bundle.regressor),
                model_fingerprint(&bundle.classifier)
            ),
            mode,
        },
    )
}

#[derive(Debug, Clone)]
pub struct LogPipelineOutcome {
    pub bundle: LogPipelineBundle,
    pub regressor: TrainOutcome,
    pub classifier_log: Vec<ClassifierEpoch>,
}

/// Trains both networks of the log pipeline with `config` (its transform is
/// forced to the log transform).
pub fn train_log_pipeline<P: FnMut(&EpochRecord)>(
    config: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    progress: P,
) -> Result<LogPipelineOutcome> {
    let config = TrainConfig {
        transform: Transform::Log,
        ..config.clone()
    };
    let regressor = train_with(&config, train, val, progress)?;
    let classifier = train_classifier(&config, train, val)?;
    let bundle = LogPipelineBundle::new(regressor.checkpoint.clone(), classifier.checkpoint)?;
    Ok(LogPipelineOutcome {
        bundle,
        regressor,
        classifier_log: classifier.log,
    })
}
