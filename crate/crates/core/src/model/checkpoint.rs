//! Checkpoint files: network weights plus everything needed to turn physical
//! inputs into physical predictions (statistics, transform, constraint layers).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::constraints::{self, ConstraintConfig, ConstraintMode};
use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{self, N_INPUTS, N_OUTPUTS};
use crate::transforms::{log_inputs, LogTransformConfig, NormStats, SignClass, Transform};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// 28 outputs: standardized tendencies or log-magnitudes.
    Regression,
    /// 28×3 sign-class logits.
    SignClassifier,
}

impl Head {
    pub fn output_dim(self) -> usize {
        match self {
            Head::Regression => N_OUTPUTS,
            Head::SignClassifier => N_OUTPUTS * SignClass::COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub head: Head,
    pub mlp: Mlp,
    pub transform: Transform,
    pub stats: NormStats,
    pub constraint: ConstraintConfig,
    pub log: Option<LogTransformConfig>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintSection {
    mode: ConstraintMode,
    apply_in_training: bool,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    schema_hash: String,
    head: Head,
    arch: Vec<usize>,
    activation: Activation,
    transform: Transform,
    /// Per layer, `fan_in` rows of `fan_out` weights.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    norm_stats: NormStats,
    constraint_config: ConstraintSection,
    completion_indices: [usize; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_transform: Option<LogTransformConfig>,
}

impl Checkpoint {
    pub fn new(
        head: Head,
        mlp: Mlp,
        transform: Transform,
        stats: NormStats,
        constraint: ConstraintConfig,
        log: Option<LogTransformConfig>,
    ) -> Result<Self> {
        let ck = Self {
            head,
            mlp,
            transform,
            stats,
            constraint,
            log,
        };
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.mlp.input_dim() != N_INPUTS || self.mlp.output_dim() != self.head.output_dim() {
            return Err(Error::Schema(format!(
                "architecture {:?} does not map {N_INPUTS} inputs to {} outputs",
                self.mlp.arch(),
                self.head.output_dim()
            )));
        }
        self.stats.validate()?;
        self.constraint.validate()?;
        if self.transform == Transform::Log {
            match &self.log {
                Some(l) => l.validate()?,
                None => return Err(Error::Config("log transform without log floor config".into())),
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mlp = &self.mlp;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..mlp.n_layers() {
            let (w, b) = mlp.layer(l);
            let fan_out = mlp.arch()[l + 1];
            weights.push(w.chunks_exact(fan_out).map(<[f64]>::to_vec).collect());
            biases.push(b.to_vec());
        }
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            schema_hash: schema::schema_hash().to_string(),
            head: self.head,
            arch: mlp.arch().to_vec(),
            activation: mlp.activation(),
            transform: self.transform,
            weights,
            biases,
            norm_stats: self.stats.clone(),
            constraint_config: ConstraintSection {
                mode: self.constraint.mode,
                apply_in_training: self.constraint.apply_in_training,
            },
            completion_indices: self.constraint.completion,
            log_transform: self.log.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported checkpoint version {}", file.version),
            ));
        }
        schema::check_schema_hash(&file.schema_hash)?;
        if file.weights.len() + 1 != file.arch.len() || file.biases.len() + 1 != file.arch.len() {
            return Err(Error::format(origin, "layer count does not match architecture"));
        }
        let mut params = Vec::new();
        for (l, (w, b)) in file.weights.iter().zip(&file.biases).enumerate() {
            let (fan_in, fan_out) = (file.arch[l], file.arch[l + 1]);
            if w.len() != fan_in || w.iter().any(|r| r.len() != fan_out) || b.len() != fan_out {
                return Err(Error::format(origin, format!("layer {l} has wrong shape")));
            }
            params.extend(w.iter().flatten());
            params.extend(b);
        }
        let mlp = Mlp::from_params(&file.arch, file.activation, params)?;
        Checkpoint::new(
            file.head,
            mlp,
            file.transform,
            file.norm_stats,
            ConstraintConfig {
                mode: file.constraint_config.mode,
                completion: file.completion_indices,
                apply_in_training: file.constraint_config.apply_in_training,
            },
            file.log_transform,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, path)
    }

    /// Physical inputs mapped into the network's standardized input space.
    pub fn encode_inputs(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_cols(N_INPUTS)?;
        match self.transform {
            Transform::Standard => self.stats.standardize_x(x),
            Transform::Log => self.stats.standardize_x(&log_inputs(x)),
        }
    }

    /// Raw network output for physical inputs (standardized output space).
    pub fn predict_std(&self, x: &Matrix) -> Result<Matrix> {
        let xs = self.encode_inputs(x)?;
        self.mlp.forward_par(&xs)
    }

    /// Standard-pipeline regressor: physical tendencies and water values, after
    /// the constraint layers selected by `mode` (the checkpoint's own mode
    /// when `None`).
    pub fn predict_original(&self, x: &Matrix, mode: Option<ConstraintMode>) -> Result<Matrix> {
        if self.head != Head::Regression || self.transform != Transform::Standard {
            return Err(Error::Config(
                "physical predictions from a single checkpoint need a standard-transform regressor; \
                 log-pipeline models are used through a bundle"
                    .into(),
            ));
        }
        let mut y = self.stats.back_y(&self.predict_std(x)?)?;
        let cfg = ConstraintConfig {
            mode: mode.unwrap_or(self.constraint.mode),
            ..self.constraint
        };
        constraints::constrain_original(&mut y, x, &cfg)?;
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::refmodel::{generate_dataset, GeneratorParams};
    use crate::transforms::fit_stats;

    fn checkpoint() -> (Checkpoint, Dataset) {
        let data = generate_dataset(50, 3, &GeneratorParams::default()).unwrap();
        let stats = fit_stats(&data).unwrap();
        let mlp = Mlp::init(&[32, 16, 28], Activation::LeakyRelu, 5).unwrap();
        let ck = Checkpoint::new(
            Head::Regression,
            mlp,
            Transform::Standard,
            stats,
            ConstraintConfig::default(),
            None,
        )
        .unwrap();
        (ck, data)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (ck, _) = checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        ck.save(&p1).unwrap();
        let back = Checkpoint::load(&p1).unwrap();
        assert_eq!(back, ck);
        back.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_schema_hash_is_rejected() {
        let (ck, _) = checkpoint();
        let text = ck
            .to_json()
            .unwrap()
            .replacen(schema::schema_hash(), &"0".repeat(64), 1);
        assert!(matches!(
            Checkpoint::from_json(&text, Path::new("x")),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let (ck, _) = checkpoint();
        let text = ck.to_json().unwrap().replacen("\"version\": 1", "\"version\": 7", 1);
        assert!(Checkpoint::from_json(&text, Path::new("x")).is_err());
    }

    #[test]
    fn mode_override() {
        let (ck, data) = checkpoint();
        let base = ck.predict_original(data.inputs(), None).unwrap();
        let corr = ck
            .predict_original(data.inputs(), Some(ConstraintMode::Correct))
            .unwrap();
        assert_eq!(base.rows(), data.len());
        for (i, row) in corr.iter_rows().enumerate() {
            for (k, v) in row[..24].iter().enumerate() {
                assert!(v + data.inputs().get(i, k + 8) >= 0.0);
            }
        }
    }
}
