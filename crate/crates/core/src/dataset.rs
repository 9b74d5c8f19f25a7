//! In-memory datasets and their on-disk forms.
//!
//! Binary layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 5            | magic `AEMU1`                             |
//! | 2            | format version (u16, currently 1)         |
//! | 32           | raw SHA-256 schema hash                   |
//! | 8            | row count (u64)                           |
//! | 4            | metadata length `L` (u32)                 |
//! | L            | metadata JSON (generator params and seed) |
//! | rows·60·8    | f64 payload, row-major, 32 inputs then 28 outputs |
//!
//! The CSV form has one header line with the 60 column names of
//! [`schema::csv_header`] and one line per row. Values use Rust's shortest
//! round-trip decimal formatting, so binary → CSV → binary is lossless.
//! CSV files carry no metadata.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::refmodel::GeneratorParams;
use crate::schema::{self, N_INPUTS, N_OUTPUTS};

pub const MAGIC: &[u8; 5] = b"AEMU1";
pub const FORMAT_VERSION: u16 = 1;
const N_COLUMNS: usize = N_INPUTS + N_OUTPUTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub seed: Option<u64>,
    pub generator: Option<GeneratorParams>,
}

impl DatasetMeta {
    pub fn generated(seed: u64, params: GeneratorParams) -> Self {
        Self {
            source: "refmodel".into(),
            seed: Some(seed),
            generator: Some(params),
        }
    }

    pub fn external(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            seed: None,
            generator: None,
        }
    }
}

/// Rows of (input, target) pairs in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    outputs: Matrix,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Matrix, outputs: Matrix, meta: DatasetMeta) -> Result<Self> {
        inputs.ensure_cols(N_INPUTS)?;
        outputs.ensure_shape(inputs.rows(), N_OUTPUTS)?;
        Ok(Self { inputs, outputs, meta })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn outputs(&self) -> &Matrix {
        &self.outputs
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    /// Short content fingerprint of the payload (first 16 hex digits of its SHA-256).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (x, y) in self.inputs.iter_rows().zip(self.outputs.iter_rows()) {
            for v in x.iter().chain(y) {
                h.update(v.to_le_bytes());
            }
        }
        schema::hex(&h.finalize()[..8])
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            outputs: self.outputs.select_rows(idx),
            meta: self.meta.clone(),
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.slice_rows(start, end),
            outputs: self.outputs.slice_rows(start, end),
            meta: self.meta.clone(),
        }
    }

    /// Splits off the last `fraction` of rows as a validation set.
    pub fn split_tail(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must be in (0, 1), got {fraction}"
            )));
        }
        let n = self.len();
        let n_val = ((n as f64) * fraction).round() as usize;
        if n_val == 0 || n_val >= n {
            return Err(Error::Empty(format!(
                "cannot split {n} rows with validation fraction {fraction}"
            )));
        }
        Ok((self.slice(0, n - n_val), self.slice(n - n_val, n)))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&hash_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        let mut buf = Vec::with_capacity(N_COLUMNS * 8);
        for (x, y) in self.inputs.iter_rows().zip(self.outputs.iter_rows()) {
            buf.clear();
            for v in x.iter().chain(y) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic, expected AEMU1"));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(|_| bad("truncated header"))?;
        let version = u16::from_le_bytes(b2);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(|_| bad("truncated header"))?;
        schema::check_schema_hash(&schema::hex(&hash))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        let rows = u64::from_le_bytes(b8) as usize;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
        let mut meta = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut meta).map_err(|_| bad("truncated metadata"))?;
        let meta: DatasetMeta = serde_json::from_slice(&meta)?;

        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != rows * N_COLUMNS * 8 {
            return Err(bad(&format!(
                "payload has {} bytes, header declares {rows} rows ({} bytes)",
                payload.len(),
                rows * N_COLUMNS * 8
            )));
        }
        let mut inputs = Vec::with_capacity(rows * N_INPUTS);
        let mut outputs = Vec::with_capacity(rows * N_OUTPUTS);
        for row in payload.chunks_exact(N_COLUMNS * 8) {
            for (j, b) in row.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(b.try_into().expect("8-byte chunk"));
                if j < N_INPUTS {
                    inputs.push(v);
                } else {
                    outputs.push(v);
                }
            }
        }
        Dataset::new(
            Matrix::from_vec(rows, N_INPUTS, inputs)?,
            Matrix::from_vec(rows, N_OUTPUTS, outputs)?,
            meta,
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", schema::csv_header().join(","))?;
        let mut line = String::new();
        for (x, y) in self.inputs.iter_rows().zip(self.outputs.iter_rows()) {
            line.clear();
            for (j, v) in x.iter().chain(y).enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, path: &Path) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, "empty CSV file"))??;
        let expected = schema::csv_header().join(",");
        if header.trim_end_matches('\r') != expected {
            return Err(Error::Schema(format!(
                "CSV header of {} does not match the compiled schema",
                path.display()
            )));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for (j, field) in line.split(',').enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, format!("line {}: bad number `{field}`", lineno + 2)))?;
                if j < N_INPUTS {
                    inputs.push(v);
                } else {
                    outputs.push(v);
                }
                count += 1;
            }
            if count != N_COLUMNS {
                return Err(Error::format(
                    path,
                    format!("line {}: {count} fields, expected {N_COLUMNS}", lineno + 2),
                ));
            }
        }
        let rows = inputs.len() / N_INPUTS;
        Dataset::new(
            Matrix::from_vec(rows, N_INPUTS, inputs)?,
            Matrix::from_vec(rows, N_OUTPUTS, outputs)?,
            DatasetMeta::external(path.display().to_string()),
        )
    }

    /// Writes CSV when the extension is `.csv`, the binary form otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        if is_csv(path) {
            self.write_csv(w)
        } else {
            self.write_binary(w)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let data = if is_csv(path) {
            Self::read_csv(r, path)?
        } else {
            Self::read_binary(r, path)?
        };
        if data.is_empty() {
            return Err(Error::Empty(format!("{} has no rows", path.display())));
        }
        Ok(data)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn hash_bytes() -> [u8; 32] {
    let hex = schema::schema_hash();
    std::array::from_fn(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).expect("hex digest"))
}
