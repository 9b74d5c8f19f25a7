//! Throughput benchmark: reference model step versus emulator inference.
//!
//! Emulator timings cover the whole inference path per row shard: input
//! standardization, the network forward pass, the output back-transform and,
//! for the constrained variant, both constraint layers in physical units.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::constraints::{complete_row, correct_row};
use crate::model::{Activation, Checkpoint, ConstraintConfig, ConstraintMode, Head, Mlp};
use crate::refmodel::{generate_dataset, step, BoxState, GeneratorParams};
use crate::schema::{N_INPUTS, N_OUTPUTS};
use crate::training::{fit_linear_baseline, LinearBaseline};
use crate::transforms::{fit_stats, NormStats, Transform};

/// Rows per global time step in the reference setup.
pub const DEFAULT_BENCH_ROWS: usize = 571_392;
pub const DEFAULT_REPEATS: usize = 5;
const SHARD_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Refmodel,
    NnStandard,
    NnConstrained,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: ModelKind,
    pub rows: usize,
    /// Median wall time over the repeats, in seconds.
    pub wall_s: f64,
    pub rows_per_s: f64,
    pub threads: usize,
    /// Float width of the timed arithmetic, 32 or 64.
    pub float_bits: u32,
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub rows: usize,
    pub threads: usize,
    pub float32: bool,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            rows: DEFAULT_BENCH_ROWS,
            threads: 1,
            float32: false,
            repeats: DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time<F: FnMut()>(repeats: usize, mut f: F) -> f64 {
    median(
        (0..repeats)
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

fn refmodel_pass(x: &Matrix, params: &GeneratorParams, out: &mut [f64]) {
    x.as_slice()
        .par_chunks(SHARD_ROWS * N_INPUTS)
        .zip(out.par_chunks_mut(SHARD_ROWS * N_OUTPUTS))
        .for_each(|(xs, ys)| {
            for (xr, yr) in xs.chunks_exact(N_INPUTS).zip(ys.chunks_exact_mut(N_OUTPUTS)) {
                let state = BoxState::from_slice(xr).expect("row width");
                yr.copy_from_slice(&step(&state, params));
            }
        });
}

fn standardize_into<T>(xs: &[f64], stats: &NormStats, conv: impl Fn(f64) -> T) -> Vec<T> {
    let (mean, sd) = (stats.x_mean(), stats.x_std());
    xs.iter()
        .enumerate()
        .map(|(i, v)| conv((v - mean[i % N_INPUTS]) / sd[i % N_INPUTS]))
        .collect()
}

fn finish_rows(xs: &[f64], ys: &mut [f64], stats: &NormStats, constraint: Option<&ConstraintConfig>) {
    let (mean, sd) = (stats.y_mean(), stats.y_std());
    for (xr, yr) in xs.chunks_exact(N_INPUTS).zip(ys.chunks_exact_mut(N_OUTPUTS)) {
        for k in 0..N_OUTPUTS {
            yr[k] = yr[k] * sd[k] + mean[k];
        }
        if let Some(cfg) = constraint {
            if cfg.mode.corrects() {
                correct_row(yr, xr);
            }
            if cfg.mode.completes() {
                complete_row(yr, &cfg.completion);
            }
        }
    }
}

fn nn_pass(ck: &Checkpoint, x: &Matrix, float32: bool, constraint: Option<&ConstraintConfig>, out: &mut [f64]) {
    let stats = &ck.stats;
    let f32_net = float32.then(|| ck.mlp.to_f32());
    x.as_slice()
        .par_chunks(SHARD_ROWS * N_INPUTS)
        .zip(out.par_chunks_mut(SHARD_ROWS * N_OUTPUTS))
        .for_each(|(xs, ys)| {
            match &f32_net {
                Some(net) => {
                    let z = standardize_into(xs, stats, |v| v as f32);
                    for (y, v) in ys.iter_mut().zip(net.forward(&z)) {
                        *y = v as f64;
                    }
                }
                None => {
                    let z = Matrix::from_vec(xs.len() / N_INPUTS, N_INPUTS, standardize_into(xs, stats, |v| v))
                        .expect("row width");
                    ys.copy_from_slice(ck.mlp.forward(&z).expect("input width").as_slice());
                }
            }
            finish_rows(xs, ys, stats, constraint);
        });
}

fn linear_pass(lr: &LinearBaseline, x: &Matrix, out: &mut [f64]) {
    x.as_slice()
        .par_chunks(SHARD_ROWS * N_INPUTS)
        .zip(out.par_chunks_mut(SHARD_ROWS * N_OUTPUTS))
        .for_each(|(xs, ys)| {
            let m = Matrix::from_vec(xs.len() / N_INPUTS, N_INPUTS, xs.to_vec()).expect("row width");
            ys.copy_from_slice(lr.predict(&m).expect("input width").as_slice());
        });
}

/// Untrained network of the default architecture; inference cost does not
/// depend on the weight values.
fn placeholder_checkpoint(stats: NormStats, seed: u64) -> Result<Checkpoint> {
    Checkpoint::new(
        Head::Regression,
        Mlp::init(&[N_INPUTS, 128, 128, 128, N_OUTPUTS], Activation::Relu, seed)?,
        Transform::Standard,
        stats,
        ConstraintConfig::default(),
        None,
    )
}

/// Times all four model kinds on the same `rows` generated inputs.
pub fn run_bench(ck: Option<&Checkpoint>, opts: &BenchOptions) -> Result<Vec<BenchReport>> {
    if opts.rows == 0 {
        return Err(Error::Config("benchmark needs at least one row".into()));
    }
    if opts.threads == 0 || opts.repeats == 0 {
        return Err(Error::Config("threads and repeats must be at least 1".into()));
    }
    if let Some(ck) = ck {
        if ck.head != Head::Regression || ck.transform != Transform::Standard {
            return Err(Error::Config("benchmark needs a standard-transform regressor".into()));
        }
    }
    let params = GeneratorParams::default();
    let data = generate_dataset(opts.rows, opts.seed, &params)?;
    let x = data.inputs();
    let fit_rows = data.len().min(20_000);
    let fit_set = data.slice(0, fit_rows.max(2).min(data.len()));
    let owned;
    let ck = match ck {
        Some(c) => c,
        None => {
            owned = placeholder_checkpoint(fit_stats(&fit_set)?, opts.seed)?;
            &owned
        }
    };
    let lr = fit_linear_baseline(&fit_set, &fit_stats(&fit_set)?)?;
    let constrained = ConstraintConfig {
        mode: ConstraintMode::CorrectThenComplete,
        ..ck.constraint
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut out = vec![0.0; opts.rows * N_OUTPUTS];
    let nn_bits = if opts.float32 { 32 } else { 64 };
    let mut timings = Vec::new();
    pool.install(|| {
        timings.push((
            ModelKind::Refmodel,
            64,
            time(opts.repeats, || refmodel_pass(x, &params, &mut out)),
        ));
        timings.push((
            ModelKind::NnStandard,
            nn_bits,
            time(opts.repeats, || nn_pass(ck, x, opts.float32, None, &mut out)),
        ));
        timings.push((
            ModelKind::NnConstrained,
            nn_bits,
            time(opts.repeats, || {
                nn_pass(ck, x, opts.float32, Some(&constrained), &mut out)
            }),
        ));
        timings.push((
            ModelKind::Linear,
            64,
            time(opts.repeats, || linear_pass(&lr, x, &mut out)),
        ));
    });
    Ok(timings
        .into_iter()
        .map(|(model, float_bits, wall_s)| {
            let wall_s = wall_s.max(f64::MIN_POSITIVE);
            BenchReport {
                model,
                rows: opts.rows,
                wall_s,
                rows_per_s: opts.rows as f64 / wall_s,
                threads: opts.threads,
                float_bits,
                repeats: opts.repeats,
            }
        })
        .collect())
}
