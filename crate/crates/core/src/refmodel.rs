//! Synthetic mass-conserving aerosol box model.
//!
//! One call to [`step`] advances a single grid box by `dt` seconds through
//! condensation, nucleation, inter-mode coagulation, self-coagulation and water
//! uptake. Every process moves mass between modes of the same species, so the
//! species sums of the tendencies vanish up to round-off, and every transfer
//! is a fraction in `[0, 1)` of the donor so post-step values stay non-negative.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::schema::{Species, INPUT_NAMES, N_INPUTS, N_OUTPUTS, N_TENDENCIES, PAIR_OFFSET};

// Input column indices.
const TEMPERATURE: usize = 1;
const REL_HUMIDITY: usize = 2;
const H2SO4: usize = 8;
const SO4: usize = 9;
const BC: usize = 13;
const OC: usize = 17;
const DU: usize = 21;
const NUM: usize = 25;

// Mode slots within the 7-vector of number concentrations.
const NS: usize = 0;
const KS: usize = 1;
const AS: usize = 2;
const CS: usize = 3;
const KI: usize = 4;
const AI: usize = 5;
const CI: usize = 6;

/// Coagulation transfers `(input column of donor mass, input column of receiver
/// mass, receiver mode)`, applied in this order.
const COAGULATION: [(usize, usize, usize); 12] = [
    (SO4, SO4 + 1, KS),     // so4 ns -> ks
    (SO4 + 1, SO4 + 2, AS), // so4 ks -> as
    (SO4 + 2, SO4 + 3, CS), // so4 as -> cs
    (BC + 3, BC, KS),       // bc ki -> ks
    (BC, BC + 1, AS),       // bc ks -> as
    (BC + 1, BC + 2, CS),   // bc as -> cs
    (OC + 3, OC, KS),       // oc ki -> ks
    (OC, OC + 1, AS),       // oc ks -> as
    (OC + 1, OC + 2, CS),   // oc as -> cs
    (DU + 2, DU, AS),       // du ai -> as
    (DU + 3, DU + 1, CS),   // du ci -> cs
    (DU, DU + 1, CS),       // du as -> cs
];

/// Receiver mode of each donor mode's first listed coagulation edge. The
/// coarse soluble mode never donates.
const FIRST_EDGE: [(usize, usize); 6] = [(NS, KS), (KS, AS), (AS, CS), (KI, KS), (AI, AS), (CI, CS)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRange {
    pub distribution: Distribution,
    pub lo: f64,
    pub hi: f64,
}

impl SamplingRange {
    pub const fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            distribution: Distribution::Uniform,
            lo,
            hi,
        }
    }

    /// Log-uniform over `decades` decades ending at `cap`.
    pub fn decades(cap: f64, decades: f64) -> Self {
        Self {
            distribution: Distribution::LogUniform,
            lo: cap * 10f64.powf(-decades),
            hi: cap,
        }
    }

    fn sample(&self, u: f64) -> f64 {
        match self.distribution {
            Distribution::Uniform => self.lo + (self.hi - self.lo) * u,
            Distribution::LogUniform => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * u).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub dt: f64,
    pub condensation_rate: f64,
    pub nucleation_rate: f64,
    pub nucleation_mass: f64,
    pub coagulation_rate: f64,
    pub self_coagulation_rate: f64,
    pub water_factor: f64,
    /// Surface-proxy weights of the soluble modes ns, ks, as, cs.
    pub surface_weights: [f64; 4],
    /// One range per input column.
    pub ranges: Vec<SamplingRange>,
}

/// Upper bounds of the log-uniform mass and number inputs (columns 8..32).
const DEFAULT_CAPS: [f64; 24] = [
    1.0, // h2so4
    0.1, 1.0, 10.0, 10.0, // so4 ns ks as cs
    0.1, 1.0, 1.0, 1.0, // bc ks as cs ki
    0.5, 5.0, 5.0, 5.0, // oc ks as cs ki
    10.0, 100.0, 10.0, 100.0, // du as cs ai ci
    1e4, 1e4, 1e3, 10.0, 1e3, 10.0, 1.0, // num ns ks as cs ki ai ci
];
const DEFAULT_DECADES: f64 = 4.0;

impl Default for GeneratorParams {
    fn default() -> Self {
        let mut ranges = vec![
            SamplingRange::uniform(5.0e3, 1.05e5),          // pressure
            SamplingRange::uniform(190.0, 310.0),           // temperature
            SamplingRange::uniform(0.0, 1.0),               // rel_humidity
            SamplingRange::uniform(0.0, 50.0),              // ionization_rate
            SamplingRange::uniform(0.0, 1.0),               // cloud_cover
            SamplingRange::uniform(0.0, 1.0),               // boundary_layer
            SamplingRange::uniform(0.0, 1.0),               // forest_fraction
            SamplingRange::decades(1.0e5, DEFAULT_DECADES), // h2so4_prod_rate
        ];
        ranges.extend(DEFAULT_CAPS.iter().map(|&c| SamplingRange::decades(c, DEFAULT_DECADES)));
        Self {
            dt: 450.0,
            condensation_rate: 1e-6,
            nucleation_rate: 1e-4,
            nucleation_mass: 1e-3,
            coagulation_rate: 1e-9,
            self_coagulation_rate: 1e-7,
            water_factor: 0.5,
            surface_weights: [0.01, 0.1, 1.0, 10.0],
            ranges,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("timestep must be positive, got {}", self.dt)));
        }
        let rates = [
            ("condensation_rate", self.condensation_rate),
            ("nucleation_rate", self.nucleation_rate),
            ("coagulation_rate", self.coagulation_rate),
            ("self_coagulation_rate", self.self_coagulation_rate),
            ("water_factor", self.water_factor),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.nucleation_mass > 0.0) {
            return Err(Error::Config("nucleation_mass must be positive".into()));
        }
        if self.surface_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("surface weights must be >= 0".into()));
        }
        if self.ranges.len() != N_INPUTS {
            return Err(Error::Config(format!(
                "expected {N_INPUTS} sampling ranges, got {}",
                self.ranges.len()
            )));
        }
        for (r, name) in self.ranges.iter().zip(INPUT_NAMES) {
            if !(r.lo < r.hi) {
                return Err(Error::Config(format!(
                    "degenerate sampling range for {name}: [{}, {}]",
                    r.lo, r.hi
                )));
            }
            if r.lo < 0.0 || (r.distribution == Distribution::LogUniform && r.lo <= 0.0) {
                return Err(Error::Config(format!(
                    "sampling range for {name} must be positive, got [{}, {}]",
                    r.lo, r.hi
                )));
            }
        }
        Ok(())
    }
}

/// The 32 input variables of one grid box in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxState(pub [f64; N_INPUTS]);

impl BoxState {
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_INPUTS] = v.try_into().map_err(|_| Error::shape(N_INPUTS, v.len()))?;
        Ok(Self(arr))
    }

    pub fn temperature(&self) -> f64 {
        self.0[TEMPERATURE]
    }

    pub fn rel_humidity(&self) -> f64 {
        self.0[REL_HUMIDITY]
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.0;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{} is not finite", INPUT_NAMES[i])));
        }
        if !(190.0..=310.0).contains(&v[TEMPERATURE]) {
            return Err(Error::Config(format!(
                "temperature {} K outside [190, 310]",
                v[TEMPERATURE]
            )));
        }
        for i in [REL_HUMIDITY, 4, 5, 6] {
            if !(0.0..=1.0).contains(&v[i]) {
                return Err(Error::Config(format!("{} = {} outside [0, 1]", INPUT_NAMES[i], v[i])));
            }
        }
        if let Some(i) = (0..N_INPUTS).find(|&i| v[i] < 0.0) {
            return Err(Error::Config(format!("{} is negative", INPUT_NAMES[i])));
        }
        Ok(())
    }
}

/// Draws one box state; each field independently from its configured range.
pub fn sample_state<R: RngCore>(rng: &mut R, params: &GeneratorParams) -> Result<BoxState> {
    params.validate()?;
    Ok(sample_unchecked(rng, params))
}

fn sample_unchecked<R: RngCore>(rng: &mut R, params: &GeneratorParams) -> BoxState {
    let mut s = [0.0; N_INPUTS];
    for (x, range) in s.iter_mut().zip(&params.ranges) {
        *x = range.sample(rng::uniform01(rng)).clamp(range.lo, range.hi);
    }
    BoxState(s)
}

/// `1 - exp(-x)` for `x >= 0`.
#[inline]
fn transfer_fraction(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Advances one box by one timestep.
///
/// Returns 24 tendencies (post minus pre) followed by the 4 water contents
/// as full values.
pub fn step(state: &BoxState, p: &GeneratorParams) -> [f64; N_OUTPUTS] {
    let pre = &state.0;
    let mut x = *pre;
    let r = pre[REL_HUMIDITY];
    let dt = p.dt;

    // Condensation of the gas onto the soluble modes.
    let g = pre[H2SO4];
    let weighted: [f64; 4] = std::array::from_fn(|k| p.surface_weights[k] * x[NUM + k]);
    let area: f64 = weighted.iter().sum();
    let condensed = if area > 0.0 {
        let cond = transfer_fraction(p.condensation_rate * area * dt) * g;
        for k in 0..4 {
            x[SO4 + k] += cond * weighted[k] / area;
        }
        cond
    } else {
        0.0
    };
    let remaining = g - condensed;

    // Nucleation into the soluble nucleation mode.
    let nucleated = remaining.min(p.nucleation_rate * g * g * r * dt);
    x[H2SO4] = remaining - nucleated;
    x[SO4] += nucleated;
    x[NUM + NS] += nucleated / p.nucleation_mass;

    // Coagulation. Transfer fractions depend on receiver numbers taken after
    // nucleation; masses move sequentially, numbers decrement afterwards.
    let theta = (pre[TEMPERATURE] - 190.0) / 120.0;
    let numbers: [f64; 7] = std::array::from_fn(|m| x[NUM + m]);
    let psi = |receiver: usize| transfer_fraction(p.coagulation_rate * (1.0 + theta) * numbers[receiver] * dt);
    for &(donor, receiver, mode) in &COAGULATION {
        let moved = x[donor] * psi(mode);
        x[donor] -= moved;
        x[receiver] += moved;
    }
    for &(donor, receiver) in &FIRST_EDGE {
        x[NUM + donor] -= numbers[donor] * psi(receiver);
    }

    // Self-coagulation.
    for m in 0..7 {
        let n = x[NUM + m];
        let k = p.self_coagulation_rate * dt;
        x[NUM + m] = n - k * n * n / (1.0 + k * n);
    }

    let mut out = [0.0; N_OUTPUTS];
    for k in 0..N_TENDENCIES {
        out[k] = x[k + PAIR_OFFSET] - pre[k + PAIR_OFFSET];
    }

    // Water uptake on the post-step soluble mass of each soluble mode.
    let w = p.water_factor * r * r;
    out[24] = w * x[SO4];
    out[25] = w * (x[SO4 + 1] + x[BC] + x[OC]);
    out[26] = w * (x[SO4 + 2] + x[BC + 1] + x[OC + 1] + x[DU]);
    out[27] = w * (x[SO4 + 3] + x[BC + 2] + x[OC + 2] + x[DU + 1]);
    out
}

/// Samples `n` states and steps each one. Row `i` is drawn from its own
/// stream derived from `(seed, i)`, so the result does not depend on how rows
/// are distributed over worker threads.
pub fn generate_dataset(n: usize, seed: u64, params: &GeneratorParams) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("requested a dataset with 0 rows".into()));
    }
    params.validate()?;
    let mut inputs = vec![0.0; n * N_INPUTS];
    let mut outputs = vec![0.0; n * N_OUTPUTS];
    inputs
        .par_chunks_mut(N_INPUTS)
        .zip(outputs.par_chunks_mut(N_OUTPUTS))
        .enumerate()
        .for_each(|(i, (xin, yout))| {
            let mut rng = rng::row_stream(seed, i as u64);
            let s = sample_unchecked(&mut rng, params);
            xin.copy_from_slice(&s.0);
            yout.copy_from_slice(&step(&s, params));
        });
    Dataset::new(
        Matrix::from_vec(n, N_INPUTS, inputs)?,
        Matrix::from_vec(n, N_OUTPUTS, outputs)?,
        DatasetMeta::generated(seed, params.clone()),
    )
}

/// Outcome of scanning a dataset for conservation and positivity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicsCheck {
    pub rows: usize,
    /// Largest `|Σ_{i∈I_s} y_i| / mean_s` per species.
    pub max_relative_violation: [f64; 4],
    /// Count of reconstructed full values below zero.
    pub negative_values: usize,
}

impl PhysicsCheck {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.negative_values == 0 && self.max_relative_violation.iter().all(|v| *v <= Self::TOLERANCE)
    }
}

/// Checks species conservation against the dataset mean of total species mass
/// and non-negativity of all reconstructed full values.
pub fn check_physics(data: &Dataset) -> Result<PhysicsCheck> {
    let n = data.len();
    let x = data.inputs();
    let y = data.outputs();
    let mut check = PhysicsCheck {
        rows: n,
        max_relative_violation: [0.0; 4],
        negative_values: 0,
    };
    for s in Species::ALL {
        let idx = s.output_indices();
        let mean: f64 = x
            .iter_rows()
            .map(|r| idx.iter().map(|&k| r[k + PAIR_OFFSET]).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        if !(mean > 0.0) {
            return Err(Error::Normalization(format!("species {s} has zero mean mass")));
        }
        let worst = y
            .iter_rows()
            .map(|r| idx.iter().map(|&k| r[k]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        check.max_relative_violation[s.index()] = worst / mean;
    }
    for (xr, yr) in x.iter_rows().zip(y.iter_rows()) {
        for k in 0..N_OUTPUTS {
            let full = if k < N_TENDENCIES {
                xr[k + PAIR_OFFSET] + yr[k]
            } else {
                yr[k]
            };
            if full < 0.0 {
                check.negative_values += 1;
            }
        }
    }
    Ok(check)
}
