//! Fully connected network with batched forward and reverse-mode backward.
//!
//! All parameters live in one flat `Vec<f64>`: for each layer the weight
//! matrix (`fan_in × fan_out`, row-major) followed by the bias vector. The
//! optimizer and gradient reductions work on that flat layout directly.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{gemm, gemm_nt, gemm_tn, sgemm, Matrix};
use crate::rng::{self, Purpose};

pub const LEAKY_SLOPE: f64 = 0.01;
/// Rows per shard for parallel inference.
pub const INFERENCE_SHARD_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    #[inline]
    fn apply_f32(self, z: f32) -> f32 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE as f32 * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if a > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward_tape`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `layers[0]` is the input; `layers[l]` the output of layer `l`.
    layers: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("tape has at least the input")
    }
}

fn layer_offsets(arch: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(arch.len());
    let mut off = 0;
    for w in arch.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    offsets.push(off);
    offsets
}

fn check_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 {
        return Err(Error::Config(format!(
            "architecture needs at least input and output widths, got {arch:?}"
        )));
    }
    if arch.contains(&0) {
        return Err(Error::Config(format!("layer width 0 in {arch:?}")));
    }
    Ok(())
}

impl Mlp {
    /// He-scaled normal weights (variance `2 / fan_in`) and zero biases.
    pub fn init(arch: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_arch(arch)?;
        let offsets = layer_offsets(arch);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let mut rng = rng::stream(seed, Purpose::Init, 0);
        for (l, w) in arch.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
            for p in &mut params[offsets[l]..offsets[l] + fan_in * fan_out] {
                *p = normal.sample(&mut rng);
            }
        }
        Ok(Self {
            arch: arch.to_vec(),
            activation,
            params,
            offsets,
        })
    }

    pub fn from_params(arch: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        check_arch(arch)?;
        let offsets = layer_offsets(arch);
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::shape(*offsets.last().unwrap(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite network parameter".into()));
        }
        Ok(Self {
            arch: arch.to_vec(),
            activation,
            params,
            offsets,
        })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.arch.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.arch[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.arch.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix (`fan_in × fan_out`, row-major) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.arch[l], self.arch[l + 1]);
        let w_end = self.offsets[l] + fan_in * fan_out;
        (
            &self.params[self.offsets[l]..w_end],
            &self.params[w_end..w_end + fan_out],
        )
    }

    fn layer_forward(&self, l: usize, a: &Matrix) -> Matrix {
        let (fan_in, fan_out) = (self.arch[l], self.arch[l + 1]);
        let (w, b) = self.layer(l);
        let n = a.rows();
        let mut z = Matrix::zeros(n, fan_out);
        gemm(n, fan_in, fan_out, a.as_slice(), w, 0.0, z.as_mut_slice());
        let hidden = l + 1 < self.n_layers();
        for row in z.as_mut_slice().chunks_exact_mut(fan_out) {
            for (v, bias) in row.iter_mut().zip(b) {
                *v += bias;
                if hidden {
                    *v = self.activation.apply(*v);
                }
            }
        }
        z
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_cols(self.input_dim())?;
        let mut a = self.layer_forward(0, x);
        for l in 1..self.n_layers() {
            a = self.layer_forward(l, &a);
        }
        Ok(a)
    }

    /// Forward over fixed-size row shards on the rayon pool. Rows are
    /// independent, so the result equals [`Mlp::forward`].
    pub fn forward_par(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_cols(self.input_dim())?;
        let d_in = self.input_dim();
        let d_out = self.output_dim();
        let mut out = vec![0.0; x.rows() * d_out];
        x.as_slice()
            .par_chunks(INFERENCE_SHARD_ROWS * d_in)
            .zip(out.par_chunks_mut(INFERENCE_SHARD_ROWS * d_out))
            .for_each(|(xs, ys)| {
                let shard = Matrix::from_vec(xs.len() / d_in, d_in, xs.to_vec()).expect("shard");
                let y = self.forward(&shard).expect("shard width checked");
                ys.copy_from_slice(y.as_slice());
            });
        Matrix::from_vec(x.rows(), d_out, out)
    }

    pub fn forward_tape(&self, x: &Matrix) -> Result<Tape> {
        x.ensure_cols(self.input_dim())?;
        let mut layers = Vec::with_capacity(self.arch.len());
        layers.push(x.clone());
        for l in 0..self.n_layers() {
            let next = self.layer_forward(l, &layers[l]);
            layers.push(next);
        }
        Ok(Tape { layers })
    }

    /// Gradients of `Σ grad_out ⊙ forward(x)` with respect to the flat
    /// parameters and to the input.
    pub fn backward_tape(&self, tape: &Tape, grad_out: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let n = tape.layers[0].rows();
        grad_out.ensure_shape(n, self.output_dim())?;
        let mut grads = vec![0.0; self.params.len()];
        let mut dz = grad_out.clone();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.arch[l], self.arch[l + 1]);
            let a_prev = &tape.layers[l];
            let w_off = self.offsets[l];
            let b_off = w_off + fan_in * fan_out;
            {
                let (gw, gb) = grads[w_off..b_off + fan_out].split_at_mut(fan_in * fan_out);
                gemm_tn(fan_in, n, fan_out, a_prev.as_slice(), dz.as_slice(), 0.0, gw);
                for row in dz.as_slice().chunks_exact(fan_out) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            let (w, _) = self.layer(l);
            let mut da = Matrix::zeros(n, fan_in);
            gemm_nt(n, fan_out, fan_in, dz.as_slice(), w, 0.0, da.as_mut_slice());
            if l > 0 {
                for (d, a) in da.as_mut_slice().iter_mut().zip(a_prev.as_slice()) {
                    *d *= self.activation.derivative_from_output(*a);
                }
            }
            dz = da;
        }
        Ok((grads, dz))
    }

    /// Runs forward internally, then [`Mlp::backward_tape`].
    pub fn backward(&self, x: &Matrix, grad_out: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let tape = self.forward_tape(x)?;
        self.backward_tape(&tape, grad_out)
    }

    pub fn to_f32(&self) -> MlpF32 {
        MlpF32 {
            arch: self.arch.clone(),
            activation: self.activation,
            params: self.params.iter().map(|p| *p as f32).collect(),
            offsets: self.offsets.clone(),
        }
    }
}

/// Single-precision copy of a network, for the inference benchmark only.
#[derive(Debug, Clone)]
pub struct MlpF32 {
    arch: Vec<usize>,
    activation: Activation,
    params: Vec<f32>,
    offsets: Vec<usize>,
}

impl MlpF32 {
    /// Forward over a row-major `n × input_dim` buffer.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let n = x.len() / self.arch[0];
        let n_layers = self.arch.len() - 1;
        let mut a = x.to_vec();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.arch[l], self.arch[l + 1]);
            let w_end = self.offsets[l] + fan_in * fan_out;
            let w = &self.params[self.offsets[l]..w_end];
            let b = &self.params[w_end..w_end + fan_out];
            let mut z = vec![0.0f32; n * fan_out];
            sgemm(n, fan_in, fan_out, &a, w, &mut z);
            let hidden = l + 1 < n_layers;
            for row in z.chunks_exact_mut(fan_out) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if hidden {
                        *v = self.activation.apply_f32(*v);
                    }
                }
            }
            a = z;
        }
        a
    }

    pub fn forward_par(&self, x: &[f32]) -> Vec<f32> {
        let d_in = self.arch[0];
        let d_out = *self.arch.last().unwrap();
        let mut out = vec![0.0f32; x.len() / d_in * d_out];
        x.par_chunks(INFERENCE_SHARD_ROWS * d_in)
            .zip(out.par_chunks_mut(INFERENCE_SHARD_ROWS * d_out))
            .for_each(|(xs, ys)| ys.copy_from_slice(&self.forward(xs)));
        out
    }
}
