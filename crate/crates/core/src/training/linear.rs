//! Affine least-squares baseline.
//!
//! All 28 outputs share one design matrix `[1, x_std]`, so the fitted
//! coefficients of a species sum to the coefficients fitted to the species'
//! summed target. When the targets conserve mass exactly that sum is zero and
//! the predictions conserve mass up to rounding.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schema::{N_INPUTS, N_OUTPUTS};
use crate::transforms::NormStats;

pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    /// `(1 + 32) × 28`, row-major; row 0 is the intercept.
    coef: Matrix,
    stats: NormStats,
}

impl LinearBaseline {
    pub fn coefficients(&self) -> &Matrix {
        &self.coef
    }

    /// Physical-unit predictions for physical inputs.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let z = design(&self.stats.standardize_x(x)?);
        let mut out = Matrix::zeros(x.rows(), N_OUTPUTS);
        crate::matrix::gemm(
            x.rows(),
            N_INPUTS + 1,
            N_OUTPUTS,
            z.as_slice(),
            self.coef.as_slice(),
            0.0,
            out.as_mut_slice(),
        );
        Ok(out)
    }
}

fn design(x_std: &Matrix) -> Matrix {
    let mut z = Matrix::zeros(x_std.rows(), N_INPUTS + 1);
    for (i, r) in x_std.iter_rows().enumerate() {
        let row = z.row_mut(i);
        row[0] = 1.0;
        row[1..].copy_from_slice(r);
    }
    z
}

/// Solves `(ZᵀZ + ridge·I) B = ZᵀY` for physical-unit targets `Y`.
pub fn fit_linear_baseline(train: &Dataset, stats: &NormStats) -> Result<LinearBaseline> {
    let n = train.len();
    if n == 0 {
        return Err(Error::Empty("training set has no rows".into()));
    }
    let d = N_INPUTS + 1;
    let z = design(&stats.standardize_x(train.inputs())?);
    let mut gram = vec![0.0; d * d];
    crate::matrix::gemm_tn(d, n, d, z.as_slice(), z.as_slice(), 0.0, &mut gram);
    let mut rhs = vec![0.0; d * N_OUTPUTS];
    crate::matrix::gemm_tn(d, n, N_OUTPUTS, z.as_slice(), train.outputs().as_slice(), 0.0, &mut rhs);

    let mut a = DMatrix::from_row_slice(d, d, &gram);
    for i in 0..d {
        a[(i, i)] += RIDGE;
    }
    let chol: Cholesky<f64, Dyn> = a
        .cholesky()
        .ok_or_else(|| Error::Linalg("normal matrix is not positive definite".into()))?;
    let b = chol.solve(&DMatrix::from_row_slice(d, N_OUTPUTS, &rhs));
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linalg("least-squares solution is not finite".into()));
    }
    let mut coef = Matrix::zeros(d, N_OUTPUTS);
    for i in 0..d {
        for k in 0..N_OUTPUTS {
            coef.set(i, k, b[(i, k)]);
        }
    }
    Ok(LinearBaseline {
        coef,
        stats: stats.clone(),
    })
}
