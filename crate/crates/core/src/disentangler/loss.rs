//! The variance-sparsity objective and its gradient.
//!
//! Every term is a function of the variance matrix `V` (environments ×
//! learned dimensions), except the norm term which acts on `L̂` directly:
//!
//! ```text
//! L_var  =  Σ_ij σ(V_ij)
//! L_e    = -Σ_i σ(Σ_j V_ij)
//! L_m    = -Σ_j σ(Σ_i V_ij)
//! L_diag =  Σ_k ‖diag_k(V)‖₂          (wrap-around diagonals)
//! L_norm = (‖L̂‖_F - a)²
//! ```
//!
//! With `S_e` the (biased) covariance of environment `e`'s batch, `V_ej =
//! l_jᵀ S_e l_j` for column `l_j` of `L̂`, so `∂V_ej/∂l_j = 2 S_e l_j`.

use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossWeights, UnmixingModel, VarianceMatrix};
use crate::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Per-environment batch covariances in observation space.
#[derive(Debug, Clone)]
pub struct EnvCovariances {
    covs: Vec<DMatrix<f64>>,
}

/// Biased covariance (divide by `n`) of the rows of `x`.
pub fn covariance(x: &DMatrixView<'_, f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let mean = x.row_mean();
    let mut centered = x.clone_owned();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.tr_mul(&centered) / n as f64)
}

impl EnvCovariances {
    /// Covariances are computed in parallel; results keep environment order.
    pub fn from_batches(batches: &[DMatrixView<'_, f64>]) -> Result<Self> {
        if let Some(first) = batches.first() {
            let m = first.ncols();
            if let Some(b) = batches.iter().find(|b| b.ncols() != m) {
                return Err(Error::DimensionMismatch {
                    what: "batch columns",
                    expected: m,
                    found: b.ncols(),
                });
            }
        }
        let covs = batches
            .par_iter()
            .map(covariance)
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvCovariances { covs })
    }

    pub fn from_matrices(batches: &[DMatrix<f64>]) -> Result<Self> {
        let views: Vec<_> = batches.iter().map(|b| b.as_view()).collect();
        Self::from_batches(&views)
    }

    pub fn num_envs(&self) -> usize {
        self.covs.len()
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covs
    }

    fn check_model(&self, lhat: &DMatrix<f64>) -> Result<()> {
        if let Some(c) = self.covs.first() {
            if c.nrows() != lhat.nrows() {
                return Err(Error::DimensionMismatch {
                    what: "unmixing rows",
                    expected: c.nrows(),
                    found: lhat.nrows(),
                });
            }
        }
        Ok(())
    }

    /// `S_e L̂` for every environment.
    fn projected(&self, lhat: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.covs.iter().map(|s| s * lhat).collect()
    }

    fn variance_from_projected(lhat: &DMatrix<f64>, projected: &[DMatrix<f64>]) -> DMatrix<f64> {
        let d = lhat.ncols();
        DMatrix::from_fn(projected.len(), d, |e, j| {
            lhat.column(j).dot(&projected[e].column(j)).max(0.0)
        })
    }

    pub fn variance_matrix(&self, lhat: &DMatrix<f64>) -> Result<VarianceMatrix> {
        self.check_model(lhat)?;
        let v = Self::variance_from_projected(lhat, &self.projected(lhat));
        Ok(VarianceMatrix::from_matrix_unchecked(v))
    }

    pub fn loss(&self, lhat: &DMatrix<f64>, weights: &LossWeights) -> Result<LossBreakdown> {
        let v = self.variance_matrix(lhat)?;
        let breakdown = LossBreakdown::evaluate(&v, lhat, weights);
        breakdown.check_finite()?;
        Ok(breakdown)
    }

    /// Loss breakdown and the exact gradient with respect to `L̂`.
    pub fn loss_and_gradient(
        &self,
        lhat: &DMatrix<f64>,
        weights: &LossWeights,
    ) -> Result<(LossBreakdown, DMatrix<f64>)> {
        self.check_model(lhat)?;
        let projected = self.projected(lhat);
        let v = Self::variance_from_projected(lhat, &projected);
        let breakdown = LossBreakdown::evaluate(&v, lhat, weights);
        breakdown.check_finite()?;

        let gv = weighted_variance_gradient(&v, weights);
        let mut grad = grad_loss_norm(lhat, weights.norm_target) * weights.lambda_norm;
        for (e, sl) in projected.iter().enumerate() {
            for j in 0..lhat.ncols() {
                let scale = 2.0 * gv[(e, j)];
                if scale != 0.0 {
                    grad.column_mut(j).axpy(scale, &sl.column(j), 1.0);
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((breakdown, grad))
    }
}

/// Unweighted values of the five terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub var: f64,
    pub env: f64,
    pub dim: f64,
    pub diag: f64,
    pub norm: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn evaluate(v: &DMatrix<f64>, lhat: &DMatrix<f64>, w: &LossWeights) -> Self {
        let var = loss_var(v);
        let env = loss_env(v);
        let dim = loss_dim(v);
        let diag = loss_diag(v);
        let norm = loss_norm(lhat, w.norm_target);
        let total =
            var + w.lambda_e * env + w.lambda_m * dim + w.lambda_diag * diag + w.lambda_norm * norm;
        LossBreakdown {
            var,
            env,
            dim,
            diag,
            norm,
            total,
        }
    }

    fn check_finite(&self) -> Result<()> {
        if [self.var, self.env, self.dim, self.diag, self.norm, self.total]
            .iter()
            .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::NonFinite("loss".into()))
        }
    }
}

pub fn loss_var(v: &DMatrix<f64>) -> f64 {
    v.iter().map(|&x| sigmoid(x)).sum()
}

pub fn loss_env(v: &DMatrix<f64>) -> f64 {
    -v.row_iter().map(|r| sigmoid(r.sum())).sum::<f64>()
}

pub fn loss_dim(v: &DMatrix<f64>) -> f64 {
    -v.column_iter().map(|c| sigmoid(c.sum())).sum::<f64>()
}

/// Index of the wrap-around diagonal holding entry `(i, j)` of a matrix with
/// `d` columns; 0 is the main diagonal. Rows beyond `d` cycle.
pub fn diagonal_index(i: usize, j: usize, d: usize) -> usize {
    (j + d - i % d) % d
}

/// The wrap-around diagonal at `offset` (0 = main) of a square matrix:
/// `[a(0, offset), a(1, offset + 1), ...]` with column indices taken mod `d`.
pub fn wrap_diagonal(a: &DMatrix<f64>, offset: usize) -> Result<Vec<f64>> {
    let d = a.ncols();
    if a.nrows() != d {
        return Err(Error::DimensionMismatch {
            what: "rows of square matrix",
            expected: d,
            found: a.nrows(),
        });
    }
    if offset >= d {
        return Err(Error::InvalidArgument(format!(
            "diagonal offset {offset} out of range for {d} x {d}"
        )));
    }
    Ok((0..d).map(|i| a[(i, (i + offset) % d)]).collect())
}

/// Squared Euclidean norm of every wrap-around diagonal. Works for any number
/// of rows.
fn diagonal_sq_norms(v: &DMatrix<f64>) -> Vec<f64> {
    let d = v.ncols();
    let mut sq = vec![0.0; d];
    for i in 0..v.nrows() {
        for j in 0..d {
            sq[diagonal_index(i, j, d)] += v[(i, j)] * v[(i, j)];
        }
    }
    sq
}

pub fn loss_diag(v: &DMatrix<f64>) -> f64 {
    diagonal_sq_norms(v).iter().map(|s| s.sqrt()).sum()
}

pub fn loss_norm(lhat: &DMatrix<f64>, target: f64) -> f64 {
    (lhat.norm() - target).powi(2)
}

pub fn grad_loss_var(v: &DMatrix<f64>) -> DMatrix<f64> {
    v.map(sigmoid_prime)
}

pub fn grad_loss_env(v: &DMatrix<f64>) -> DMatrix<f64> {
    let rows: Vec<f64> = v.row_iter().map(|r| -sigmoid_prime(r.sum())).collect();
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, _| rows[i])
}

pub fn grad_loss_dim(v: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<f64> = v.column_iter().map(|c| -sigmoid_prime(c.sum())).collect();
    DMatrix::from_fn(v.nrows(), v.ncols(), |_, j| cols[j])
}

/// Subgradient 0 on diagonals that are exactly zero.
pub fn grad_loss_diag(v: &DMatrix<f64>) -> DMatrix<f64> {
    let d = v.ncols();
    let norms: Vec<f64> = diagonal_sq_norms(v).iter().map(|s| s.sqrt()).collect();
    DMatrix::from_fn(v.nrows(), d, |i, j| {
        let n = norms[diagonal_index(i, j, d)];
        if n > 0.0 {
            v[(i, j)] / n
        } else {
            0.0
        }
    })
}

/// Gradient of `(‖L̂‖_F - a)²`; 0 at `L̂ = 0`.
pub fn grad_loss_norm(lhat: &DMatrix<f64>, target: f64) -> DMatrix<f64> {
    let n = lhat.norm();
    if n > 0.0 {
        lhat * (2.0 * (n - target) / n)
    } else {
        DMatrix::zeros(lhat.nrows(), lhat.ncols())
    }
}

/// `∂(total)/∂V` for the four V-dependent terms.
pub fn weighted_variance_gradient(v: &DMatrix<f64>, w: &LossWeights) -> DMatrix<f64> {
    let mut g = grad_loss_var(v);
    if w.lambda_e != 0.0 {
        g += grad_loss_env(v) * w.lambda_e;
    }
    if w.lambda_m != 0.0 {
        g += grad_loss_dim(v) * w.lambda_m;
    }
    if w.lambda_diag != 0.0 {
        g += grad_loss_diag(v) * w.lambda_diag;
    }
    g
}

/// `V_ij` = biased variance of column `j` of `batch_i · L̂`.
pub fn variance_matrix(batches: &[DMatrix<f64>], model: &UnmixingModel) -> Result<VarianceMatrix> {
    EnvCovariances::from_matrices(batches)?.variance_matrix(model.lhat())
}

pub fn total_loss(
    batches: &[DMatrix<f64>],
    model: &UnmixingModel,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    EnvCovariances::from_matrices(batches)?.loss(model.lhat(), weights)
}

pub fn gradient(
    batches: &[DMatrix<f64>],
    model: &UnmixingModel,
    weights: &LossWeights,
) -> Result<DMatrix<f64>> {
    Ok(EnvCovariances::from_matrices(batches)?
        .loss_and_gradient(model.lhat(), weights)?
        .1)
}
