//! FastICA baseline: PCA whitening followed by the symmetric fixed-point
//! iteration with the `log cosh` contrast.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    /// Column means of the training data (length `m`).
    pub mean: Vec<f64>,
    /// `m × d`: centered data times this has identity covariance.
    pub whitening: DMatrix<f64>,
    /// `d × d` orthogonal rotation applied after whitening.
    pub rotation: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    /// Composite `m × d` unmixing `K R`.
    pub fn unmixing(&self) -> DMatrix<f64> {
        &self.whitening * &self.rotation
    }

    /// Recovered sources `(X - mean) K R`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "observation columns",
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        Ok(center(x, &self.mean) * self.unmixing())
    }
}

fn center(x: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mu) in mean.iter().enumerate() {
        c.column_mut(j).add_scalar_mut(-mu);
    }
    c
}

/// `W ← (W Wᵀ)^{-1/2} W`.
fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose() * w
}

/// Fits `d` independent components to the rows of `x` (`n × m`, `m ≥ d`).
pub fn fit_fastica(
    x: &DMatrix<f64>,
    d: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<IcaModel> {
    let (n, m) = x.shape();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if d == 0 || d > m {
        return Err(Error::InvalidArgument(format!(
            "cannot extract {d} components from {m} columns"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ICA input".into()));
    }
    let mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let xc = center(x, &mean);
    let cov = xc.transpose() * &xc / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let largest = eig.eigenvalues[order[0]];
    let mut whitening = DMatrix::zeros(m, d);
    for (k, &idx) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if !(lambda > RANK_TOL * largest) {
            return Err(Error::RankDeficient {
                component: k,
                eigenvalue: lambda,
            });
        }
        whitening.set_column(k, &(eig.eigenvectors.column(idx) / lambda.sqrt()));
    }
    let xw = &xc * &whitening;

    let mut rng = seed::rng(seed, &[seed::TAG_ICA]);
    let mut w = symmetric_decorrelation(&DMatrix::from_fn(d, d, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }));
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = (&xw * w.transpose()).map(f64::tanh);
        let g_prime_mean: Vec<f64> = g
            .column_iter()
            .map(|c| c.iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64)
            .collect();
        let mut w_new = g.transpose() * &xw / n as f64;
        for (i, gp) in g_prime_mean.iter().enumerate() {
            let row = w.row(i) * *gp;
            let mut r = w_new.row_mut(i);
            r -= row;
        }
        let w_new = symmetric_decorrelation(&w_new);
        let change = (&w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|c| (c.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w_new;
        if change < tol {
            converged = true;
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ICA rotation".into()));
    }
    Ok(IcaModel {
        mean,
        whitening,
        rotation: w.transpose(),
        converged,
        iterations,
    })
}
