use nalgebra::DMatrix;
use serde::Serialize;

use super::assignment::min_cost_assignment;
use crate::{Error, Result, EPS_VAR};

/// Pearson correlations between the columns of two sample matrices.
/// Entries involving a (numerically) constant column are masked and stored
/// as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    c: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl CorrelationMatrix {
    /// Wraps a matrix of correlations directly, with nothing masked.
    pub fn from_matrix(c: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(c.nrows(), c.ncols(), false);
        CorrelationMatrix { c, mask }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

struct ColumnStats {
    mean: f64,
    sd: f64,
    degenerate: bool,
}

fn column_stats(x: &DMatrix<f64>) -> Vec<ColumnStats> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let mean = c.mean();
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let mean_sq = c.iter().map(|v| v * v).sum::<f64>() / n;
            ColumnStats {
                mean,
                sd: var.sqrt(),
                degenerate: var <= EPS_VAR * mean_sq || var == 0.0,
            }
        })
        .collect()
}

/// Pearson matrix: entry `(i, j)` correlates column `i` of `x` with column
/// `j` of `y`.
pub fn pearson(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<CorrelationMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "sample rows",
            expected: n,
            found: y.nrows(),
        });
    }
    let sx = column_stats(x);
    let sy = column_stats(y);
    let mut c = DMatrix::zeros(x.ncols(), y.ncols());
    let mut mask = DMatrix::from_element(x.ncols(), y.ncols(), false);
    for (i, a) in sx.iter().enumerate() {
        for (j, b) in sy.iter().enumerate() {
            if a.degenerate || b.degenerate {
                mask[(i, j)] = true;
                continue;
            }
            let cov = x
                .column(i)
                .iter()
                .zip(y.column(j).iter())
                .map(|(p, q)| (p - a.mean) * (q - b.mean))
                .sum::<f64>()
                / n as f64;
            c[(i, j)] = cov / (a.sd * b.sd);
        }
    }
    Ok(CorrelationMatrix { c, mask })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MccResult {
    pub score: f64,
    /// `permutation[j]` is the learned dimension matched to latent `j`.
    pub permutation: Vec<usize>,
    /// `|C[j][permutation[j]]|` for every latent `j`.
    pub pairs: Vec<f64>,
}

/// Mean absolute correlation under the best one-to-one matching of rows
/// (ground truth) to columns (learned), found by exact assignment.
pub fn mcc(c: &CorrelationMatrix) -> Result<MccResult> {
    let abs = c.c.map(f64::abs);
    let permutation = min_cost_assignment(&(-&abs))?;
    let pairs: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(j, &k)| abs[(j, k)])
        .collect();
    let d = pairs.len();
    let score = if d == 0 {
        0.0
    } else {
        pairs.iter().sum::<f64>() / d as f64
    };
    Ok(MccResult {
        score,
        permutation,
        pairs,
    })
}
