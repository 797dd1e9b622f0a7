//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use crl_core::disentangler::{gradient, LossWeights, UnmixingModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Biased variance of every projected column, computed sample by sample.
pub fn projected_variances(batches: &[DMatrix<f64>], lhat: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(batches.len(), lhat.ncols(), |e, j| {
        let proj: Vec<f64> = batches[e]
            .row_iter()
            .map(|r| (0..lhat.nrows()).map(|k| r[k] * lhat[(k, j)]).sum())
            .collect();
        let n = proj.len() as f64;
        let mean = proj.iter().sum::<f64>() / n;
        proj.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
    })
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Var,
    Env,
    Dim,
    Diag,
    Norm,
    Total,
}

pub const TERMS: [Term; 6] = [Term::Var, Term::Env, Term::Dim, Term::Diag, Term::Norm, Term::Total];

/// Reference value of one term, straight from the definitions.
pub fn reference_term(term: Term, batches: &[DMatrix<f64>], lhat: &DMatrix<f64>, w: &LossWeights) -> f64 {
    let v = projected_variances(batches, lhat);
    let (e, d) = v.shape();
    let var: f64 = v.iter().map(|&x| sig(x)).sum();
    let env: f64 = -(0..e).map(|i| sig((0..d).map(|j| v[(i, j)]).sum())).sum::<f64>();
    let dim: f64 = -(0..d).map(|j| sig((0..e).map(|i| v[(i, j)]).sum())).sum::<f64>();
    // k-th wrap-around diagonal: entries (i, (i + k) mod d) for every row i.
    let diag: f64 = (0..d)
        .map(|k| (0..e).map(|i| v[(i, (i + k) % d)].powi(2)).sum::<f64>().sqrt())
        .sum();
    let fro = lhat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm = (fro - w.norm_target).powi(2);
    match term {
        Term::Var => var,
        Term::Env => env,
        Term::Dim => dim,
        Term::Diag => diag,
        Term::Norm => norm,
        Term::Total => {
            var + w.lambda_e * env + w.lambda_m * dim + w.lambda_diag * diag + w.lambda_norm * norm
        }
    }
}

fn only(lambda_e: f64, lambda_m: f64, lambda_diag: f64, lambda_norm: f64, base: &LossWeights) -> LossWeights {
    LossWeights {
        lambda_e,
        lambda_m,
        lambda_diag,
        lambda_norm,
        norm_target: base.norm_target,
    }
}

/// Library gradient of a single term. The total is linear in the weights
/// and always contains `L_var`, so every other term is isolated as a
/// difference against the var-only objective.
pub fn library_term_gradient(
    term: Term,
    batches: &[DMatrix<f64>],
    lhat: &DMatrix<f64>,
    w: &LossWeights,
) -> DMatrix<f64> {
    let model = UnmixingModel::from_matrix(lhat.clone(), 0);
    let g = |weights: LossWeights| gradient(batches, &model, &weights).unwrap();
    let var_only = g(only(0.0, 0.0, 0.0, 0.0, w));
    match term {
        Term::Var => var_only,
        Term::Env => g(only(1.0, 0.0, 0.0, 0.0, w)) - var_only,
        Term::Dim => g(only(0.0, 1.0, 0.0, 0.0, w)) - var_only,
        Term::Diag => g(only(0.0, 0.0, 1.0, 0.0, w)) - var_only,
        Term::Norm => g(only(0.0, 0.0, 0.0, 1.0, w)) - var_only,
        Term::Total => g(*w),
    }
}

pub fn central_difference<F: Fn(&DMatrix<f64>) -> f64>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut probe = x.clone();
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe);
        probe[k] = orig - h;
        let down = f(&probe);
        probe[k] = orig;
        out[k] = (up - down) / (2.0 * h);
    }
    out
}

/// Norm-wise relative error `‖a - b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let floor = 1e-8;
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

/// Random gradient-check instance: `e` environments of `n × m` data (with
/// random per-environment scales) and an `m × d` model.
pub struct Instance {
    pub batches: Vec<DMatrix<f64>>,
    pub lhat: DMatrix<f64>,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let d = r.random_range(2..=5);
    let m = d + r.random_range(0..=1);
    let e = if r.random_bool(0.7) { d } else { r.random_range(2..=2 * d) };
    let batches = (0..e)
        .map(|_| {
            let scale = r.random_range(0.2..1.5);
            gaussian(&mut r, 40, m) * scale
        })
        .collect();
    let lhat = gaussian(&mut r, m, d) * 0.6;
    Instance { batches, lhat }
}

/// Best mean |entry| over all row-to-column permutations, by enumeration.
pub fn brute_force_mcc(c: &DMatrix<f64>) -> f64 {
    let d = c.nrows();
    let mut perm: Vec<usize> = (0..d).collect();
    let mut best = f64::NEG_INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let s = p.iter().enumerate().map(|(i, &j)| c[(i, j)].abs()).sum::<f64>() / d as f64;
        best = best.max(s);
    });
    best
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// The coverage condition with supports as bitmasks: for each `j`, OR of
/// every support lacking `j` must equal all bits but `j`.
pub fn coverage_holds(d: usize, supports: &[u32]) -> bool {
    let full = (1u32 << d) - 1;
    (0..d).all(|j| {
        let bit = 1u32 << j;
        let union = supports.iter().filter(|&&s| s & bit == 0).fold(0, |acc, &s| acc | s);
        union == full & !bit
    })
}
