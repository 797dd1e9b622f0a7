use std::time::Instant;

use nalgebra::{DMatrix, DMatrixView};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adamw::{adamw_step, AdamWState};
use super::loss::{EnvCovariances, LossBreakdown};
use super::{LossWeights, TrainConfig, UnmixingModel};
use crate::dataset::EnvDataset;
use crate::seed;
use crate::{Error, Result};

const GRADCHECK_STEP: f64 = 1e-5;
const GRADCHECK_ENTRIES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Mean over the epoch's steps.
    pub loss: LossBreakdown,
}

/// Finite-difference check of the analytic gradient on the first minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradientCheckRecord {
    pub entries_checked: usize,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Variance matrix of the final model on the full training split.
    pub final_variance: Vec<Vec<f64>>,
    pub wall_time_secs: f64,
    pub gradient_check: GradientCheckRecord,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-epoch breakdown: `epoch,steps,var,env,dim,diag,norm,total`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "steps", "var", "env", "dim", "diag", "norm", "total"])?;
        for r in &self.epochs {
            let l = r.loss;
            w.write_record([
                r.epoch.to_string(),
                r.steps.to_string(),
                l.var.to_string(),
                l.env.to_string(),
                l.dim.to_string(),
                l.diag.to_string(),
                l.norm.to_string(),
                l.total.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Trains on the training split of `dataset`.
pub fn train(
    dataset: &EnvDataset,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<(UnmixingModel, TrainReport)> {
    let envs: Vec<_> = (0..dataset.num_envs())
        .map(|e| dataset.train_observed(e))
        .collect();
    train_on(&envs, dataset.d(), weights, config)
}

/// Trains an `m × d` unmixing on per-environment training matrices.
///
/// Every step draws one minibatch per environment from that environment's
/// epoch-wise shuffled rows, so all of `V` is built from fresh samples;
/// an epoch is `⌈n_train / batch_size⌉` steps.
pub fn train_on(
    envs: &[DMatrixView<'_, f64>],
    d: usize,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<(UnmixingModel, TrainReport)> {
    config.validate()?;
    weights.validate()?;
    if envs.len() < 2 {
        return Err(Error::Precondition(format!(
            "training needs at least 2 environments, got {}",
            envs.len()
        )));
    }
    let m = envs[0].ncols();
    let n_train = envs.iter().map(|e| e.nrows()).min().unwrap_or(0);
    if envs.iter().any(|e| e.ncols() != m) {
        return Err(Error::InvalidArgument(
            "environments disagree on the observation dimension".into(),
        ));
    }
    if config.batch_size > n_train {
        return Err(Error::Precondition(format!(
            "batch size {} exceeds the {} training rows per environment",
            config.batch_size, n_train
        )));
    }

    let start = Instant::now();
    let mut model = UnmixingModel::init(m, d, config.seed);
    let mut state = AdamWState::new(m, d);
    let adam = config.adamw();
    let mut rng = seed::rng(config.seed, &[seed::TAG_BATCHES]);
    let steps_per_epoch = n_train.div_ceil(config.batch_size);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut gradient_check = None;
    let mut perms: Vec<Vec<usize>> = envs.iter().map(|e| (0..e.nrows()).collect()).collect();

    for epoch in 0..config.epochs {
        for p in perms.iter_mut() {
            p.shuffle(&mut rng);
        }
        let mut sum = LossBreakdown::default();
        let mut steps = 0;
        for step in 0..steps_per_epoch {
            let lo = step * config.batch_size;
            let hi = (lo + config.batch_size).min(n_train);
            if hi - lo < 2 {
                continue;
            }
            let batches: Vec<DMatrix<f64>> = envs
                .iter()
                .zip(&perms)
                .map(|(x, p)| x.select_rows(&p[lo..hi]))
                .collect();
            let covs = EnvCovariances::from_matrices(&batches)?;
            let (loss, grad) = covs
                .loss_and_gradient(model.lhat(), weights)
                .map_err(|e| annotate(e, epoch, step))?;
            if gradient_check.is_none() {
                gradient_check = Some(finite_difference_check(&covs, model.lhat(), weights, &grad)?);
            }
            adamw_step(model.lhat_mut(), &mut state, &grad, &adam)?;
            if model.lhat().iter().any(|x| !x.is_finite()) {
                return Err(annotate(Error::NonFinite("parameters".into()), epoch, step));
            }
            accumulate(&mut sum, &loss);
            steps += 1;
        }
        epochs.push(EpochRecord {
            epoch,
            steps,
            loss: scale(&sum, 1.0 / steps.max(1) as f64),
        });
    }

    let full = EnvCovariances::from_batches(envs)?;
    let v = full.variance_matrix(model.lhat())?;
    let final_variance = v.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok((
        model,
        TrainReport {
            epochs,
            final_variance,
            wall_time_secs: start.elapsed().as_secs_f64(),
            gradient_check: gradient_check.unwrap_or_default(),
        },
    ))
}

fn annotate(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, step {step}")),
        other => other,
    }
}

fn accumulate(acc: &mut LossBreakdown, l: &LossBreakdown) {
    acc.var += l.var;
    acc.env += l.env;
    acc.dim += l.dim;
    acc.diag += l.diag;
    acc.norm += l.norm;
    acc.total += l.total;
}

fn scale(l: &LossBreakdown, s: f64) -> LossBreakdown {
    LossBreakdown {
        var: l.var * s,
        env: l.env * s,
        dim: l.dim * s,
        diag: l.diag * s,
        norm: l.norm * s,
        total: l.total * s,
    }
}

/// Central differences on a spread of entries; norm-wise relative error.
fn finite_difference_check(
    covs: &EnvCovariances,
    lhat: &DMatrix<f64>,
    weights: &LossWeights,
    grad: &DMatrix<f64>,
) -> Result<GradientCheckRecord> {
    let n = lhat.len();
    let count = GRADCHECK_ENTRIES.min(n);
    let mut probe = lhat.clone();
    let mut diff_sq = 0.0;
    let mut ref_sq: f64 = 0.0;
    let mut fd_sq: f64 = 0.0;
    for k in 0..count {
        let idx = k * n / count;
        let orig = probe[idx];
        probe[idx] = orig + GRADCHECK_STEP;
        let up = covs.loss(&probe, weights)?.total;
        probe[idx] = orig - GRADCHECK_STEP;
        let down = covs.loss(&probe, weights)?.total;
        probe[idx] = orig;
        let fd = (up - down) / (2.0 * GRADCHECK_STEP);
        diff_sq += (fd - grad[idx]).powi(2);
        ref_sq += grad[idx] * grad[idx];
        fd_sq += fd * fd;
    }
    let denom = ref_sq.sqrt().max(fd_sq.sqrt()).max(1e-12);
    Ok(GradientCheckRecord {
        entries_checked: count,
        relative_error: diff_sq.sqrt() / denom,
    })
}
