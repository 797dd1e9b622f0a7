//! Learning the unmixing `L̂` by minimizing
//!
//! ```text
//! L_var + λ_e L_e + λ_m L_m + λ_diag L_diag + λ_norm L_norm
//! ```
//!
//! over per-environment minibatches with AdamW. See [`loss`] for the terms.

pub mod adamw;
pub mod checkpoint;
pub mod loss;
pub mod train;

use std::ops::Deref;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use loss::{
    gradient, loss_diag, loss_dim, loss_env, loss_norm, loss_var, total_loss, variance_matrix,
    wrap_diagonal, EnvCovariances, LossBreakdown,
};
pub use train::{train, train_on, EpochRecord, GradientCheckRecord, TrainReport};

use crate::seed;
use crate::{Error, Result};

/// Learned linear map `R^m -> R^d`, applied to observation rows as `Z̃ L̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingModel {
    lhat: DMatrix<f64>,
    init_seed: u64,
}

impl UnmixingModel {
    /// Entries i.i.d. uniform on `[-1/√m, 1/√m]`.
    pub fn init(m: usize, d: usize, init_seed: u64) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
        let mut rng = seed::rng(init_seed, &[seed::TAG_INIT]);
        UnmixingModel {
            lhat: DMatrix::from_fn(m, d, |_, _| dist.sample(&mut rng)),
            init_seed,
        }
    }

    pub fn from_matrix(lhat: DMatrix<f64>, init_seed: u64) -> Self {
        UnmixingModel { lhat, init_seed }
    }

    pub fn lhat(&self) -> &DMatrix<f64> {
        &self.lhat
    }

    pub(crate) fn lhat_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.lhat
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn m(&self) -> usize {
        self.lhat.nrows()
    }

    pub fn d(&self) -> usize {
        self.lhat.ncols()
    }

    /// `Ẑ = Z̃ L̂`.
    pub fn transform(&self, observed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if observed.ncols() != self.m() {
            return Err(Error::DimensionMismatch {
                what: "observation columns",
                expected: self.m(),
                found: observed.ncols(),
            });
        }
        Ok(observed * &self.lhat)
    }

    /// `L · L̂` for the ground-truth mixing `L` (`d × m`).
    pub fn effective(&self, mixing: &DMatrix<f64>) -> DMatrix<f64> {
        mixing * &self.lhat
    }
}

/// Environments × learned dimensions; entry `(i, j)` is the variance of
/// learned dimension `j` in environment `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceMatrix(DMatrix<f64>);

impl VarianceMatrix {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument(
                "variances must be nonnegative".into(),
            ));
        }
        Ok(VarianceMatrix(v))
    }

    pub(crate) fn from_matrix_unchecked(v: DMatrix<f64>) -> Self {
        VarianceMatrix(v)
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for VarianceMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_m: f64,
    pub lambda_diag: f64,
    pub lambda_norm: f64,
    pub norm_target: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_e: 1.0,
            lambda_m: 1.0,
            lambda_diag: 10.0,
            lambda_norm: 5.0,
            norm_target: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_e, self.lambda_m, self.lambda_diag, self.lambda_norm];
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument("loss weights must be nonnegative".into()));
        }
        if !(self.norm_target > 0.0) || !self.norm_target.is_finite() {
            return Err(Error::InvalidArgument("norm target must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        TrainConfig {
            epochs: 50,
            batch_size: 4096,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "epochs must be positive and batch size at least 2".into(),
            ));
        }
        let positive = [self.learning_rate, self.eps];
        let unit = [self.beta1, self.beta2];
        if positive.iter().any(|x| !(*x > 0.0))
            || unit.iter().any(|b| !(0.0..1.0).contains(b))
            || !(self.weight_decay >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "optimizer hyperparameters out of range".into(),
            ));
        }
        Ok(())
    }
}
