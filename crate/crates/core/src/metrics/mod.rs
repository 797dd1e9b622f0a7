//! Disentanglement metrics.

pub mod assignment;
mod correlation;
mod structure;

pub use correlation::{mcc, pearson, CorrelationMatrix, MccResult};
pub use structure::{disentanglement_check, StructureReport, DEFAULT_STRUCTURE_TOL};

use nalgebra::DMatrix;

use crate::Result;

/// MCC between ground-truth latents and a learned representation, both
/// given as sample rows.
pub fn mcc_score(latents: &DMatrix<f64>, learned: &DMatrix<f64>) -> Result<MccResult> {
    mcc(&pearson(latents, learned)?)
}
