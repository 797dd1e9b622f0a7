mod common;

use common::{central_difference, library_term_gradient, random_instance, reference_term, relative_error, TERMS};
use crl_core::disentangler::{total_loss, LossWeights, UnmixingModel};

const H: f64 = 1e-5;
const INSTANCES: u64 = 20;

#[test]
fn every_term_matches_central_differences() {
    let w = LossWeights::default();
    for term in TERMS {
        let mut worst: f64 = 0.0;
        for seed in 0..INSTANCES {
            let inst = random_instance(seed);
            let analytic = library_term_gradient(term, &inst.batches, &inst.lhat, &w);
            let numeric = central_difference(|l| reference_term(term, &inst.batches, l, &w), &inst.lhat, H);
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        assert!(worst < 1e-4, "{term:?}: relative error {worst:e}");
    }
}

#[test]
fn library_loss_matches_reference_values() {
    let w = LossWeights {
        lambda_e: 0.7,
        lambda_m: 1.3,
        lambda_diag: 2.0,
        lambda_norm: 0.5,
        norm_target: 1.5,
    };
    for seed in 0..INSTANCES {
        let inst = random_instance(100 + seed);
        let model = UnmixingModel::from_matrix(inst.lhat.clone(), 0);
        let lib = total_loss(&inst.batches, &model, &w).unwrap();
        let got = [lib.var, lib.env, lib.dim, lib.diag, lib.norm, lib.total];
        for (term, g) in TERMS.iter().zip(got) {
            let r = reference_term(*term, &inst.batches, &inst.lhat, &w);
            assert!((g - r).abs() <= 1e-10 * r.abs().max(1.0), "{term:?}: {g} vs {r}");
        }
    }
}

#[test]
fn weighted_total_matches_with_nondefault_weights() {
    let w = LossWeights {
        lambda_e: 0.3,
        lambda_m: 2.0,
        lambda_diag: 0.1,
        lambda_norm: 4.0,
        norm_target: 0.5,
    };
    for seed in 0..INSTANCES {
        let inst = random_instance(500 + seed);
        let analytic = library_term_gradient(common::Term::Total, &inst.batches, &inst.lhat, &w);
        let numeric = central_difference(
            |l| reference_term(common::Term::Total, &inst.batches, l, &w),
            &inst.lhat,
            H,
        );
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }
}
