mod common;

use common::{gaussian, rng};
use crl_core::dataset::{EnvDataset, MixingMatrix};
use crl_core::design::{example_design, leave_one_out_design};
use crl_core::disentangler::{
    loss_diag, loss_var, total_loss, train, variance_matrix, LossWeights, TrainConfig, UnmixingModel,
};
use crl_core::scm::Scm;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn environment_order_does_not_matter(seed in any::<u64>(), shift in 0usize..5) {
        let inst = common::random_instance(seed);
        let e = inst.batches.len();
        let mut permuted = inst.batches.clone();
        permuted.rotate_left(shift % e);
        permuted.swap(0, e - 1);
        let w = LossWeights { lambda_diag: 0.0, ..LossWeights::default() };
        let model = UnmixingModel::from_matrix(inst.lhat, 0);
        let a = total_loss(&inst.batches, &model, &w).unwrap();
        let b = total_loss(&permuted, &model, &w).unwrap();
        prop_assert!((a.total - b.total).abs() < 1e-12);
        prop_assert!((a.var - b.var).abs() < 1e-12);
    }

    #[test]
    fn diagonal_term_invariant_under_cyclic_co_shift(d in 2usize..7, seed in any::<u64>(), shift in 0usize..7) {
        let mut r = rng(seed);
        let v = gaussian(&mut r, d, d).map(f64::abs);
        let s = shift % d;
        let shifted = DMatrix::from_fn(d, d, |i, j| v[((i + s) % d, (j + s) % d)]);
        prop_assert!((loss_diag(&v) - loss_diag(&shifted)).abs() < 1e-12);
        prop_assert!((loss_var(&v) - loss_var(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn variance_matrix_is_nonnegative(seed in any::<u64>()) {
        let inst = common::random_instance(seed);
        let model = UnmixingModel::from_matrix(inst.lhat, 0);
        let v = variance_matrix(&inst.batches, &model).unwrap();
        prop_assert!(v.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn diagonal_term_is_not_invariant_under_arbitrary_row_swaps() {
    let v = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let swapped = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!((loss_diag(&v) - loss_diag(&swapped)).abs() > 0.1);
}

/// Mixed three-node example data under the example's three regimes.
fn example_batches() -> (Vec<DMatrix<f64>>, MixingMatrix) {
    let mixing = MixingMatrix::example();
    let data = EnvDataset::generate(&Scm::three_node_example(), &example_design(), &mixing, 5000, 3).unwrap();
    ((0..3).map(|e| data.observed(e).clone()).collect(), mixing)
}

#[test]
fn ground_truth_unmixing_is_sparser_than_identity() {
    let (batches, mixing) = example_batches();
    let w = LossWeights::default();
    let inv = mixing.pseudo_inverse();
    let identity = UnmixingModel::from_matrix(DMatrix::identity(3, 3), 0);
    let id_var = total_loss(&batches, &identity, &w).unwrap().var;
    let perm = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    for scale in [[1.0, 1.0, 1.0], [2.0, -0.5, 3.0], [-1.0, 0.1, 0.7]] {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&scale));
        let truth = UnmixingModel::from_matrix(&inv * &perm * d, 0);
        let v = total_loss(&batches, &truth, &w).unwrap().var;
        assert!(v < id_var, "{v} vs {id_var}");
    }
}

#[test]
fn training_is_bit_reproducible() {
    let d = 3;
    let scm = Scm::three_node_example();
    let envs = leave_one_out_design(d, 0).unwrap();
    let data = EnvDataset::generate(&scm, &envs, &MixingMatrix::sample(d, d, 0).unwrap(), 2000, 0).unwrap();
    let cfg = TrainConfig { epochs: 5, batch_size: 256, seed: 11, ..TrainConfig::default() };
    let (a, ra) = train(&data, &LossWeights::default(), &cfg).unwrap();
    let (b, rb) = train(&data, &LossWeights::default(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);
    assert_eq!(ra.final_variance, rb.final_variance);
    let (c, _) = train(&data, &LossWeights::default(), &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a, c);
    assert!(ra.gradient_check.relative_error < 1e-4);
}

#[test]
fn single_environment_is_rejected() {
    let x = gaussian(&mut rng(0), 100, 3);
    let view = x.columns(0, 3);
    let err = crl_core::disentangler::train_on(&[view], 3, &LossWeights::default(), &TrainConfig { batch_size: 10, ..TrainConfig::default() });
    assert!(matches!(err, Err(crl_core::Error::Precondition(_))));
}
