use aoi_core::analytic::expected_epoch;
use aoi_core::engine::{simulate_with, SimOptions};
use aoi_core::experiments::optimal_b2;
use aoi_core::model::SystemParams;
use aoi_core::replicate::{replicate, replicate_sequential, replication_seeds};
use aoi_core::stats::{long_run_estimate, CiMethod};

#[test]
fn batch_means_ci_covers_analytic_ratio() {
    let (policy, sol) = optimal_b2().unwrap();
    let truth = expected_epoch(sol.lambda_star, sol.x1_star).unwrap().ratio;
    let params = SystemParams::new(2, 1.0, 2e4, 0).unwrap();
    let runs = replicate(&params, &policy, &replication_seeds(1_000, 100), &SimOptions::default()).unwrap();
    let covered = runs.iter().filter(|r| r.estimate.covers(truth)).count();
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn delta_method_ci_covers_analytic_ratio() {
    let (policy, sol) = optimal_b2().unwrap();
    let truth = expected_epoch(sol.lambda_star, sol.x1_star).unwrap().ratio;
    let params = SystemParams::new(2, 1.0, 2e4, 0).unwrap();
    let options = SimOptions {
        ci_method: CiMethod::Delta,
        ..SimOptions::default()
    };
    let runs = replicate(&params, &policy, &replication_seeds(2_000, 100), &options).unwrap();
    let covered = runs.iter().filter(|r| r.estimate.covers(truth)).count();
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn doubling_epochs_shrinks_ci_by_root_two() {
    let (policy, _) = optimal_b2().unwrap();
    let params = SystemParams::new(2, 1.0, 4e4, 0).unwrap();
    let runs = replicate(&params, &policy, &replication_seeds(3_000, 20), &SimOptions::default()).unwrap();
    let (mut half, mut full) = (0.0, 0.0);
    for r in &runs {
        let n = r.epochs.len() / 2;
        half += long_run_estimate(&r.epochs[..n]).unwrap().ci_halfwidth;
        full += long_run_estimate(&r.epochs[..2 * n]).unwrap().ci_halfwidth;
    }
    let ratio = full / half;
    assert!((0.6..=0.82).contains(&ratio), "ratio {ratio}");
}

#[test]
fn replication_order_and_values_do_not_depend_on_threads() {
    let (policy, _) = optimal_b2().unwrap();
    let params = SystemParams::new(2, 1.0, 5e3, 0).unwrap();
    let seeds = replication_seeds(77, 16);
    let a = replicate_sequential(&params, &policy, &seeds, &SimOptions::default()).unwrap();
    let b = replicate(&params, &policy, &seeds, &SimOptions::default()).unwrap();
    let bits = |v: &[aoi_core::engine::SimResult]| -> Vec<u64> { v.iter().map(|r| r.average_age.to_bits()).collect() };
    assert_eq!(bits(&a), bits(&b));
    for (seed, r) in seeds.iter().zip(&a) {
        let single = simulate_with(&params.with_seed(*seed), &policy, &SimOptions::default()).unwrap();
        assert_eq!(single.average_age.to_bits(), r.average_age.to_bits());
    }
}
