//! Independent replications over seeds.
//!
//! With the `parallel` feature (on by default) replications run on the rayon
//! pool; without it they run in order on the calling thread. Results are
//! always returned in seed order, so output never depends on scheduling.

use crate::engine::{simulate_with, SimOptions, SimResult};
use crate::error::Result;
use crate::model::SystemParams;
use crate::policies::PolicySpec;

/// `n` consecutive seeds starting at `base`.
pub fn replication_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Order-preserving map, parallel when the `parallel` feature is enabled.
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn run_one(params: &SystemParams, policy: &PolicySpec, seed: u64, options: &SimOptions) -> Result<SimResult> {
    simulate_with(&params.with_seed(seed), policy, options)
}

pub fn replicate_sequential(
    params: &SystemParams,
    policy: &PolicySpec,
    seeds: &[u64],
    options: &SimOptions,
) -> Result<Vec<SimResult>> {
    seeds.iter().map(|&s| run_one(params, policy, s, options)).collect()
}

#[cfg(feature = "parallel")]
pub fn replicate_parallel(
    params: &SystemParams,
    policy: &PolicySpec,
    seeds: &[u64],
    options: &SimOptions,
) -> Result<Vec<SimResult>> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| run_one(params, policy, s, options)).collect()
}

/// One simulation per seed; the seed in `params` is ignored.
pub fn replicate(
    params: &SystemParams,
    policy: &PolicySpec,
    seeds: &[u64],
    options: &SimOptions,
) -> Result<Vec<SimResult>> {
    #[cfg(feature = "parallel")]
    {
        replicate_parallel(params, policy, seeds, options)
    }
    #[cfg(not(feature = "parallel"))]
    {
        replicate_sequential(params, policy, seeds, options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_bit_for_bit() {
        let params = SystemParams::new(2, 1.0, 2_000.0, 0).unwrap();
        let policy = PolicySpec::threshold_b2(0.72, 1.48);
        let seeds = replication_seeds(40, 8);
        let opts = SimOptions::default();
        let a = replicate_sequential(&params, &policy, &seeds, &opts).unwrap();
        let b = replicate(&params, &policy, &seeds, &opts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.average_age.to_bits(), y.average_age.to_bits());
            assert_eq!(x.total_updates, y.total_updates);
        }
        assert_ne!(a[0].average_age, a[1].average_age);
    }

    #[test]
    fn errors_propagate() {
        let params = SystemParams::new(3, 1.0, 10.0, 0).unwrap();
        let policy = PolicySpec::threshold_b2(0.72, 1.48);
        assert!(replicate(&params, &policy, &[1, 2], &SimOptions::default()).is_err());
    }
}
