//! Shared fixtures for the benchmarks.

use sepgd_core::loss::make_quadratic_extension;
use sepgd_core::{make_big_t_instance, sample_dataset, Dataset, LossFunction, TailFunction};

/// The many-steps instance at γ = 1/16 with a sampled dataset and its loss.
pub fn big_t_fixture(n: usize, seed: u64) -> (LossFunction, Dataset) {
    let tail = TailFunction::exponential();
    let loss = make_quadratic_extension(&tail).expect("exponential tail is certified");
    let dist = make_big_t_instance(1.0 / 16.0, n).expect("valid instance parameters");
    (loss, sample_dataset(&dist, n, seed))
}
