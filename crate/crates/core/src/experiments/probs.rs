use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SCHEMA_VERSION;
use crate::data::make_big_t_instance;
use crate::error::{invalid, Result};
use crate::numeric::{wilson_interval, z_two_sided_95};
use crate::rng::{derive_seed, stream_rng, STREAM_VALIDATION};

const CHUNK: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEstimate {
    pub name: String,
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Proven lower floor for the probability.
    pub floor: f64,
    /// Closed-form value when one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<f64>,
    /// The whole 95% interval lies above the floor.
    pub exceeds_floor: bool,
}

impl EventEstimate {
    fn new(name: &str, successes: u64, trials: u64, floor: f64, analytic: Option<f64>) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials, z_two_sided_95());
        Self {
            name: name.to_string(),
            successes,
            trials,
            estimate: if trials == 0 { f64::NAN } else { successes as f64 / trials as f64 },
            ci_lo,
            ci_hi,
            floor,
            analytic,
            exceeds_floor: ci_lo >= floor,
        }
    }

    /// Binomial standard error of the estimate.
    pub fn stderr(&self) -> f64 {
        let p = self.estimate;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbReport {
    pub schema_version: u32,
    pub gamma: f64,
    pub n: usize,
    pub samples: u64,
    pub seed: u64,
    /// `Pr(z₃ ∉ S ∧ z' = z₃)`.
    pub a1: EventEstimate,
    /// `Pr(δ₂ ∈ [1/32, 1/8] | A₁)`, `δ₂` the fraction of `z₂` in `S`.
    pub a2_given_a1: EventEstimate,
    pub a1_and_a2: EventEstimate,
}

/// Monte Carlo estimates of the event probabilities of the many-steps instance.
pub fn estimate_event_probs(gamma: f64, n: usize, samples: u64, seed: u64) -> Result<ProbReport> {
    let dist = make_big_t_instance(gamma, n)?;
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let sampler = dist.sampler();
    let chunks = samples.div_ceil(CHUNK as u64);
    let (a1, both) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(derive_seed(seed, &[c]), STREAM_VALIDATION);
            let len = (samples - c * CHUNK as u64).min(CHUNK as u64);
            let (mut a1, mut both) = (0u64, 0u64);
            for _ in 0..len {
                let mut counts = [0usize; 3];
                for _ in 0..n {
                    counts[sampler.draw(&mut rng)] += 1;
                }
                let test = sampler.draw(&mut rng);
                if test == 2 && counts[2] == 0 {
                    a1 += 1;
                    let frac = counts[1] as f64 / n as f64;
                    if (1.0 / 32.0..=1.0 / 8.0).contains(&frac) {
                        both += 1;
                    }
                }
            }
            (a1, both)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    let nf = n as f64;
    let analytic = (1.0 / nf) * (1.0 - 1.0 / nf).powf(nf);
    Ok(ProbReport {
        schema_version: SCHEMA_VERSION,
        gamma,
        n,
        samples,
        seed,
        a1: EventEstimate::new("a1", a1, samples, 1.0 / (2.0 * E * nf), Some(analytic)),
        a2_given_a1: EventEstimate::new("a2_given_a1", both, a1, 1.0 / 60.0, None),
        a1_and_a2: EventEstimate::new("a1_and_a2", both, samples, 1.0 / (120.0 * E * nf), None),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_a1_example() {
        let n = 50.0f64;
        let a = (1.0 / n) * (1.0 - 1.0 / n).powf(n);
        assert!((a - 0.00728).abs() < 1e-5);
        assert!(a >= 1.0 / (2.0 * E * n));
        let big = 1e7f64;
        assert!((big * (1.0 / big) * (1.0 - 1.0 / big).powf(big) - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn estimates_are_reproducible_and_consistent() {
        let a = estimate_event_probs(1.0 / 16.0, 64, 50_000, 5).unwrap();
        assert_eq!(a, estimate_event_probs(1.0 / 16.0, 64, 50_000, 5).unwrap());
        assert_eq!(a.a1_and_a2.successes, a.a2_given_a1.successes);
        assert_eq!(a.a2_given_a1.trials, a.a1.successes);
        let want = a.a1.analytic.unwrap();
        assert!((a.a1.estimate - want).abs() < 4.0 * a.a1.stderr());
    }

    #[test]
    fn rejects_small_n() {
        assert!(estimate_event_probs(0.1, 34, 10, 0).is_err());
    }
}
