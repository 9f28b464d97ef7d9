//! Finite separable distributions, sampled datasets and exact risks.
//!
//! Each example is stored as the signed vector `z = y·x`, so a linear model
//! `w` classifies it correctly iff `w·z > 0`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::loss::LossFunction;
use crate::numeric::{compensated_sum, dot, norm, CompensatedSum};
use crate::rng::{stream_rng, STREAM_DATASET};
use crate::tail::TailFunction;

const PROB_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-12;
const MARGIN_TOL: f64 = 1e-12;

/// How a distribution was built; hard instances keep their construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    BigT { gamma: f64, n: usize },
    SmallT { gamma: f64, eps: f64, eta: f64, steps: u64, p: f64 },
    Custom,
}

/// JSON layout of a user-supplied distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionFile {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub w_star: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
    w_star: Vec<f64>,
    gamma: f64,
    construction: Construction,
}

impl DiscreteDistribution {
    /// Validates probabilities, the unit-ball constraint and the margin witness.
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>, w_star: Vec<f64>, gamma: f64) -> Result<Self> {
        Self::with_construction(support, probs, w_star, gamma, Construction::Custom)
    }

    fn with_construction(
        support: Vec<Vec<f64>>,
        probs: Vec<f64>,
        w_star: Vec<f64>,
        gamma: f64,
        construction: Construction,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(invalid("support", "must contain at least one point"));
        }
        if support.len() != probs.len() {
            return Err(invalid(
                "probs",
                format!("{} probabilities for {} support points", probs.len(), support.len()),
            ));
        }
        let dim = w_star.len();
        if dim == 0 {
            return Err(invalid("w_star", "must be nonempty"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("margin must be positive, got {gamma}")));
        }
        if probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(invalid("probs", "must be nonnegative and finite"));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_TOL {
            return Err(invalid("probs", format!("sum to {total}, expected 1")));
        }
        for (j, z) in support.iter().enumerate() {
            if z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: z.len(),
                });
            }
            let nz = norm(z);
            if nz > 1.0 + NORM_TOL {
                return Err(invalid("support", format!("point {j} has norm {nz} > 1")));
            }
            let m = dot(&w_star, z);
            if m < gamma - MARGIN_TOL {
                return Err(invalid(
                    "w_star",
                    format!("margin w*·z_{j} = {m} is below gamma = {gamma}"),
                ));
            }
        }
        Ok(Self {
            support,
            probs,
            w_star,
            gamma,
            construction,
        })
    }

    pub fn from_file(spec: DistributionFile) -> Result<Self> {
        Self::new(spec.support, spec.probs, spec.w_star, spec.gamma)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The margin witness as constructed (not necessarily unit norm).
    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    /// Margin certified for [`Self::w_star`].
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// `(w*/‖w*‖, γ/‖w*‖)`: the unit separator and the margin it certifies.
    pub fn unit_witness(&self) -> (Vec<f64>, f64) {
        let s = norm(&self.w_star);
        (self.w_star.iter().map(|x| x / s).collect(), self.gamma / s)
    }

    pub(crate) fn sampler(&self) -> CategoricalSampler {
        CategoricalSampler::new(&self.probs)
    }
}

/// Inverse-CDF sampler over support indices.
#[derive(Debug, Clone)]
pub(crate) struct CategoricalSampler {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CategoricalSampler {
    pub(crate) fn new(probs: &[f64]) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative = probs
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    #[inline]
    pub(crate) fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// The hard instance for the many-steps regime (three points in R³).
pub fn make_big_t_instance(gamma: f64, n: usize) -> Result<DiscreteDistribution> {
    if !(gamma > 0.0 && gamma <= 0.125) {
        return Err(invalid("gamma", format!("must lie in (0, 1/8], got {gamma}")));
    }
    if n < 35 {
        return Err(invalid("n", format!("the construction needs n >= 35, got {n}")));
    }
    let keep = 1.0 - 1.0 / n as f64;
    DiscreteDistribution::with_construction(
        vec![
            vec![1.0, 0.0, 0.0],
            vec![-0.5, 3.0 * gamma, 0.0],
            vec![0.0, -0.125, 4.0 * gamma + 0.25],
        ],
        vec![59.0 / 64.0 * keep, 5.0 / 64.0 * keep, 1.0 / n as f64],
        vec![gamma, 0.5, 0.25],
        gamma,
        Construction::BigT { gamma, n },
    )
}

/// `p = φ⁻¹(8ε)/(72γ²Tη)`, the rare-point mass of the few-steps instance.
pub fn small_t_mass(phi: &TailFunction, gamma: f64, eps: f64, eta: f64, steps: u64) -> Result<f64> {
    if !(eps > 0.0 && 8.0 * eps <= phi.at_zero()) {
        return Err(invalid(
            "eps",
            format!("need 0 < 8·eps <= φ(0) = {}, got eps = {eps}", phi.at_zero()),
        ));
    }
    Ok(phi.inverse(8.0 * eps)? / (72.0 * gamma * gamma * steps as f64 * eta))
}

/// The hard instance for the few-steps regime (two points in R²).
pub fn make_small_t_instance(
    phi: &TailFunction,
    gamma: f64,
    eps: f64,
    eta: f64,
    steps: u64,
) -> Result<DiscreteDistribution> {
    if !(gamma > 0.0 && gamma <= 0.125) {
        return Err(invalid("gamma", format!("must lie in (0, 1/8], got {gamma}")));
    }
    if !(eta > 0.0) || steps == 0 {
        return Err(invalid("eta/T", "must be positive"));
    }
    let p = small_t_mass(phi, gamma, eps, eta, steps)?;
    if !(p > 0.0 && p < 1.0) {
        let root = phi.inverse(8.0 * eps)?;
        let t_min = root / (72.0 * gamma * gamma * eta);
        return Err(invalid(
            "T",
            format!("rare-point mass p = {p} must lie in (0, 1); need T > {t_min} (and 8·eps < φ(0))"),
        ));
    }
    DiscreteDistribution::with_construction(
        vec![vec![1.0, 0.0], vec![-0.5, 3.0 * gamma]],
        vec![1.0 - p, p],
        vec![gamma, 0.5],
        gamma,
        Construction::SmallT {
            gamma,
            eps,
            eta,
            steps,
            p,
        },
    )
}

/// An i.i.d. sample, stored as support indices plus multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    support: Vec<Vec<f64>>,
    indices: Vec<u32>,
    counts: Vec<usize>,
    seed: Option<u64>,
}

impl Dataset {
    /// A dataset realizing the given multiplicities, in support order.
    pub fn from_counts(dist: &DiscreteDistribution, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != dist.support().len() {
            return Err(invalid("counts", "one multiplicity per support point required"));
        }
        let indices = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(j as u32, c))
            .collect();
        Ok(Self {
            support: dist.support().to_vec(),
            indices,
            counts,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    /// Support index of each example, in draw order.
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn examples(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.indices.iter().map(|&j| self.support[j as usize].as_slice())
    }

    /// `(support index, count/n)` for every point present in the sample.
    pub(crate) fn weights(&self) -> Vec<(usize, f64)> {
        let n = self.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, &c)| (j, c as f64 / n))
            .collect()
    }
}

/// Draw `n` i.i.d. examples; reproducible for a fixed `seed`.
pub fn sample_dataset(dist: &DiscreteDistribution, n: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, STREAM_DATASET);
    sample_with(dist, n, &mut rng, Some(seed))
}

pub(crate) fn sample_with(
    dist: &DiscreteDistribution,
    n: usize,
    rng: &mut ChaCha8Rng,
    seed: Option<u64>,
) -> Dataset {
    let sampler = dist.sampler();
    let mut counts = vec![0usize; dist.support().len()];
    let indices = (0..n)
        .map(|_| {
            let j = sampler.draw(rng);
            counts[j] += 1;
            j as u32
        })
        .collect();
    Dataset {
        support: dist.support().to_vec(),
        indices,
        counts,
        seed,
    }
}

fn check_dim(w: &[f64], dim: usize) -> Result<()> {
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    Ok(())
}

/// `L(w) = Σ_j p_j ℓ(w·z_j)`, exact over the finite support.
pub fn population_risk_exact(w: &[f64], loss: &LossFunction, dist: &DiscreteDistribution) -> Result<f64> {
    check_dim(w, dist.dim())?;
    Ok(compensated_sum(
        dist.support()
            .iter()
            .zip(dist.probs())
            .filter(|(_, &p)| p > 0.0)
            .map(|(z, &p)| p * loss.value(dot(w, z))),
    ))
}

/// `L̂(w) = (1/n) Σ_i ℓ(w·z_i)`.
pub fn empirical_risk(w: &[f64], loss: &LossFunction, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("data", "empirical risk of an empty dataset is undefined"));
    }
    check_dim(w, data.dim())?;
    Ok(compensated_sum(
        data.weights()
            .into_iter()
            .map(|(j, wt)| wt * loss.value(dot(w, &data.support[j]))),
    ))
}
