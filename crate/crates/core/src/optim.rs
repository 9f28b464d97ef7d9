//! Full-batch gradient descent and SGD with replacement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::loss::LossFunction;
use crate::numeric::{dot, norm, CompensatedSum};
use crate::rng::{stream_rng, STREAM_SGD};

/// Relative slack on the step-size ceiling `1/(2β)`.
const ETA_SLACK: f64 = 1e-12;
/// Summary records kept per run when no stride is given.
const DEFAULT_RECORDS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Gd,
    Sgd,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Gd => "gd",
            Algo::Sgd => "sgd",
        }
    }
}

/// The largest admissible step size, `1/(2β)`.
pub fn default_eta(beta: f64) -> f64 {
    0.5 / beta
}

pub fn validate_eta(eta: f64, beta: f64) -> Result<()> {
    let max = default_eta(beta);
    if !(eta > 0.0 && eta.is_finite()) || eta > max * (1.0 + ETA_SLACK) {
        return Err(invalid("eta", format!("must lie in (0, 1/(2β)] = (0, {max}], got {eta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub norm: f64,
    pub emp_risk: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Record every `stride`-th step; `None` keeps about a thousand records.
    pub record_stride: Option<u64>,
    /// Keep every iterate `w_1..w_T` (memory grows with `T`).
    pub keep_iterates: bool,
}

impl TrainOptions {
    fn stride(&self, steps: u64) -> u64 {
        self.record_stride
            .unwrap_or_else(|| steps.div_ceil(DEFAULT_RECORDS))
            .max(1)
    }
}

/// Per-run quantities needed by the SGD lemmas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdDiagnostics {
    /// `(1/T) Σ_t ℓ(w_t·z_{i_t})`.
    pub online_loss: f64,
    /// How often each support point was drawn.
    pub draw_counts: Vec<u64>,
    /// `max_t ‖w_t‖`.
    pub max_iterate_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub algo: Algo,
    pub eta: f64,
    pub steps: u64,
    pub seed: Option<u64>,
    pub records: Vec<StepRecord>,
    /// `w_T` for GD, `w̄_T` for SGD.
    pub final_model: Vec<f64>,
    pub final_emp_risk: f64,
    /// `max_t (L̂(w_{t+1}) − L̂(w_t))`; only meaningful for GD.
    pub max_ascent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdDiagnostics>,
}

impl Trajectory {
    pub fn final_norm(&self) -> f64 {
        norm(&self.final_model)
    }
}

fn check_inputs(loss: &LossFunction, data: &Dataset, eta: f64, steps: u64) -> Result<()> {
    validate_eta(eta, loss.beta())?;
    if steps == 0 {
        return Err(invalid("T", "must be a positive integer"));
    }
    if data.is_empty() {
        return Err(invalid("data", "cannot train on an empty dataset"));
    }
    Ok(())
}

/// `(L̂(w), ∇L̂(w))` over the weighted support, compensated per coordinate.
fn risk_and_gradient(
    loss: &LossFunction,
    support: &[Vec<f64>],
    weights: &[(usize, f64)],
    w: &[f64],
    grad: &mut [CompensatedSum],
) -> f64 {
    let mut risk = CompensatedSum::new();
    grad.iter_mut().for_each(|g| *g = CompensatedSum::new());
    for &(j, wt) in weights {
        let z = &support[j];
        let (v, d) = loss.value_and_derivative(dot(w, z));
        risk.add(wt * v);
        let s = wt * d;
        for (g, &zk) in grad.iter_mut().zip(z) {
            g.add(s * zk);
        }
    }
    risk.value()
}

fn risk_only(loss: &LossFunction, support: &[Vec<f64>], weights: &[(usize, f64)], w: &[f64]) -> f64 {
    weights
        .iter()
        .map(|&(j, wt)| wt * loss.value(dot(w, &support[j])))
        .collect::<CompensatedSum>()
        .value()
}

/// Gradient descent from `w_1 = 0`; performs `T − 1` updates and returns `w_T`.
pub fn run_gd(loss: &LossFunction, data: &Dataset, eta: f64, steps: u64) -> Result<Trajectory> {
    run_gd_with(loss, data, eta, steps, &TrainOptions::default())
}

pub fn run_gd_with(
    loss: &LossFunction,
    data: &Dataset,
    eta: f64,
    steps: u64,
    opts: &TrainOptions,
) -> Result<Trajectory> {
    check_inputs(loss, data, eta, steps)?;
    let d = data.dim();
    let support = data.support();
    let weights = data.weights();
    let stride = opts.stride(steps);
    let mut w = vec![0.0; d];
    let mut grad = vec![CompensatedSum::new(); d];
    let mut records = Vec::new();
    let mut iterates = opts.keep_iterates.then(Vec::new);
    let mut prev = f64::NAN;
    let mut max_ascent = f64::NEG_INFINITY;

    for t in 1..=steps {
        let risk = risk_and_gradient(loss, support, &weights, &w, &mut grad);
        if !risk.is_finite() {
            return Err(Error::Numeric(format!("empirical risk diverged at step {t}")));
        }
        if t > 1 {
            max_ascent = max_ascent.max(risk - prev);
        }
        prev = risk;
        if t == 1 || t == steps || t % stride == 0 {
            records.push(StepRecord {
                t,
                norm: norm(&w),
                emp_risk: risk,
            });
        }
        if let Some(it) = iterates.as_mut() {
            it.push(w.clone());
        }
        if t < steps {
            for (wk, g) in w.iter_mut().zip(&grad) {
                *wk -= eta * g.value();
            }
        }
    }

    Ok(Trajectory {
        algo: Algo::Gd,
        eta,
        steps,
        seed: None,
        records,
        final_model: w,
        final_emp_risk: prev,
        max_ascent: if steps > 1 { max_ascent } else { 0.0 },
        iterates,
        sgd: None,
    })
}

/// SGD with replacement from `w_1 = 0`; returns the average of `w_1..w_T`.
pub fn run_sgd(loss: &LossFunction, data: &Dataset, eta: f64, steps: u64, seed: u64) -> Result<Trajectory> {
    run_sgd_with(loss, data, eta, steps, seed, &TrainOptions::default())
}

pub fn run_sgd_with(
    loss: &LossFunction,
    data: &Dataset,
    eta: f64,
    steps: u64,
    seed: u64,
    opts: &TrainOptions,
) -> Result<Trajectory> {
    check_inputs(loss, data, eta, steps)?;
    let d = data.dim();
    let support = data.support();
    let indices = data.indices();
    let n = indices.len();
    let weights = data.weights();
    let stride = opts.stride(steps);
    let mut rng = stream_rng(seed, STREAM_SGD);

    let mut w = vec![0.0; d];
    let mut sum: Vec<CompensatedSum> = vec![CompensatedSum::new(); d];
    let mut online = CompensatedSum::new();
    let mut draw_counts = vec![0u64; support.len()];
    let mut max_iterate_norm = 0.0f64;
    let mut records = Vec::new();
    let mut iterates = opts.keep_iterates.then(Vec::new);

    for t in 1..=steps {
        for (s, &wk) in sum.iter_mut().zip(&w) {
            s.add(wk);
        }
        let wn = norm(&w);
        max_iterate_norm = max_iterate_norm.max(wn);
        if t == 1 || t == steps || t % stride == 0 {
            records.push(StepRecord {
                t,
                norm: wn,
                emp_risk: risk_only(loss, support, &weights, &w),
            });
        }
        if let Some(it) = iterates.as_mut() {
            it.push(w.clone());
        }
        let j = indices[rng.gen_range(0..n)] as usize;
        draw_counts[j] += 1;
        let z = &support[j];
        let (v, dl) = loss.value_and_derivative(dot(&w, z));
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at step {t}")));
        }
        online.add(v);
        for (wk, &zk) in w.iter_mut().zip(z) {
            *wk -= eta * (dl * zk);
        }
    }

    let avg: Vec<f64> = sum.iter().map(|s| s.value() / steps as f64).collect();
    let final_emp_risk = risk_only(loss, support, &weights, &avg);
    Ok(Trajectory {
        algo: Algo::Sgd,
        eta,
        steps,
        seed: Some(seed),
        records,
        final_model: avg,
        final_emp_risk,
        max_ascent: 0.0,
        iterates,
        sgd: Some(SgdDiagnostics {
            online_loss: online.value() / steps as f64,
            draw_counts,
            max_iterate_norm,
        }),
    })
}

/// `∇L̂(w) = (1/n) Σ ℓ'(w·z_i) z_i`.
pub fn empirical_gradient(loss: &LossFunction, data: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: w.len(),
        });
    }
    if data.is_empty() {
        return Err(invalid("data", "gradient of an empty dataset is undefined"));
    }
    let mut grad = vec![CompensatedSum::new(); w.len()];
    risk_and_gradient(loss, data.support(), &data.weights(), w, &mut grad);
    Ok(grad.iter().map(CompensatedSum::value).collect())
}

/// `‖∇L̂(w)‖² − 2β L̂(w)`; nonpositive for nonnegative β-smooth losses.
pub fn grad_norm_check(loss: &LossFunction, data: &Dataset, w: &[f64]) -> Result<f64> {
    let g = empirical_gradient(loss, data, w)?;
    let risk = crate::data::empirical_risk(w, loss, data)?;
    Ok(dot(&g, &g) - 2.0 * loss.beta() * risk)
}

/// `(1/T)Σ ℓ(w_t·z_{i_t}) − (1/T)Σ ℓ(w·z_{i_t})` for the realized draw sequence.
pub fn sgd_regret(traj: &Trajectory, loss: &LossFunction, data: &Dataset, w: &[f64]) -> Result<f64> {
    let diag = traj
        .sgd
        .as_ref()
        .ok_or_else(|| invalid("trajectory", "regret is defined for SGD runs only"))?;
    Ok(diag.online_loss - comparator_loss(diag, loss, data, w)?)
}

/// `(1/T)Σ ℓ(w·z_{i_t})` for a fixed comparator `w`.
pub fn comparator_loss(diag: &SgdDiagnostics, loss: &LossFunction, data: &Dataset, w: &[f64]) -> Result<f64> {
    if w.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: w.len(),
        });
    }
    let total: u64 = diag.draw_counts.iter().sum();
    Ok(data
        .support()
        .iter()
        .zip(&diag.draw_counts)
        .filter(|(_, &c)| c > 0)
        .map(|(z, &c)| c as f64 * loss.value(dot(w, z)))
        .collect::<CompensatedSum>()
        .value()
        / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{empirical_risk, make_big_t_instance, sample_dataset, DiscreteDistribution};
    use crate::loss::{make_logistic, make_quadratic_extension};
    use crate::tail::TailFunction;

    fn single_point(z: Vec<f64>, copies: usize) -> Dataset {
        let d = DiscreteDistribution::new(vec![z.clone()], vec![1.0], z.clone(), norm(&z)).unwrap();
        Dataset::from_counts(&d, vec![copies]).unwrap()
    }

    #[test]
    fn one_step_returns_zero() {
        let data = single_point(vec![1.0, 0.0], 1);
        let l = make_logistic();
        let g = run_gd(&l, &data, 2.0, 1).unwrap();
        assert_eq!(g.final_model, vec![0.0, 0.0]);
        assert_eq!(g.final_emp_risk, l.value(0.0));
        let s = run_sgd(&l, &data, 2.0, 1, 5).unwrap();
        assert_eq!(s.final_model, vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_first_step() {
        let data = single_point(vec![1.0, 0.0], 1);
        let g = run_gd(&make_logistic(), &data, 0.5, 2).unwrap();
        assert!((g.final_model[0] - 0.25).abs() < 1e-15);
        assert_eq!(g.final_model[1], 0.0);
    }

    #[test]
    fn eta_range_enforced() {
        let data = single_point(vec![1.0], 1);
        let l = make_logistic();
        assert!(run_gd(&l, &data, 2.0, 10).is_ok());
        assert!(run_gd(&l, &data, 2.01, 10).is_err());
        assert!(run_gd(&l, &data, 0.0, 10).is_err());
        assert!(run_gd(&l, &data, 1.0, 0).is_err());
        assert!(run_sgd(&l, &data, 3.0, 10, 0).is_err());
    }

    #[test]
    fn gd_descends_on_big_t() {
        let q = make_quadratic_extension(&TailFunction::exponential()).unwrap();
        let d = make_big_t_instance(1.0 / 16.0, 70).unwrap();
        let data = sample_dataset(&d, 70, 9);
        let g = run_gd(&q, &data, 0.5, 5000).unwrap();
        assert!(g.max_ascent <= 1e-12);
        assert!(g.final_emp_risk <= q.value(0.0));
        assert!((empirical_risk(&g.final_model, &q, &data).unwrap() - g.final_emp_risk).abs() < 1e-14);
        assert_eq!(g.records.first().unwrap().t, 1);
        assert_eq!(g.records.last().unwrap().t, 5000);
    }

    #[test]
    fn sgd_on_repeated_point_averages_gd_iterates() {
        let l = make_logistic();
        let data = single_point(vec![0.6, 0.8], 4);
        let opts = TrainOptions {
            keep_iterates: true,
            ..Default::default()
        };
        let g = run_gd_with(&l, &data, 1.5, 40, &opts).unwrap();
        let s = run_sgd_with(&l, &data, 1.5, 40, 77, &opts).unwrap();
        assert_eq!(g.iterates, s.iterates);
        let its = g.iterates.unwrap();
        for k in 0..2 {
            let mean = its.iter().map(|w| w[k]).sum::<f64>() / 40.0;
            assert!((mean - s.final_model[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_is_reproducible() {
        let q = make_quadratic_extension(&TailFunction::exponential()).unwrap();
        let d = make_big_t_instance(1.0 / 16.0, 50).unwrap();
        let data = sample_dataset(&d, 50, 1);
        let a = run_sgd(&q, &data, 0.5, 500, 3).unwrap();
        let b = run_sgd(&q, &data, 0.5, 500, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sgd.as_ref().unwrap().draw_counts.iter().sum::<u64>(), 500);
        assert_ne!(a.final_model, run_sgd(&q, &data, 0.5, 500, 4).unwrap().final_model);
    }

    #[test]
    fn grad_norm_examples() {
        let data = single_point(vec![1.0, 0.0], 1);
        let l = make_logistic();
        let v = grad_norm_check(&l, &data, &[0.0, 0.0]).unwrap();
        assert!((v - (0.25 - 0.5 * std::f64::consts::LN_2)).abs() < 1e-15);
        assert!((v + 0.0966).abs() < 1e-4);
        let far = grad_norm_check(&l, &data, &[60.0, 0.0]).unwrap();
        assert!(far.abs() < 1e-20);
        let q = make_quadratic_extension(&TailFunction::exponential()).unwrap();
        for k in 0..200 {
            let x = -20.0 + 0.2 * k as f64;
            assert!(grad_norm_check(&q, &data, &[x, 0.3]).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn regret_needs_sgd_run() {
        let data = single_point(vec![1.0], 1);
        let l = make_logistic();
        let g = run_gd(&l, &data, 1.0, 3).unwrap();
        assert!(sgd_regret(&g, &l, &data, &[1.0]).is_err());
        let s = run_sgd(&l, &data, 1.0, 3, 0).unwrap();
        let r = sgd_regret(&s, &l, &data, &[0.0]).unwrap();
        assert!(r <= 0.0);
    }

    #[test]
    fn regret_without_curvature_term_can_fail() {
        // One draw at w_1 = 0: the online loss is φ(0) = 1 while ℓ(0.4) = e^{-0.4}.
        let q = make_quadratic_extension(&TailFunction::exponential()).unwrap();
        let data = single_point(vec![1.0], 1);
        let s = run_sgd(&q, &data, 0.5, 1, 0).unwrap();
        let w = [0.4];
        let r = sgd_regret(&s, &q, &data, &w).unwrap();
        assert!((r - (1.0 - (-0.4f64).exp())).abs() < 1e-15);
        assert!(r > 0.16 / (2.0 * 0.5));
        let diag = s.sgd.as_ref().unwrap();
        let comp = comparator_loss(diag, &q, &data, &w).unwrap();
        assert!(diag.online_loss - 2.0 * comp <= 0.16 / 0.5);
    }
}
