//! Closed-form risk bounds with explicit constants.
//!
//! All logarithms are natural. Lower-bound constants follow the proof chains
//! (`1/(120en)`, `1/1152`) rather than unspecified `C`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::norm;
use crate::tail::{solve_epsilon_lower, solve_epsilon_upper, EpsilonCondition, TailFamily, TailFunction};

/// Default numeric constant of the upper bound (only `K < 10⁵` is known).
pub const DEFAULT_K: f64 = 1e5;
/// ε cap used for the few-steps lower branch.
pub const SMALL_T_CAP: f64 = 1.0 / 16.0;
/// Smallest sample size the many-steps construction supports.
pub const MIN_BIG_T_N: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Norm,
    OptError,
    UpperRisk,
    LowerRiskBigT,
    LowerRiskSmallT,
    RademacherGap,
    SgdEmpirical,
}

/// Inputs echoed into every report; unused ones are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wstar_eps_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emp_risk: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub inputs: BoundInputs,
    pub value: f64,
    pub terms: Vec<BoundTerm>,
}

impl BoundReport {
    fn from_terms(kind: BoundKind, inputs: BoundInputs, terms: Vec<(&str, f64)>) -> Self {
        let value = terms.iter().map(|t| t.1).sum();
        Self {
            kind,
            inputs,
            value,
            terms: terms
                .into_iter()
                .map(|(name, value)| BoundTerm {
                    name: name.to_string(),
                    value,
                })
                .collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {x}")))
    }
}

fn nonnegative(name: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be nonnegative and finite, got {x}")))
    }
}

fn unit_interval(name: &'static str, x: f64, include_one: bool) -> Result<()> {
    if x > 0.0 && (x < 1.0 || (include_one && x == 1.0)) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0, 1), got {x}")))
    }
}

fn steps_positive(steps: u64) -> Result<()> {
    if steps == 0 {
        Err(invalid("T", "must be a positive integer"))
    } else {
        Ok(())
    }
}

/// `w*_ε = (φ⁻¹(ε)/γ)·w*` for a unit separator `w*` with margin `γ`.
pub fn reference_point(phi: &TailFunction, gamma: f64, eps: f64, w_star: &[f64]) -> Result<Vec<f64>> {
    positive("gamma", gamma)?;
    let s = norm(w_star);
    if (s - 1.0).abs() > 1e-12 {
        return Err(invalid("w_star", format!("must be a unit vector, has norm {s}")));
    }
    let c = phi.inverse(eps)? / gamma;
    Ok(w_star.iter().map(|x| c * x).collect())
}

/// `2‖w*_ε‖ + 2√(ηεT)`.
pub fn norm_bound(wstar_eps_norm: f64, eta: f64, eps: f64, steps: u64) -> Result<f64> {
    nonnegative("wstar_eps_norm", wstar_eps_norm)?;
    nonnegative("eps", eps)?;
    positive("eta", eta)?;
    steps_positive(steps)?;
    Ok(2.0 * wstar_eps_norm + 2.0 * (eta * eps * steps as f64).sqrt())
}

/// `‖w*_ε‖²/(ηT) + 2ε`.
pub fn opt_error_bound(wstar_eps_norm: f64, eta: f64, eps: f64, steps: u64) -> Result<f64> {
    nonnegative("wstar_eps_norm", wstar_eps_norm)?;
    nonnegative("eps", eps)?;
    positive("eta", eta)?;
    steps_positive(steps)?;
    Ok(wstar_eps_norm * wstar_eps_norm / (eta * steps as f64) + 2.0 * eps)
}

/// The three-term upper bound, at the largest admissible ε.
pub fn upper_risk_bound(
    phi: &TailFunction,
    gamma: f64,
    eta: f64,
    steps: u64,
    n: usize,
    delta: f64,
    k: f64,
) -> Result<BoundReport> {
    unit_interval("delta", delta, false)?;
    positive("K", k)?;
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let eps = solve_epsilon_upper(phi, &EpsilonCondition::upper(gamma, eta, steps))?;
    upper_risk_bound_at(phi, gamma, eta, steps, n, delta, k, eps)
}

/// The upper bound evaluated at a given admissible ε.
#[allow(clippy::too_many_arguments)]
pub fn upper_risk_bound_at(
    phi: &TailFunction,
    gamma: f64,
    eta: f64,
    steps: u64,
    n: usize,
    delta: f64,
    k: f64,
    eps: f64,
) -> Result<BoundReport> {
    positive("gamma", gamma)?;
    positive("eta", eta)?;
    steps_positive(steps)?;
    let r = phi.inverse(eps)?;
    let (t, nf, g2) = (steps as f64, n as f64, gamma * gamma);
    let log_d = (1.0 / delta).ln();
    let r2 = r * r;
    let terms = vec![
        ("optimization", 4.0 * k * r2 / (g2 * eta * t)),
        (
            "generalization",
            32.0 * k * phi.beta() * r2 * (nf.ln().powi(3) + 4.0 * log_d) / (g2 * nf),
        ),
        ("cross", 4.0 * k * r2 * log_d / (g2 * eta * t * nf)),
    ];
    let inputs = BoundInputs {
        tail: Some(phi.label()),
        gamma: Some(gamma),
        eta: Some(eta),
        steps: Some(steps),
        n: Some(n),
        delta: Some(delta),
        eps: Some(eps),
        k: Some(k),
        beta: Some(phi.beta()),
        ..Default::default()
    };
    Ok(BoundReport::from_terms(BoundKind::UpperRisk, inputs, terms))
}

/// `(1/(120e·n))·(β/(1152γ²))·(φ⁻¹(128ε))²` at a given ε.
pub fn lower_big_t_at(phi: &TailFunction, gamma: f64, beta: f64, n: usize, eps: f64) -> Result<BoundReport> {
    positive("gamma", gamma)?;
    positive("beta", beta)?;
    positive("eps", eps)?;
    if n < MIN_BIG_T_N {
        return Err(invalid("n", format!("the many-steps branch needs n >= 35, got {n}")));
    }
    let arg = 128.0 * eps;
    if arg > phi.at_zero() {
        return Err(Error::Infeasible {
            reason: format!("128·ε = {arg} exceeds φ(0) = {}", phi.at_zero()),
            min_steps: None,
        });
    }
    let r = phi.inverse(arg)?;
    let prob = 1.0 / (120.0 * E * n as f64);
    let loss = beta / (1152.0 * gamma * gamma) * r * r;
    let inputs = BoundInputs {
        tail: Some(phi.label()),
        gamma: Some(gamma),
        n: Some(n),
        eps: Some(eps),
        beta: Some(beta),
        ..Default::default()
    };
    Ok(BoundReport {
        kind: BoundKind::LowerRiskBigT,
        inputs,
        value: prob * loss,
        terms: vec![
            BoundTerm {
                name: "event_probability".into(),
                value: prob,
            },
            BoundTerm {
                name: "conditional_loss".into(),
                value: loss,
            },
        ],
    })
}

/// Many-steps branch at ε from the lower solver (cap 1/256).
pub fn lower_risk_big_t(
    phi: &TailFunction,
    gamma: f64,
    eta: f64,
    steps: u64,
    n: usize,
    beta: f64,
) -> Result<BoundReport> {
    let eps = solve_epsilon_lower(phi, &EpsilonCondition::lower(gamma, eta, steps))?;
    let mut r = lower_big_t_at(phi, gamma, beta, n, eps)?;
    r.inputs.eta = Some(eta);
    r.inputs.steps = Some(steps);
    Ok(r)
}

/// `(φ⁻¹(8ε))²/(1152γ²Tη)` at a given ε.
pub fn lower_small_t_at(phi: &TailFunction, gamma: f64, eta: f64, steps: u64, eps: f64) -> Result<BoundReport> {
    positive("gamma", gamma)?;
    positive("eta", eta)?;
    positive("eps", eps)?;
    steps_positive(steps)?;
    let arg = 8.0 * eps;
    if arg > phi.at_zero() {
        return Err(Error::Infeasible {
            reason: format!("8·ε = {arg} exceeds φ(0) = {}", phi.at_zero()),
            min_steps: None,
        });
    }
    let r = phi.inverse(arg)?;
    let value = r * r / (1152.0 * gamma * gamma * steps as f64 * eta);
    let inputs = BoundInputs {
        tail: Some(phi.label()),
        gamma: Some(gamma),
        eta: Some(eta),
        steps: Some(steps),
        eps: Some(eps),
        ..Default::default()
    };
    Ok(BoundReport::from_terms(
        BoundKind::LowerRiskSmallT,
        inputs,
        vec![("few_steps", value)],
    ))
}

/// Few-steps branch at the crossing ε of `ηγ²T = (φ⁻¹(ε))²/ε`, capped at 1/16.
pub fn lower_risk_small_t(phi: &TailFunction, gamma: f64, eta: f64, steps: u64) -> Result<BoundReport> {
    let cond = EpsilonCondition::upper(gamma, eta, steps).with_cap(SMALL_T_CAP.min(phi.at_zero() / 8.0));
    let eps = solve_epsilon_upper(phi, &cond)?;
    lower_small_t_at(phi, gamma, eta, steps, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Branch {
    Feasible { report: BoundReport },
    Infeasible { reason: String },
}

impl Branch {
    fn from_result(r: Result<BoundReport>) -> Result<Self> {
        match r {
            Ok(report) => Ok(Branch::Feasible { report }),
            Err(Error::Infeasible { reason, .. }) => Ok(Branch::Infeasible { reason }),
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Branch::Feasible { report } => Some(report.value),
            Branch::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub big_t: Branch,
    pub small_t: Branch,
    /// Max over feasible branches (0 when neither is).
    pub combined: f64,
}

/// Both lower-bound branches and their maximum.
pub fn lower_risk_bound(
    phi: &TailFunction,
    gamma: f64,
    eta: f64,
    steps: u64,
    n: usize,
    beta: f64,
) -> Result<LowerBound> {
    if n < MIN_BIG_T_N {
        return Err(invalid("n", format!("the lower bound needs n >= 35, got {n}")));
    }
    let big_t = Branch::from_result(lower_risk_big_t(phi, gamma, eta, steps, n, beta))?;
    let small_t = Branch::from_result(lower_risk_small_t(phi, gamma, eta, steps))?;
    let combined = big_t
        .value()
        .into_iter()
        .chain(small_t.value())
        .fold(0.0, f64::max);
    Ok(LowerBound {
        big_t,
        small_t,
        combined,
    })
}

/// Uniform-convergence bound for smooth nonnegative losses over a norm ball.
pub fn rademacher_gap_bound(
    emp_risk: f64,
    b: f64,
    beta: f64,
    radius: f64,
    n: usize,
    delta: f64,
    k: f64,
) -> Result<BoundReport> {
    nonnegative("emp_risk", emp_risk)?;
    nonnegative("b", b)?;
    nonnegative("beta", beta)?;
    nonnegative("radius", radius)?;
    unit_interval("delta", delta, false)?;
    positive("K", k)?;
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let rn = radius / nf.sqrt();
    let conf = b * (1.0 / delta).ln() / nf;
    let terms = vec![
        ("empirical", emp_risk),
        ("complexity_cross", k * emp_risk.sqrt() * (beta.sqrt() * ln_n.powf(1.5) * rn)),
        ("confidence_cross", k * emp_risk.sqrt() * conf.sqrt()),
        ("complexity", k * beta * ln_n.powi(3) * rn * rn),
        ("confidence", k * conf),
    ];
    let inputs = BoundInputs {
        n: Some(n),
        delta: Some(delta),
        k: Some(k),
        beta: Some(beta),
        emp_risk: Some(emp_risk),
        b: Some(b),
        radius: Some(radius),
        ..Default::default()
    };
    Ok(BoundReport::from_terms(BoundKind::RademacherGap, inputs, terms))
}

/// High-probability empirical-risk bound for the SGD average iterate.
pub fn sgd_empirical_bound(
    wstar_eps_norm: f64,
    eta: f64,
    eps: f64,
    steps: u64,
    beta: f64,
    delta: f64,
) -> Result<BoundReport> {
    nonnegative("wstar_eps_norm", wstar_eps_norm)?;
    nonnegative("eps", eps)?;
    positive("eta", eta)?;
    nonnegative("beta", beta)?;
    unit_interval("delta", delta, true)?;
    steps_positive(steps)?;
    let t = steps as f64;
    let w2 = wstar_eps_norm * wstar_eps_norm;
    let b = 3.0 * eps + 16.0 * beta * w2 + 16.0 * eta * eps * t;
    let terms = vec![
        ("optimization", w2 / (eta * t)),
        ("reference", 3.0 * eps),
        ("concentration", 8.0 * b / t * (1.0 / delta).ln()),
    ];
    let inputs = BoundInputs {
        eta: Some(eta),
        steps: Some(steps),
        delta: Some(delta),
        eps: Some(eps),
        beta: Some(beta),
        wstar_eps_norm: Some(wstar_eps_norm),
        ..Default::default()
    };
    Ok(BoundReport::from_terms(BoundKind::SgdEmpirical, inputs, terms))
}

/// Closed-form asymptotic rate for one tail family, with log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub family: TailFamily,
    pub formula: String,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub steps: f64,
    pub n: f64,
    pub t_term: f64,
    pub n_term: f64,
    pub value: f64,
    /// Power of `T` in the `T`-term, ignoring logarithms.
    pub t_exponent: f64,
    /// Power of `n` in the `n`-term.
    pub n_exponent: f64,
    /// `d log(t_term) / d log T` at the given `T`.
    pub t_term_slope: f64,
    /// `d log(value) / d log T` at the given `(T, n)`.
    pub slope_t: f64,
    /// `d log(value) / d log n` at the given `(T, n)`.
    pub slope_n: f64,
}

pub fn rate_table(family: TailFamily, gamma: f64, steps: f64, n: f64) -> Result<RateEntry> {
    positive("gamma", gamma)?;
    if !(steps > 1.0 && steps.is_finite()) {
        return Err(invalid("T", format!("must exceed 1, got {steps}")));
    }
    positive("n", n)?;
    let g2 = gamma * gamma;
    let ln_t = steps.ln();
    // (t_term, n_term, d log t_term / d log T, d log n_term / d log T, formula, t_exponent)
    let (t_term, n_term, dt, dn, formula, t_exponent) = match family {
        TailFamily::Exponential => (
            ln_t * ln_t / (g2 * steps),
            ln_t * ln_t / (g2 * n),
            -1.0 + 2.0 / ln_t,
            2.0 / ln_t,
            "log^2(T)/(gamma^2 T) + log^2(T)/(gamma^2 n)".to_string(),
            -1.0,
        ),
        TailFamily::Polynomial { alpha } => {
            positive("alpha", alpha)?;
            let a = alpha / (2.0 + alpha);
            let c = (1.0 / gamma).powf(2.0 * a);
            (
                c * steps.powf(-a),
                c * steps.powf(2.0 / (2.0 + alpha)) / n,
                -a,
                2.0 / (2.0 + alpha),
                format!(
                    "(1/gamma)^({p}) (T^(-{a}) + T^({q})/n)",
                    p = 2.0 * a,
                    q = 2.0 / (2.0 + alpha)
                ),
                -a,
            )
        }
        TailFamily::StretchedExponential { alpha } => {
            positive("alpha", alpha)?;
            let l = ln_t.powf(2.0 / alpha);
            (
                l / (g2 * steps),
                l / (g2 * n),
                -1.0 + 2.0 / (alpha * ln_t),
                2.0 / (alpha * ln_t),
                format!("log^({p})(T)/(gamma^2 T) + log^({p})(T)/(gamma^2 n)", p = 2.0 / alpha),
                -1.0,
            )
        }
        TailFamily::Custom => {
            return Err(invalid("family", "no closed-form rate for custom tails"));
        }
    };
    let value = t_term + n_term;
    Ok(RateEntry {
        family,
        formula,
        gamma,
        steps,
        n,
        t_term,
        n_term,
        value,
        t_exponent,
        n_exponent: -1.0,
        t_term_slope: dt,
        slope_t: (t_term * dt + n_term * dn) / value,
        slope_n: -n_term / value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn reference_point_examples() {
        let phi = TailFunction::exponential();
        let w = reference_point(&phi, 0.1, 0.5, &[0.6, 0.8]).unwrap();
        assert!(close(norm(&w), LN_2 / 0.1, 1e-9));
        assert!(close(norm(&w), 6.9315, 1e-5));
        assert_eq!(norm(&reference_point(&phi, 0.1, 1.0, &[1.0, 0.0]).unwrap()), 0.0);
        assert!(reference_point(&phi, 0.1, 0.5, &[1.0, 1.0]).is_err());
        assert!(reference_point(&phi, 0.1, 1.5, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn norm_and_opt_error_arithmetic() {
        assert!(close(norm_bound(2.0, 0.5, 0.1, 100).unwrap(), 4.0 + 2.0 * 5f64.sqrt(), 1e-15));
        assert!(close(norm_bound(2.0, 0.5, 0.1, 100).unwrap(), 8.4721, 1e-5));
        assert_eq!(norm_bound(0.0, 0.5, 0.0, 1).unwrap(), 0.0);
        assert!(norm_bound(1.0, 0.5, 0.1, 0).is_err());
        let v = opt_error_bound(6.93, 0.5, 0.296, 1000).unwrap();
        assert!(close(v, 6.93 * 6.93 / 500.0 + 0.592, 1e-15));
        assert!((v - 0.688).abs() < 1e-3);
        assert_eq!(opt_error_bound(0.0, 0.5, 0.0, 10).unwrap(), 0.0);
        let a = opt_error_bound(3.0, 0.5, 0.0, 100).unwrap();
        let b = opt_error_bound(3.0, 0.5, 0.0, 200).unwrap();
        assert!(close(b, a / 2.0, 1e-15));
    }

    #[test]
    fn upper_bound_terms() {
        let phi = TailFunction::exponential();
        let r = upper_risk_bound(&phi, 0.1, 0.5, 1000, 10_000, 0.1, DEFAULT_K).unwrap();
        let eps = r.inputs.eps.unwrap();
        assert!((eps - 0.296).abs() < 2e-3);
        let l = (1.0 / eps).ln();
        assert!(close(r.term("optimization").unwrap(), 4e5 * l * l / (0.01 * 500.0), 1e-9));
        assert!(r.terms.iter().all(|t| t.value > 0.0));
        let sum: f64 = r.terms.iter().map(|t| t.value).sum();
        assert_eq!(sum, r.value);
        let big = upper_risk_bound(&phi, 0.1, 0.5, 1000, 1_000_000_000_000_000_000, 0.1, DEFAULT_K).unwrap();
        let t1 = big.term("optimization").unwrap();
        assert!((big.value - t1) / t1 < 1e-6);
        assert!(big.value < r.value);
    }

    #[test]
    fn upper_t_term_follows_log_squared_rate() {
        let phi = TailFunction::exponential();
        let gamma = 0.1;
        let at = |t: u64| {
            upper_risk_bound(&phi, gamma, 0.5, t, 1000, 0.1, 1.0)
                .unwrap()
                .term("optimization")
                .unwrap()
        };
        // optimization·γ²T/log²T = (4/η)(φ⁻¹(ε)/log T)², which climbs towards 4/η.
        let ratio = |t: u64| at(t) * gamma * gamma * t as f64 / (t as f64).ln().powi(2);
        let mut prev = 0.0;
        for k in 4..=14 {
            let r = ratio(10u64.pow(k));
            assert!(r > prev && r < 8.0, "T=1e{k}: {r}");
            prev = r;
        }
        assert!(ratio(100_000_000) > 1.0);
    }

    #[test]
    fn lower_big_t_example() {
        let phi = TailFunction::exponential();
        let r = lower_big_t_at(&phi, 1.0 / 16.0, 1.0, 64, 1.0 / 256.0).unwrap();
        let expected = LN_2 * LN_2 / (120.0 * E * 1152.0 / 256.0 * 64.0);
        assert!(close(r.value, expected, 1e-9));
        assert!(matches!(
            lower_big_t_at(&phi, 1.0 / 16.0, 1.0, 64, 0.01),
            Err(Error::Infeasible { .. })
        ));
        assert!(lower_big_t_at(&phi, 1.0 / 16.0, 1.0, 34, 1.0 / 256.0).is_err());
    }

    #[test]
    fn lower_branches_vs_steps() {
        let phi = TailFunction::exponential();
        let gamma = 1.0 / 16.0;
        let few = lower_risk_bound(&phi, gamma, 0.5, 1000, 100, 1.0).unwrap();
        assert!(matches!(few.big_t, Branch::Infeasible { .. }));
        assert!(few.small_t.value().unwrap() > 0.0);
        let many = lower_risk_bound(&phi, gamma, 0.5, 5_000_000, 100, 1.0).unwrap();
        let bt = many.big_t.value().unwrap();
        assert!(close(bt, LN_2 * LN_2 / (120.0 * E * 1152.0 / 256.0 * 100.0), 1e-9));
        let later = lower_risk_bound(&phi, gamma, 0.5, 500_000_000, 100, 1.0).unwrap();
        assert_eq!(later.big_t.value().unwrap(), bt);
        assert!(later.small_t.value().unwrap() < many.small_t.value().unwrap());
        assert_eq!(many.combined, bt.max(many.small_t.value().unwrap()));
    }

    #[test]
    fn small_t_at_instance_eps() {
        let phi = TailFunction::exponential();
        let r = lower_small_t_at(&phi, 1.0 / 16.0, 0.5, 100, 1.0 / 16.0).unwrap();
        assert!(close(r.value, LN_2 * LN_2 * 256.0 / (1152.0 * 50.0), 1e-9));
    }

    #[test]
    fn upper_dominates_lower() {
        for (phi, eta) in [
            (TailFunction::exponential(), 0.5),
            (TailFunction::polynomial(2.0).unwrap(), 1.0 / 3.0),
        ] {
            for &steps in &[100u64, 10_000, 10_000_000] {
                for &n in &[35usize, 1000, 100_000] {
                    let gamma = 1.0 / 16.0;
                    let up = upper_risk_bound(&phi, gamma, eta, steps, n, 0.1, DEFAULT_K).unwrap();
                    let lo = lower_risk_bound(&phi, gamma, eta, steps, n, phi.beta()).unwrap();
                    assert!(up.value >= lo.combined, "T={steps} n={n}");
                }
            }
        }
    }

    #[test]
    fn rademacher_example_and_monotonicity() {
        let r = rademacher_gap_bound(0.0, 1.0, 1.0, 1.0, 100, 0.1, DEFAULT_K).unwrap();
        let l = 100f64.ln();
        assert!(close(r.value, 1e5 * (l.powi(3) / 100.0 + 10f64.ln() / 100.0), 1e-12));
        let base = [0.2, 1.0, 1.0, 3.0, 0.1];
        let f = |v: [f64; 5]| rademacher_gap_bound(v[0], v[1], v[2], v[3], 500, v[4], 10.0).unwrap().value;
        let f0 = f(base);
        for i in 0..4 {
            let mut v = base;
            v[i] *= 1.5;
            assert!(f(v) >= f0);
        }
        let mut v = base;
        v[4] = 0.05;
        assert!(f(v) >= f0);
        let huge = rademacher_gap_bound(0.3, 1.0, 1.0, 1.0, usize::MAX >> 8, 0.1, 1.0).unwrap();
        assert!((huge.value - 0.3) < 1e-3);
    }

    #[test]
    fn sgd_bound_examples() {
        assert_eq!(sgd_empirical_bound(0.0, 0.5, 0.0, 100, 1.0, 0.1).unwrap().value, 0.0);
        let d1 = sgd_empirical_bound(2.0, 0.5, 0.1, 100, 1.0, 1.0).unwrap();
        assert!(close(d1.value, 4.0 / 50.0 + 0.3, 1e-15));
        let r = sgd_empirical_bound(6.93, 0.5, 0.05, 10_000, 1.0, 0.1).unwrap();
        let w2 = 6.93f64 * 6.93;
        let b = 0.15 + 16.0 * w2 + 16.0 * 0.5 * 0.05 * 1e4;
        assert!(close(r.term("optimization").unwrap(), w2 / 5000.0, 1e-15));
        assert!(close(r.term("reference").unwrap(), 0.15, 1e-15));
        assert!(close(r.term("concentration").unwrap(), 8.0 * b / 1e4 * 10f64.ln(), 1e-15));
    }

    #[test]
    fn rate_rows() {
        let p2 = rate_table(TailFamily::Polynomial { alpha: 2.0 }, 0.1, 1e3, 1e12).unwrap();
        assert_eq!(p2.t_exponent, -0.5);
        assert!((p2.slope_t + 0.5).abs() < 1e-6);
        let e = rate_table(TailFamily::Exponential, 0.1, 1e8, 1e3).unwrap();
        assert_eq!(e.n_exponent, -1.0);
        assert!((e.slope_n + 1.0).abs() < 1e-4);
        assert!(close(e.t_term_slope, -1.0 + 2.0 / 1e8f64.ln(), 1e-15));
        let big = rate_table(TailFamily::Polynomial { alpha: 1e9 }, 0.1, 1e3, 1e3).unwrap();
        assert!((big.t_exponent + 1.0).abs() < 1e-8);
        assert!(rate_table(TailFamily::Custom, 0.1, 1e3, 1e3).is_err());
    }

    #[test]
    fn rate_slopes_match_log_derivative() {
        let fams = [
            TailFamily::Exponential,
            TailFamily::Polynomial { alpha: 2.0 },
            TailFamily::Polynomial { alpha: 0.7 },
            TailFamily::StretchedExponential { alpha: 2.0 },
            TailFamily::StretchedExponential { alpha: 0.5 },
        ];
        let h: f64 = 1e-5;
        for fam in fams {
            for &(t, n) in &[(1e2, 1e4), (1e4, 1e2), (1e6, 1e6)] {
                let r = rate_table(fam, 0.2, t, n).unwrap();
                let v = |t: f64, n: f64| rate_table(fam, 0.2, t, n).unwrap().value.ln();
                let fd_t = (v(t * h.exp(), n) - v(t * (-h).exp(), n)) / (2.0 * h);
                let fd_n = (v(t, n * h.exp()) - v(t, n * (-h).exp())) / (2.0 * h);
                assert!((r.slope_t - fd_t).abs() < 1e-8, "{fam:?} T={t}");
                assert!((r.slope_n - fd_n).abs() < 1e-8, "{fam:?} n={n}");
                let tt = |t: f64| rate_table(fam, 0.2, t, n).unwrap().t_term.ln();
                let fd = (tt(t * h.exp()) - tt(t * (-h).exp())) / (2.0 * h);
                assert!((r.t_term_slope - fd).abs() < 1e-8);
            }
        }
    }
}
