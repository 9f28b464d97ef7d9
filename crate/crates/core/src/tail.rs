//! Tail functions: normalized decay-rate descriptors for the loss classes.
//!
//! A tail function is nonnegative, convex, 1-Lipschitz, β-smooth and strictly
//! decreasing on `[0, ∞)`, with `φ(0) ≥ 1/2` and `|φ'(0)| ≥ 1/2`. The
//! built-in families are normalized so that these hold exactly while keeping
//! the asymptotic decay of `e^{-u}`, `u^{-α}` and `e^{-u^α}` respectively.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{all_passed, worst, CheckResult, GridSpec, Tracker};

/// Relative accuracy of [`TailFunction::inverse`].
pub const TOL_INV: f64 = 1e-10;
/// Relative resolution of the ε-solvers (in ε).
pub const TOL_EPS: f64 = 1e-6;
/// Smallest ε the upper solver will consider.
pub const EPS_FLOOR: f64 = 1e-300;
/// Default ε caps.
pub const UPPER_CAP: f64 = 0.5;
pub const LOWER_CAP: f64 = 1.0 / 256.0;

const MAX_BISECTION_STEPS: usize = 200;
const MAX_EXPANSIONS: usize = 1100;
/// Relative slack when comparing `ηγ²T` against `(φ⁻¹(ε))²/ε`.
const CONDITION_RTOL: f64 = 1e-12;
/// Absolute slack for grid certificate comparisons.
pub(crate) const CERT_SLACK: f64 = 1e-12;
/// Multiplicative slack on β for divided-difference smoothness checks.
pub(crate) const SMOOTH_SLACK: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailFamily {
    Exponential,
    Polynomial { alpha: f64 },
    StretchedExponential { alpha: f64 },
    Custom,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    Exponential,
    Polynomial {
        alpha: f64,
    },
    /// `exp(c^α − (λu + c)^α)`.
    Stretched {
        alpha: f64,
        shift: f64,
        scale: f64,
    },
    Custom {
        label: String,
        eval: ScalarFn,
        deriv: ScalarFn,
    },
}

/// A tail function φ together with its smoothness constant β.
#[derive(Clone)]
pub struct TailFunction {
    family: TailFamily,
    beta: f64,
    shape: Shape,
}

impl fmt::Debug for TailFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailFunction")
            .field("family", &self.family)
            .field("beta", &self.beta)
            .field("label", &self.label())
            .finish()
    }
}

impl TailFunction {
    /// `φ(u) = e^{-u}`, β = 1.
    pub fn exponential() -> Self {
        Self {
            family: TailFamily::Exponential,
            beta: 1.0,
            shape: Shape::Exponential,
        }
    }

    /// `φ(u) = (1 + u/α)^{-α}`, β = (α+1)/α.
    pub fn polynomial(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("alpha", format!("polynomial tail needs alpha > 0, got {alpha}")));
        }
        Ok(Self {
            family: TailFamily::Polynomial { alpha },
            beta: (alpha + 1.0) / alpha,
            shape: Shape::Polynomial { alpha },
        })
    }

    /// `φ(u) = exp(c^α − (λu + c)^α)` with `c`, `λ` chosen so that φ is convex
    /// with `φ'(0) = −1`; β is found numerically.
    pub fn stretched_exponential(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(
                "alpha",
                format!("stretched exponential tail needs alpha > 0, got {alpha}"),
            ));
        }
        let family = TailFamily::StretchedExponential { alpha };
        if (alpha - 1.0).abs() < 1e-12 {
            return Ok(Self {
                family,
                beta: 1.0,
                shape: Shape::Exponential,
            });
        }
        let (shift, scale) = if alpha > 1.0 {
            // Inflection point of e^{-v^α} sits at v^α = (α−1)/α.
            let c = ((alpha - 1.0) / alpha).powf(1.0 / alpha);
            (c, 1.0 / (alpha * c.powf(alpha - 1.0)))
        } else {
            (alpha.powf(1.0 / (1.0 - alpha)), 1.0)
        };
        let beta = stretched_beta(alpha, shift, scale);
        Ok(Self {
            family,
            beta,
            shape: Shape::Stretched { alpha, shift, scale },
        })
    }

    /// A user-supplied tail. Axioms are not checked here; see [`check_tail_axioms`].
    pub fn custom<E, D>(label: impl Into<String>, eval: E, deriv: D, beta: f64) -> Result<Self>
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self {
            family: TailFamily::Custom,
            beta,
            shape: Shape::Custom {
                label: label.into(),
                eval: Arc::new(eval),
                deriv: Arc::new(deriv),
            },
        })
    }

    /// Replace β with a larger constant (a β-smooth map is β'-smooth for β' ≥ β).
    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        if beta < self.beta * (1.0 - 1e-12) {
            return Err(invalid(
                "beta",
                format!(
                    "{beta} is below the intrinsic smoothness {} of the {} tail",
                    self.beta,
                    self.label()
                ),
            ));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn family(&self) -> TailFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn label(&self) -> String {
        match (&self.shape, self.family) {
            (Shape::Custom { label, .. }, _) => label.clone(),
            (_, TailFamily::Exponential) => "exponential".into(),
            (_, TailFamily::Polynomial { alpha }) => format!("polynomial({alpha})"),
            (_, TailFamily::StretchedExponential { alpha }) => {
                format!("stretched_exponential({alpha})")
            }
            (_, TailFamily::Custom) => "custom".into(),
        }
    }

    /// φ(u) without domain checks; callers guarantee `u ≥ 0`.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.value_and_derivative(u).0
    }

    /// φ'(u) without domain checks.
    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.value_and_derivative(u).1
    }

    #[inline]
    pub fn value_and_derivative(&self, u: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Exponential => {
                let e = (-u).exp();
                (e, -e)
            }
            Shape::Polynomial { alpha } => {
                let base = 1.0 + u / alpha;
                let v = (-alpha * (u / alpha).ln_1p()).exp();
                (v, -v / base)
            }
            Shape::Stretched { alpha, shift, scale } => {
                let v = scale * u + shift;
                let va = v.powf(*alpha);
                let val = (shift.powf(*alpha) - va).exp();
                (val, -scale * alpha * va / v * val)
            }
            Shape::Custom { eval, deriv, .. } => (eval(u), deriv(u)),
        }
    }

    /// Checked evaluation of φ(u).
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(invalid("u", format!("tail functions are defined on u >= 0, got {u}")));
        }
        Ok(self.value(u))
    }

    pub fn at_zero(&self) -> f64 {
        self.value(0.0)
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.derivative(0.0)
    }

    /// φ⁻¹(ε) by bracket doubling from `u = 1` and bisection.
    ///
    /// The returned `u` satisfies `φ(u) ≤ ε` (it is the upper end of the final
    /// bracket) and `|φ(u) − ε| ≤ TOL_INV·ε`.
    pub fn inverse(&self, eps: f64) -> Result<f64> {
        let phi0 = self.at_zero();
        if !(eps > 0.0 && eps <= phi0) {
            return Err(invalid(
                "eps",
                format!("must lie in (0, φ(0)] = (0, {phi0}], got {eps}"),
            ));
        }
        if eps == phi0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut expansions = 0;
        while self.value(hi) > eps {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > MAX_EXPANSIONS || !hi.is_finite() {
                return Err(Error::Numeric(format!(
                    "could not bracket φ⁻¹({eps}) for the {} tail",
                    self.label()
                )));
            }
        }
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let err = (self.value(hi) - eps).abs();
        if err > TOL_INV * eps {
            return Err(Error::Numeric(format!(
                "φ⁻¹({eps}) for the {} tail did not reach tolerance (residual {err:e})",
                self.label()
            )));
        }
        Ok(hi)
    }

    /// `(φ⁻¹(ε))² / ε`, the quantity the ε-conditions compare against `ηγ²T`.
    ///
    /// Heavy tails can put φ⁻¹(ε) beyond `1e300`; the condition is then `+∞`.
    pub fn condition(&self, eps: f64) -> Result<f64> {
        if eps > 0.0 && self.value(1e300) > eps {
            return Ok(f64::INFINITY);
        }
        let u = self.inverse(eps)?;
        Ok(u * u / eps)
    }

    /// Default certificate grid: dense on `[0, 20]`, geometric out to
    /// `max(20, 5·φ⁻¹(1e−12))`.
    pub fn default_grid(&self) -> GridSpec {
        let reach = if self.at_zero() > 1e-12 {
            self.inverse(1e-12).map(|u| 5.0 * u).unwrap_or(20.0)
        } else {
            20.0
        };
        let hi = reach.max(20.0);
        GridSpec {
            lo: 0.0,
            knee: 20.0,
            hi,
            linear_points: if hi > 20.0 { 3072 } else { 4096 },
            log_points: if hi > 20.0 { 1024 } else { 0 },
        }
    }
}

fn stretched_beta(alpha: f64, shift: f64, scale: f64) -> f64 {
    // φ''(u) as a function of v = λu + c.
    let curvature = |v: f64| {
        let va = v.powf(alpha);
        scale * scale * alpha * v.powf(alpha - 2.0) * (alpha * va - (alpha - 1.0))
            * (shift.powf(alpha) - va).exp()
    };
    let v_end = (shift.powf(alpha) + 60.0).powf(1.0 / alpha);
    let samples = 20_000;
    let step = (v_end - shift) / samples as f64;
    let (mut best_i, mut best) = (0usize, curvature(shift));
    for i in 1..=samples {
        let c = curvature(shift + step * i as f64);
        if c > best {
            best = c;
            best_i = i;
        }
    }
    // Golden-section refinement around the best sample.
    let mut a = shift + step * best_i.saturating_sub(1) as f64;
    let mut b = shift + step * (best_i + 1).min(samples) as f64;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if curvature(x1) >= curvature(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    best.max(curvature(0.5 * (a + b))) * (1.0 + 1e-9)
}

/// Config-level description of a tail function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub family: TailFamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFamilyName {
    Exponential,
    Polynomial,
    StretchedExponential,
}

impl TailSpec {
    pub fn exponential() -> Self {
        Self {
            family: TailFamilyName::Exponential,
            alpha: None,
            beta: None,
        }
    }

    pub fn polynomial(alpha: f64) -> Self {
        Self {
            family: TailFamilyName::Polynomial,
            alpha: Some(alpha),
            beta: None,
        }
    }

    pub fn stretched_exponential(alpha: f64) -> Self {
        Self {
            family: TailFamilyName::StretchedExponential,
            alpha: Some(alpha),
            beta: None,
        }
    }

    pub fn build(&self) -> Result<TailFunction> {
        let need_alpha = || {
            self.alpha
                .ok_or_else(|| invalid("tail.alpha", "required for this tail family"))
        };
        let tail = match self.family {
            TailFamilyName::Exponential => TailFunction::exponential(),
            TailFamilyName::Polynomial => TailFunction::polynomial(need_alpha()?)?,
            TailFamilyName::StretchedExponential => {
                TailFunction::stretched_exponential(need_alpha()?)?
            }
        };
        match self.beta {
            Some(beta) => tail.with_beta(beta),
            None => Ok(tail),
        }
    }
}

/// Grid certificate for the tail-function axioms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub tail: String,
    pub beta: f64,
    pub grid: GridSpec,
    pub checks: Vec<CheckResult>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }

    pub fn worst_violation(&self) -> f64 {
        worst(&self.checks)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn eval_tail(phi: &TailFunction, u: f64) -> Result<f64> {
    phi.eval(u)
}

pub fn tail_inverse(phi: &TailFunction, eps: f64) -> Result<f64> {
    phi.inverse(eps)
}

/// Evaluate every tail axiom on `grid`.
pub fn check_tail_axioms(phi: &TailFunction, grid: &GridSpec) -> AxiomReport {
    let pts = grid.points();
    let vals: Vec<(f64, f64)> = pts.iter().map(|&u| phi.value_and_derivative(u)).collect();
    let beta = phi.beta();

    let mut nonneg = Tracker::new("nonnegative", CERT_SLACK);
    let mut decreasing = Tracker::new("strictly_decreasing", CERT_SLACK);
    let mut convex = Tracker::new("convex", CERT_SLACK);
    let mut lipschitz = Tracker::new("one_lipschitz", CERT_SLACK);
    let mut smooth = Tracker::new("beta_smooth", CERT_SLACK);
    let mut at_zero = Tracker::new("value_at_zero", CERT_SLACK);
    let mut slope_zero = Tracker::new("slope_at_zero", CERT_SLACK);

    for (i, (&u, &(v, d))) in pts.iter().zip(&vals).enumerate() {
        nonneg.observe(-v, u);
        lipschitz.observe(d.abs() - 1.0, u);
        if i + 1 < pts.len() {
            let (u2, (v2, d2)) = (pts[i + 1], vals[i + 1]);
            if v2 >= v && v >= f64::MIN_POSITIVE {
                decreasing.fail_at(v2 - v, u2);
            } else {
                decreasing.observe(v2 - v, u2);
            }
            convex.observe(d - d2, u2);
            smooth.observe((d2 - d).abs() - beta * SMOOTH_SLACK * (u2 - u), u2);
        }
    }
    let (v0, d0) = phi.value_and_derivative(0.0);
    at_zero.observe(0.5 - v0, 0.0);
    slope_zero.observe(0.5 - d0.abs(), 0.0);

    AxiomReport {
        tail: phi.label(),
        beta,
        grid: *grid,
        checks: [nonneg, decreasing, convex, lipschitz, smooth, at_zero, slope_zero]
            .into_iter()
            .map(Tracker::finish)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// Parameters of the ε-condition `ηγ²T ≶ (φ⁻¹(ε))²/ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCondition {
    pub gamma: f64,
    pub eta: f64,
    pub steps: u64,
    pub side: Side,
    pub cap: f64,
}

impl EpsilonCondition {
    pub fn upper(gamma: f64, eta: f64, steps: u64) -> Self {
        Self {
            gamma,
            eta,
            steps,
            side: Side::Upper,
            cap: UPPER_CAP,
        }
    }

    pub fn lower(gamma: f64, eta: f64, steps: u64) -> Self {
        Self {
            gamma,
            eta,
            steps,
            side: Side::Lower,
            cap: LOWER_CAP,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    /// `ηγ²T`.
    pub fn budget(&self) -> f64 {
        self.eta * self.gamma * self.gamma * self.steps as f64
    }

    fn validate(&self, phi: &TailFunction, side: Side) -> Result<()> {
        if self.side != side {
            return Err(invalid("side", format!("expected {side:?} condition")));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if self.steps == 0 {
            return Err(invalid("T", "must be a positive integer"));
        }
        let phi0 = phi.at_zero();
        if !(self.cap > 0.0 && self.cap <= phi0) {
            return Err(invalid("cap", format!("must lie in (0, φ(0)] = (0, {phi0}]")));
        }
        Ok(())
    }
}

/// Largest ε ≤ cap with `ηγ²T ≤ (φ⁻¹(ε))²/ε`, by bisection on `log ε`.
pub fn solve_epsilon_upper(phi: &TailFunction, cond: &EpsilonCondition) -> Result<f64> {
    cond.validate(phi, Side::Upper)?;
    let budget = cond.budget();
    let holds = |eps: f64| -> Result<bool> {
        Ok(phi.condition(eps)? >= budget * (1.0 - CONDITION_RTOL))
    };
    if holds(cond.cap)? {
        return Ok(cond.cap);
    }
    if !holds(EPS_FLOOR)? {
        return Err(Error::Infeasible {
            reason: format!("no ε ≥ {EPS_FLOOR:e} satisfies ηγ²T = {budget} ≤ (φ⁻¹(ε))²/ε"),
            min_steps: None,
        });
    }
    let (mut lo, mut hi) = (EPS_FLOOR, cond.cap);
    while hi / lo > 1.0 + TOL_EPS {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest ε ≤ cap with `ηγ²T ≥ (φ⁻¹(ε))²/ε`.
///
/// Because `(φ⁻¹(ε))²/ε` decreases in ε, this is either `cap` itself or
/// infeasible; the error carries the smallest feasible `T`.
pub fn solve_epsilon_lower(phi: &TailFunction, cond: &EpsilonCondition) -> Result<f64> {
    cond.validate(phi, Side::Lower)?;
    let threshold = phi.condition(cond.cap)?;
    let budget = cond.budget();
    if budget >= threshold * (1.0 - CONDITION_RTOL) {
        return Ok(cond.cap);
    }
    let min_steps = (threshold / (cond.eta * cond.gamma * cond.gamma)).ceil();
    Err(Error::Infeasible {
        reason: format!(
            "ηγ²T = {budget} is below (φ⁻¹(ε))²/ε = {threshold} at ε = {}; need T ≥ {min_steps}",
            cond.cap
        ),
        min_steps: Some(min_steps),
    })
}

/// Smallest `T` for which the lower condition is feasible at `cap`.
pub fn lower_feasibility_threshold(phi: &TailFunction, gamma: f64, eta: f64, cap: f64) -> Result<u64> {
    let threshold = phi.condition(cap)?;
    Ok((threshold / (eta * gamma * gamma)).ceil() as u64)
}
