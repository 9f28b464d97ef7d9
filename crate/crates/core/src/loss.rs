//! Loss functions and membership certificates for the φ-tailed class.
//!
//! The two extension constructions splice a tail function onto the negative
//! half-line: quadratically (smoothness saturated) or linearly (1-Lipschitz).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{all_passed, worst, CheckResult, GridSpec, Tracker};
use crate::tail::{check_tail_axioms, TailFunction, CERT_SLACK, SMOOTH_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    QuadraticExtension,
    LinearExtension,
    Logistic,
    SquaredHinge,
    Custom,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Quadratic { tail: TailFunction, phi0: f64, dphi0: f64 },
    Linear { tail: TailFunction, phi0: f64, dphi0: f64 },
    Logistic,
    SquaredHinge,
    Custom { eval: ScalarFn, deriv: ScalarFn },
}

/// A scalar classification loss ℓ applied to margins `w·z`.
#[derive(Clone)]
pub struct LossFunction {
    kind: LossKind,
    label: String,
    beta: f64,
    repr: Repr,
}

impl fmt::Debug for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossFunction")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("beta", &self.beta)
            .finish()
    }
}

fn require_tail_axioms(phi: &TailFunction) -> Result<()> {
    let report = check_tail_axioms(phi, &phi.default_grid());
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Error::Certificate(format!(
            "tail {} fails axioms: {}",
            phi.label(),
            names.join(", ")
        )))
    }
}

/// `ℓ(x) = φ(x)` for `x ≥ 0`, `φ(0) + φ'(0)x + (β/2)x²` for `x < 0`.
pub fn make_quadratic_extension(phi: &TailFunction) -> Result<LossFunction> {
    require_tail_axioms(phi)?;
    Ok(LossFunction {
        kind: LossKind::QuadraticExtension,
        label: format!("quadratic_extension[{}]", phi.label()),
        beta: phi.beta(),
        repr: Repr::Quadratic {
            tail: phi.clone(),
            phi0: phi.at_zero(),
            dphi0: phi.slope_at_zero(),
        },
    })
}

/// `ℓ(x) = φ(x)` for `x ≥ 0`, `φ(0) + φ'(0)x` for `x < 0`.
pub fn make_linear_extension(phi: &TailFunction) -> Result<LossFunction> {
    require_tail_axioms(phi)?;
    Ok(LossFunction {
        kind: LossKind::LinearExtension,
        label: format!("linear_extension[{}]", phi.label()),
        beta: phi.beta(),
        repr: Repr::Linear {
            tail: phi.clone(),
            phi0: phi.at_zero(),
            dphi0: phi.slope_at_zero(),
        },
    })
}

/// `ℓ(u) = log(1 + e^{−u})`, β = 1/4.
pub fn make_logistic() -> LossFunction {
    LossFunction {
        kind: LossKind::Logistic,
        label: "logistic".into(),
        beta: 0.25,
        repr: Repr::Logistic,
    }
}

/// `ℓ(u) = max(0, 1 − u)²`, β = 2. Not strictly decreasing past `u = 1`.
pub fn make_squared_hinge() -> LossFunction {
    LossFunction {
        kind: LossKind::SquaredHinge,
        label: "squared_hinge".into(),
        beta: 2.0,
        repr: Repr::SquaredHinge,
    }
}

impl LossFunction {
    pub fn custom<E, D>(label: impl Into<String>, eval: E, deriv: D, beta: f64) -> Result<Self>
    where
        E: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self {
            kind: LossKind::Custom,
            label: label.into(),
            beta,
            repr: Repr::Custom {
                eval: Arc::new(eval),
                deriv: Arc::new(deriv),
            },
        })
    }

    /// `max(0, 1 − u)` with a nominal β = 1; a non-smooth counterexample.
    pub fn hinge() -> Self {
        Self::custom(
            "hinge",
            |u| (1.0 - u).max(0.0),
            |u| if u < 1.0 { -1.0 } else { 0.0 },
            1.0,
        )
        .expect("constant beta is valid")
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source_tail(&self) -> Option<&TailFunction> {
        match &self.repr {
            Repr::Quadratic { tail, .. } | Repr::Linear { tail, .. } => Some(tail),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.value_and_derivative(u).0
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.value_and_derivative(u).1
    }

    #[inline]
    pub fn value_and_derivative(&self, u: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Quadratic { tail, phi0, dphi0 } => {
                if u >= 0.0 {
                    tail.value_and_derivative(u)
                } else {
                    (
                        phi0 + dphi0 * u + 0.5 * self.beta * u * u,
                        dphi0 + self.beta * u,
                    )
                }
            }
            Repr::Linear { tail, phi0, dphi0 } => {
                if u >= 0.0 {
                    tail.value_and_derivative(u)
                } else {
                    (phi0 + dphi0 * u, *dphi0)
                }
            }
            Repr::Logistic => {
                let v = if u > 0.0 {
                    (-u).exp().ln_1p()
                } else {
                    -u + u.exp().ln_1p()
                };
                let d = if u > 0.0 {
                    let e = (-u).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + u.exp())
                };
                (v, d)
            }
            Repr::SquaredHinge => {
                let m = (1.0 - u).max(0.0);
                (m * m, -2.0 * m)
            }
            Repr::Custom { eval, deriv } => (eval(u), deriv(u)),
        }
    }

    /// Left-branch value and slope at the splice point, for extension kinds.
    fn left_limit_at_zero(&self) -> Option<(f64, f64)> {
        match &self.repr {
            Repr::Quadratic { phi0, dphi0, .. } | Repr::Linear { phi0, dphi0, .. } => {
                let x = -f64::MIN_POSITIVE;
                Some(match self.kind {
                    LossKind::QuadraticExtension => {
                        (phi0 + dphi0 * x + 0.5 * self.beta * x * x, dphi0 + self.beta * x)
                    }
                    _ => (phi0 + dphi0 * x, *dphi0),
                })
            }
            _ => None,
        }
    }

    /// Default membership grid: dense on `[−10, 20]`, geometric to the tail's reach.
    pub fn default_grid(phi: &TailFunction) -> GridSpec {
        let hi = phi.default_grid().hi;
        GridSpec {
            lo: -10.0,
            knee: 20.0,
            hi,
            linear_points: 4096,
            log_points: if hi > 20.0 { 1024 } else { 0 },
        }
    }
}

/// Config name of a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    QuadraticExtension,
    LinearExtension,
    Logistic,
    SquaredHinge,
    /// Non-smooth counterexample, available for certificate demonstrations.
    Hinge,
}

impl LossName {
    pub fn as_str(self) -> &'static str {
        match self {
            LossName::QuadraticExtension => "quadratic_extension",
            LossName::LinearExtension => "linear_extension",
            LossName::Logistic => "logistic",
            LossName::SquaredHinge => "squared_hinge",
            LossName::Hinge => "hinge",
        }
    }

    pub fn build(self, phi: &TailFunction) -> Result<LossFunction> {
        match self {
            LossName::QuadraticExtension => make_quadratic_extension(phi),
            LossName::LinearExtension => make_linear_extension(phi),
            LossName::Logistic => Ok(make_logistic()),
            LossName::SquaredHinge => Ok(make_squared_hinge()),
            LossName::Hinge => Ok(LossFunction::hinge()),
        }
    }
}

/// Grid certificate for membership of a loss in the φ-tailed class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub loss: String,
    pub tail: String,
    pub beta: f64,
    pub grid: GridSpec,
    pub checks: Vec<CheckResult>,
}

impl MembershipReport {
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

const FD_STEP: f64 = 1e-5;
const PAIR_POINTS: usize = 256;

pub fn check_loss_class(loss: &LossFunction, phi: &TailFunction, grid: &GridSpec) -> MembershipReport {
    let pts = grid.points();
    let vals: Vec<(f64, f64)> = pts.iter().map(|&u| loss.value_and_derivative(u)).collect();
    let beta = loss.beta();

    let mut nonneg = Tracker::new("nonnegative", CERT_SLACK);
    let mut decreasing = Tracker::new("strictly_decreasing", CERT_SLACK);
    let mut convex = Tracker::new("convex", CERT_SLACK);
    let mut smooth = Tracker::new("beta_smooth", CERT_SLACK);
    let mut dominated = Tracker::new("dominated_by_tail", CERT_SLACK);
    let mut self_bounded = Tracker::new("self_bounded_gradient", CERT_SLACK);
    let mut two_point = Tracker::new("two_point_smoothness", CERT_SLACK);
    let mut fd = Tracker::new("finite_difference", CERT_SLACK);

    for (i, (&u, &(v, d))) in pts.iter().zip(&vals).enumerate() {
        nonneg.observe(-v, u);
        if u >= 0.0 {
            dominated.observe(v - phi.value(u), u);
        }
        self_bounded.observe(d * d - 2.0 * beta * v, u);
        let central = (loss.value(u + FD_STEP) - loss.value(u - FD_STEP)) / (2.0 * FD_STEP);
        fd.observe((d - central).abs() - 10.0 * beta * FD_STEP, u);
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

    let stride = (pts.len() / PAIR_POINTS).max(1);
    let sub: Vec<(f64, f64)> = pts
        .iter()
        .step_by(stride)
        .map(|&u| (u, loss.value(u)))
        .collect();
    for &(x, lx) in &sub {
        for &(y, ly) in &sub {
            two_point.observe(lx - 2.0 * ly - beta * (x - y) * (x - y), x);
        }
    }

    let mut checks: Vec<CheckResult> = [
        nonneg,
        decreasing,
        convex,
        smooth,
        dominated,
        self_bounded,
        two_point,
        fd,
    ]
    .into_iter()
    .map(Tracker::finish)
    .collect();

    if let Some((left_v, left_d)) = loss.left_limit_at_zero() {
        let (v0, d0) = loss.value_and_derivative(0.0);
        let mut splice = Tracker::new("splice_continuity", CERT_SLACK);
        splice.observe((left_v - v0).abs().max((left_d - d0).abs()), 0.0);
        checks.push(splice.finish());
    }

    MembershipReport {
        loss: loss.label().to_string(),
        tail: phi.label(),
        beta,
        grid: *grid,
        checks,
    }
}
