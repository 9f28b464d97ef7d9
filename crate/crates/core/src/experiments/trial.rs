use serde::{Deserialize, Serialize};

use crate::bounds::{
    lower_risk_big_t, lower_small_t_at, norm_bound, opt_error_bound, reference_point,
    sgd_empirical_bound, upper_risk_bound_at, BoundReport, DEFAULT_K, SMALL_T_CAP,
};
use crate::data::{
    make_big_t_instance, make_small_t_instance, population_risk_exact, sample_dataset, Construction, Dataset,
    DiscreteDistribution,
};
use crate::error::{invalid, Error, Result};
use crate::loss::{LossFunction, LossKind, LossName};
use crate::numeric::norm;
use crate::optim::{comparator_loss, default_eta, run_gd, run_sgd, validate_eta, Algo, Trajectory};
use crate::tail::{solve_epsilon_upper, EpsilonCondition, TailFunction, TailSpec};

/// Absolute slack for the GD descent check.
pub const DESCENT_SLACK: f64 = 1e-12;
/// Absolute slack for the deterministic norm, optimization-error and regret checks.
pub const LEMMA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Auto(AutoTag),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Auto(AutoTag::Auto)
    }
}

impl EtaSpec {
    pub fn auto() -> Self {
        Self::default()
    }

    pub fn resolve(self, beta: f64) -> f64 {
        match self {
            EtaSpec::Auto(_) => default_eta(beta),
            EtaSpec::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Three-point instance; margin from the trial `gamma`, masses from `n`.
    BigT,
    /// Two-point instance; rare mass from `eps`, `gamma`, `eta` and `T`.
    /// Without `eps`, uses the crossing ε of `ηγ²T = (φ⁻¹(ε))²/ε`, capped at 1/16.
    SmallT {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
    },
    Custom {
        support: Vec<Vec<f64>>,
        probs: Vec<f64>,
        w_star: Vec<f64>,
        /// Defaults to the trial `gamma`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl DistributionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::BigT => "big_t",
            DistributionSpec::SmallT { .. } => "small_t",
            DistributionSpec::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub tail: TailSpec,
    pub loss: LossName,
    pub distribution: DistributionSpec,
    pub gamma: f64,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(rename = "T")]
    pub steps: u64,
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    /// ε for the reference point; defaults to the largest admissible one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_eps: Option<f64>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_k() -> f64 {
    DEFAULT_K
}

fn default_algo() -> Algo {
    Algo::Gd
}

impl TrialConfig {
    /// Defaults: automatic η, δ = 0.1, K = 10⁵, GD.
    pub fn new(tail: TailSpec, loss: LossName, distribution: DistributionSpec, gamma: f64, steps: u64, n: usize) -> Self {
        Self {
            tail,
            loss,
            distribution,
            gamma,
            eta: EtaSpec::auto(),
            steps,
            n,
            delta: default_delta(),
            k: default_k(),
            algo: default_algo(),
            reference_eps: None,
        }
    }
}

/// The ε used by the few-steps instance when none is given.
pub fn small_t_crossing_eps(tail: &TailFunction, gamma: f64, eta: f64, steps: u64) -> Result<f64> {
    let cap = SMALL_T_CAP.min(tail.at_zero() / 8.0);
    solve_epsilon_upper(tail, &EpsilonCondition::upper(gamma, eta, steps).with_cap(cap))
}

/// Everything about a trial that does not depend on the sample.
#[derive(Debug, Clone)]
pub struct PreparedCell {
    pub config: TrialConfig,
    pub tail: TailFunction,
    pub loss: LossFunction,
    pub dist: DiscreteDistribution,
    pub eta: f64,
    /// Margin of the unit separator.
    pub unit_gamma: f64,
    pub eps: f64,
    pub reference: Vec<f64>,
    pub bounds: TrialBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialBounds {
    pub eps: f64,
    pub wstar_eps_norm: f64,
    pub norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret: Option<f64>,
    pub upper: BoundReport,
    /// Present only when the loss matches the hard instance's construction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sgd: Option<BoundReport>,
}

impl PreparedCell {
    pub fn new(config: &TrialConfig) -> Result<Self> {
        let tail = config.tail.build()?;
        let loss = config.loss.build(&tail)?;
        if config.steps == 0 {
            return Err(invalid("T", "must be a positive integer"));
        }
        if config.n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if !(config.delta > 0.0 && config.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", config.delta)));
        }
        let eta = config.eta.resolve(loss.beta());
        validate_eta(eta, loss.beta())?;
        let dist = match &config.distribution {
            DistributionSpec::BigT => make_big_t_instance(config.gamma, config.n)?,
            DistributionSpec::SmallT { eps } => {
                let eps = match eps {
                    Some(e) => *e,
                    None => small_t_crossing_eps(&tail, config.gamma, eta, config.steps)?,
                };
                make_small_t_instance(&tail, config.gamma, eps, eta, config.steps)?
            }
            DistributionSpec::Custom {
                support,
                probs,
                w_star,
                gamma,
            } => DiscreteDistribution::new(
                support.clone(),
                probs.clone(),
                w_star.clone(),
                gamma.unwrap_or(config.gamma),
            )?,
        };
        let (unit_w, unit_gamma) = dist.unit_witness();
        let unit_gamma = unit_gamma.min(1.0);
        let eps = match config.reference_eps {
            Some(e) => e,
            None => solve_epsilon_upper(&tail, &EpsilonCondition::upper(unit_gamma, eta, config.steps))?,
        };
        let reference = reference_point(&tail, unit_gamma, eps, &unit_w)?;
        let wn = norm(&reference);
        let steps = config.steps;
        let upper = upper_risk_bound_at(&tail, unit_gamma, eta, steps, config.n, config.delta, config.k, eps)?;
        let lower = Self::instance_lower(config, &tail, &loss, &dist, eta)?;
        let (opt_error, regret, sgd) = match config.algo {
            Algo::Gd => (Some(opt_error_bound(wn, eta, eps, steps)?), None, None),
            Algo::Sgd => (
                None,
                Some(wn * wn / (2.0 * eta * steps as f64)),
                Some(sgd_empirical_bound(wn, eta, eps, steps, loss.beta(), config.delta)?),
            ),
        };
        let bounds = TrialBounds {
            eps,
            wstar_eps_norm: wn,
            norm: norm_bound(wn, eta, eps, steps)?,
            opt_error,
            regret,
            upper,
            lower,
            sgd,
        };
        Ok(Self {
            config: config.clone(),
            tail,
            loss,
            dist,
            eta,
            unit_gamma,
            eps,
            reference,
            bounds,
        })
    }

    /// The lower bound proven for the instance, or `None` for other setups.
    fn instance_lower(
        config: &TrialConfig,
        tail: &TailFunction,
        loss: &LossFunction,
        dist: &DiscreteDistribution,
        eta: f64,
    ) -> Result<Option<BoundReport>> {
        match (dist.construction(), loss.kind()) {
            (Construction::BigT { gamma, n }, LossKind::QuadraticExtension) => {
                match lower_risk_big_t(tail, gamma, eta, config.steps, n, loss.beta()) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Infeasible { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            (Construction::SmallT { gamma, eps, eta, steps, .. }, LossKind::LinearExtension) => {
                Ok(Some(lower_small_t_at(tail, gamma, eta, steps, eps)?))
            }
            _ => Ok(None),
        }
    }

    pub fn sample(&self, seed: u64) -> Dataset {
        sample_dataset(&self.dist, self.config.n, seed)
    }

    pub fn train(&self, data: &Dataset, seed: u64) -> Result<Trajectory> {
        match self.config.algo {
            Algo::Gd => run_gd(&self.loss, data, self.eta, self.config.steps),
            Algo::Sgd => run_sgd(&self.loss, data, self.eta, self.config.steps, seed),
        }
    }

    pub fn run(&self, seed: u64) -> Result<TrialResult> {
        let data = self.sample(seed);
        let traj = self.train(&data, seed)?;
        self.evaluate(&data, &traj, seed)
    }

    /// Measure a finished run and flag every bound it breaks.
    pub fn evaluate(&self, data: &Dataset, traj: &Trajectory, seed: u64) -> Result<TrialResult> {
        let w = &traj.final_model;
        let pop_risk = population_risk_exact(w, &self.loss, &self.dist)?;
        let ref_emp_risk = crate::data::empirical_risk(&self.reference, &self.loss, data)?;
        let mut measured = Measured {
            final_norm: norm(w),
            emp_risk: traj.final_emp_risk,
            pop_risk,
            ref_emp_risk,
            max_ascent: None,
            online_loss: None,
            comparator_loss: None,
            regret: None,
            max_iterate_norm: None,
        };
        let b = &self.bounds;
        let mut violations = Vec::new();
        let mut flag = |name: &'static str, value: f64, bound: f64, slack: f64| {
            violations.push(Violation {
                name: name.to_string(),
                violated: value > bound + slack,
                slack: value - bound,
            });
        };
        flag("norm", measured.final_norm, b.norm, LEMMA_SLACK);
        match traj.algo {
            Algo::Gd => {
                measured.max_ascent = Some(traj.max_ascent);
                flag("descent", traj.max_ascent, 0.0, DESCENT_SLACK);
                if let Some(opt) = b.opt_error {
                    flag("opt_error", measured.emp_risk, opt, LEMMA_SLACK);
                }
                flag("upper", pop_risk, b.upper.value, 0.0);
            }
            Algo::Sgd => {
                let diag = traj
                    .sgd
                    .as_ref()
                    .ok_or_else(|| Error::Numeric("SGD trajectory lacks diagnostics".into()))?;
                let comp = comparator_loss(diag, &self.loss, data, &self.reference)?;
                let regret = diag.online_loss - comp;
                measured.online_loss = Some(diag.online_loss);
                measured.comparator_loss = Some(comp);
                measured.regret = Some(regret);
                measured.max_iterate_norm = Some(diag.max_iterate_norm);
                flag("iterate_norm", diag.max_iterate_norm, b.norm, LEMMA_SLACK);
                if let Some(r) = b.regret {
                    flag("regret", regret, r, LEMMA_SLACK);
                }
                if let Some(s) = &b.sgd {
                    flag("sgd_empirical", measured.emp_risk, s.value, 0.0);
                }
            }
        }
        Ok(TrialResult {
            config: self.config.clone(),
            seed,
            eta: self.eta,
            unit_gamma: self.unit_gamma,
            measured,
            bounds: self.bounds.clone(),
            violations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub final_norm: f64,
    pub emp_risk: f64,
    pub pop_risk: f64,
    /// `L̂(w*_ε)`, at most ε by construction.
    pub ref_emp_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ascent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub online_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparator_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterate_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    pub violated: bool,
    /// `measured − bound`; positive means the bound was exceeded.
    pub slack: f64,
}

/// Deterministic checks: a single violation beyond slack is a defect.
pub(crate) const DETERMINISTIC: [&str; 5] = ["norm", "descent", "opt_error", "iterate_norm", "regret"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub seed: u64,
    pub eta: f64,
    pub unit_gamma: f64,
    pub measured: Measured,
    pub bounds: TrialBounds,
    pub violations: Vec<Violation>,
}

impl TrialResult {
    pub fn violated(&self, name: &str) -> bool {
        self.violations.iter().any(|v| v.name == name && v.violated)
    }

    pub fn deterministic_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.violated && DETERMINISTIC.contains(&v.name.as_str()))
    }

    pub fn slack(&self, name: &str) -> Option<f64> {
        self.violations.iter().find(|v| v.name == name).map(|v| v.slack)
    }

    pub fn row(&self, cell: usize, trial: usize) -> TrialRow {
        let c = &self.config;
        let m = &self.measured;
        let b = &self.bounds;
        let flag = |name: &str| self.violations.iter().find(|v| v.name == name).map(|v| v.violated);
        TrialRow {
            cell,
            trial,
            seed: self.seed,
            algo: c.algo.as_str().to_string(),
            tail: self.bounds.upper.inputs.tail.clone().unwrap_or_default(),
            loss: c.loss.as_str().to_string(),
            distribution: c.distribution.name().to_string(),
            gamma: c.gamma,
            unit_gamma: self.unit_gamma,
            eta: self.eta,
            steps: c.steps,
            n: c.n,
            delta: c.delta,
            k: c.k,
            eps: b.eps,
            wstar_eps_norm: b.wstar_eps_norm,
            final_norm: m.final_norm,
            emp_risk: m.emp_risk,
            pop_risk: m.pop_risk,
            ref_emp_risk: m.ref_emp_risk,
            max_ascent: m.max_ascent,
            regret: m.regret,
            norm_bound: b.norm,
            opt_error_bound: b.opt_error,
            regret_bound: b.regret,
            upper_bound: b.upper.value,
            lower_bound: b.lower.as_ref().map(|r| r.value),
            sgd_bound: b.sgd.as_ref().map(|r| r.value),
            viol_norm: flag("norm"),
            viol_descent: flag("descent"),
            viol_opt_error: flag("opt_error"),
            viol_iterate_norm: flag("iterate_norm"),
            viol_regret: flag("regret"),
            viol_upper: flag("upper"),
            viol_sgd_empirical: flag("sgd_empirical"),
        }
    }
}

/// One CSV row per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub algo: String,
    pub tail: String,
    pub loss: String,
    pub distribution: String,
    pub gamma: f64,
    pub unit_gamma: f64,
    pub eta: f64,
    #[serde(rename = "T")]
    pub steps: u64,
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub eps: f64,
    pub wstar_eps_norm: f64,
    pub final_norm: f64,
    pub emp_risk: f64,
    pub pop_risk: f64,
    pub ref_emp_risk: f64,
    pub max_ascent: Option<f64>,
    pub regret: Option<f64>,
    pub norm_bound: f64,
    pub opt_error_bound: Option<f64>,
    pub regret_bound: Option<f64>,
    pub upper_bound: f64,
    pub lower_bound: Option<f64>,
    pub sgd_bound: Option<f64>,
    pub viol_norm: Option<bool>,
    pub viol_descent: Option<bool>,
    pub viol_opt_error: Option<bool>,
    pub viol_iterate_norm: Option<bool>,
    pub viol_regret: Option<bool>,
    pub viol_upper: Option<bool>,
    pub viol_sgd_empirical: Option<bool>,
}

/// Sample, train, measure and compare against every attached bound.
pub fn run_trial(cfg: &TrialConfig, seed: u64) -> Result<TrialResult> {
    PreparedCell::new(cfg)?.run(seed)
}
