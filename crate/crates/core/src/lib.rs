//! Gradient descent on separable linear classification with φ-tailed losses.
//!
//! Tail functions and losses come with grid certificates; the hard instances,
//! optimizers and closed-form bounds feed the Monte Carlo harness in
//! [`experiments`].

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod loss;
pub mod numeric;
pub mod optim;
pub mod rng;
pub mod tail;

pub use bounds::{
    lower_risk_bound, norm_bound, opt_error_bound, rademacher_gap_bound, rate_table, reference_point,
    sgd_empirical_bound, upper_risk_bound, BoundKind, BoundReport, LowerBound, RateEntry,
};
pub use data::{
    empirical_risk, make_big_t_instance, make_small_t_instance, population_risk_exact, sample_dataset, Dataset,
    DiscreteDistribution,
};
pub use error::{Error, Result};
pub use grid::{CheckResult, GridSpec};
pub use loss::{check_loss_class, LossFunction, LossKind, LossName, MembershipReport};
pub use optim::{grad_norm_check, run_gd, run_sgd, Algo, Trajectory};
pub use tail::{
    check_tail_axioms, eval_tail, solve_epsilon_lower, solve_epsilon_upper, tail_inverse, AxiomReport,
    EpsilonCondition, TailFamily, TailFunction, TailSpec,
};
