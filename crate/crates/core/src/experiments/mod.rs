//! Monte Carlo harness: trials, sweeps, event probabilities and slope fits.

mod fit;
pub mod io;
mod probs;
mod sweep;
mod trial;
mod verify;

pub use fit::{fit_slope, fit_slope_with, Axis, SlopeFit, BOOTSTRAP_RESAMPLES};
pub use probs::{estimate_event_probs, EventEstimate, ProbReport};
pub use sweep::{run_sweep, run_sweep_streaming, CellSummary, SweepAxes, SweepConfig, SweepResult};
pub use trial::{
    run_trial, small_t_crossing_eps, DistributionSpec, EtaSpec, Measured, PreparedCell, TrialBounds, TrialConfig, TrialResult,
    TrialRow, Violation, DESCENT_SLACK, LEMMA_SLACK,
};
pub use verify::{verify_bounds, CellVerdict, VerdictCheck, VerificationReport};

/// Version tag written into every persisted file.
pub const SCHEMA_VERSION: u32 = 1;
