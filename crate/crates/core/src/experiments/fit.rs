use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sweep::{CellSummary, SweepResult};
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, stream_rng, STREAM_BOOTSTRAP};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "n")]
    N,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::T => "T",
            Axis::N => "n",
        }
    }

    fn code(self) -> u64 {
        match self {
            Axis::T => 0,
            Axis::N => 1,
        }
    }

    pub(crate) fn value(self, c: &CellSummary) -> f64 {
        match self {
            Axis::T => c.steps as f64,
            Axis::N => c.n as f64,
        }
    }

    fn other(self, c: &CellSummary) -> f64 {
        match self {
            Axis::T => c.n as f64,
            Axis::N => c.steps as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub axis: Axis,
    /// Value of the other axis held fixed (its largest grid value).
    pub pinned: f64,
    pub gamma: f64,
    pub x: Vec<f64>,
    pub mean_risk: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub resamples: usize,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Cells along `axis` at the first γ, with the other axis pinned to its maximum.
pub(crate) fn axis_cells(sweep: &SweepResult, axis: Axis) -> Result<(f64, f64, Vec<&CellSummary>)> {
    let first = sweep
        .cells
        .first()
        .ok_or_else(|| invalid("sweep", "has no cells"))?;
    let gamma = first.gamma;
    let same_gamma = sweep.cells.iter().filter(|c| c.gamma == gamma);
    let pinned = same_gamma.clone().map(|c| axis.other(c)).fold(f64::NEG_INFINITY, f64::max);
    let mut cells: Vec<&CellSummary> = same_gamma.filter(|c| axis.other(c) == pinned).collect();
    cells.sort_by(|a, b| axis.value(a).total_cmp(&axis.value(b)));
    Ok((gamma, pinned, cells))
}

/// Log-log least-squares slope of mean exact risk along `axis`, with a
/// percentile bootstrap interval from resampling trials within each cell.
pub fn fit_slope(sweep: &SweepResult, axis: Axis) -> Result<SlopeFit> {
    fit_slope_with(sweep, axis, BOOTSTRAP_RESAMPLES)
}

pub fn fit_slope_with(sweep: &SweepResult, axis: Axis, resamples: usize) -> Result<SlopeFit> {
    let (gamma, pinned, cells) = axis_cells(sweep, axis)?;
    let mut xs: Vec<f64> = cells.iter().map(|c| axis.value(c)).collect();
    xs.dedup();
    if xs.len() < MIN_POINTS || xs.len() != cells.len() {
        return Err(invalid(
            "axis",
            format!(
                "need >= {MIN_POINTS} distinct {} values with other axes fixed, got {}",
                axis.as_str(),
                xs.len()
            ),
        ));
    }
    if let Some(c) = cells.iter().find(|c| !(c.mean_pop_risk > 0.0)) {
        return Err(invalid("sweep", format!("cell {} has nonpositive mean risk", c.cell)));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = cells.iter().map(|c| c.mean_pop_risk.ln()).collect();
    let (slope, intercept) = least_squares(&lx, &ly);

    let (ci_lo, ci_hi) = if resamples == 0 {
        (slope, slope)
    } else {
        if cells.iter().any(|c| c.risks.is_empty()) {
            return Err(invalid("sweep", "per-trial risks are required for the bootstrap"));
        }
        let mut rng = stream_rng(derive_seed(sweep.seed, &[axis.code()]), STREAM_BOOTSTRAP);
        let mut slopes = Vec::with_capacity(resamples);
        let mut boot_y = vec![0.0; cells.len()];
        for _ in 0..resamples {
            for (y, c) in boot_y.iter_mut().zip(&cells) {
                let r = &c.risks;
                let s: f64 = (0..r.len()).map(|_| r[rng.gen_range(0..r.len())]).sum();
                *y = (s / r.len() as f64).ln();
            }
            slopes.push(least_squares(&lx, &boot_y).0);
        }
        slopes.sort_by(f64::total_cmp);
        let q = |p: f64| slopes[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
        (q(0.025), q(0.975))
    };

    Ok(SlopeFit {
        axis,
        pinned,
        gamma,
        x: xs,
        mean_risk: cells.iter().map(|c| c.mean_pop_risk).collect(),
        slope,
        intercept,
        ci_lo,
        ci_hi,
        resamples,
    })
}
