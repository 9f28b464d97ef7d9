use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trial::{PreparedCell, TrialConfig, TrialResult, DETERMINISTIC};
use super::SCHEMA_VERSION;
use crate::error::{invalid, Result};
use crate::numeric::CompensatedSum;
use crate::optim::{Algo, Trajectory};
use crate::rng::derive_seed;

/// Trials processed between interrupt checks.
const CHUNK: usize = 256;

/// Grid axes; an empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(rename = "T", default)]
    pub steps: Vec<u64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: TrialConfig,
    pub axes: SweepAxes,
    pub trials: usize,
    pub min_trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    /// Cell configurations, `gamma` outermost and `T` innermost.
    pub fn cells(&self) -> Vec<TrialConfig> {
        let gammas = if self.axes.gamma.is_empty() { vec![self.base.gamma] } else { self.axes.gamma.clone() };
        let ns = if self.axes.n.is_empty() { vec![self.base.n] } else { self.axes.n.clone() };
        let ts = if self.axes.steps.is_empty() { vec![self.base.steps] } else { self.axes.steps.clone() };
        let mut out = Vec::with_capacity(gammas.len() * ns.len() * ts.len());
        for &gamma in &gammas {
            for &n in &ns {
                for &steps in &ts {
                    let mut c = self.base.clone();
                    c.gamma = gamma;
                    c.n = n;
                    c.steps = steps;
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn trial_seed(&self, cell: usize, trial: usize) -> u64 {
        derive_seed(self.seed, &[cell as u64, trial as u64])
    }
}

/// Per-cell statistics over its trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub gamma: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub steps: u64,
    pub eta: f64,
    pub eps: f64,
    pub trials: usize,
    pub mean_pop_risk: f64,
    pub stderr_pop_risk: f64,
    pub mean_emp_risk: f64,
    pub mean_final_norm: f64,
    pub upper_bound: f64,
    pub lower_bound: Option<f64>,
    pub deterministic_violations: usize,
    /// Largest `measured − bound` over all deterministic checks and trials.
    pub max_deterministic_slack: f64,
    pub upper_violations: usize,
    pub sgd_violations: usize,
    /// Per-trial exact risks, kept in memory for bootstrap fits.
    #[serde(skip)]
    pub risks: Vec<f64>,
}

impl CellSummary {
    pub fn from_trials(cell: usize, prepared: &PreparedCell, trials: &[TrialResult]) -> Self {
        let c = &prepared.config;
        let risks: Vec<f64> = trials.iter().map(|t| t.measured.pop_risk).collect();
        let r = risks.len();
        let mean = |f: &dyn Fn(&TrialResult) -> f64| {
            trials.iter().map(f).collect::<CompensatedSum>().value() / r.max(1) as f64
        };
        let m = mean(&|t| t.measured.pop_risk);
        let var = if r > 1 {
            risks.iter().map(|x| (x - m) * (x - m)).collect::<CompensatedSum>().value() / (r - 1) as f64
        } else {
            0.0
        };
        let det_slack = trials
            .iter()
            .flat_map(|t| t.violations.iter())
            .filter(|v| DETERMINISTIC.contains(&v.name.as_str()))
            .map(|v| v.slack)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            cell,
            gamma: c.gamma,
            n: c.n,
            steps: c.steps,
            eta: prepared.eta,
            eps: prepared.eps,
            trials: r,
            mean_pop_risk: m,
            stderr_pop_risk: (var / r.max(1) as f64).sqrt(),
            mean_emp_risk: mean(&|t| t.measured.emp_risk),
            mean_final_norm: mean(&|t| t.measured.final_norm),
            upper_bound: prepared.bounds.upper.value,
            lower_bound: prepared.bounds.lower.as_ref().map(|b| b.value),
            deterministic_violations: trials.iter().map(|t| t.deterministic_violations().count()).sum(),
            max_deterministic_slack: det_slack,
            upper_violations: trials.iter().filter(|t| t.violated("upper")).count(),
            sgd_violations: trials.iter().filter(|t| t.violated("sgd_empirical")).count(),
            risks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub seed: u64,
    pub algo: Algo,
    pub trials_per_cell: usize,
    pub min_trials: usize,
    pub axes: SweepAxes,
    pub cells: Vec<CellSummary>,
    /// Set when the sweep stopped early on request.
    pub truncated: bool,
}

/// Run every cell to completion and collect summaries.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    run_sweep_streaming(cfg, None, |_, _| Ok(()))
}

/// Like [`run_sweep`], handing each finished cell to `on_cell` before the next
/// starts. Stops between chunks of trials once `stop` is set.
pub fn run_sweep_streaming<F>(cfg: &SweepConfig, stop: Option<&AtomicBool>, mut on_cell: F) -> Result<SweepResult>
where
    F: FnMut(&CellSummary, &[TrialResult]) -> Result<()>,
{
    if cfg.trials == 0 {
        return Err(invalid("trials", "need at least one trial per cell"));
    }
    if cfg.min_trials > cfg.trials {
        return Err(invalid(
            "sweep.min_trials",
            format!("{} exceeds the configured trials {}", cfg.min_trials, cfg.trials),
        ));
    }
    let cells = cfg.cells();
    let prepared: Vec<PreparedCell> = cells.iter().map(PreparedCell::new).collect::<Result<_>>()?;
    let stopped = || stop.is_some_and(|s| s.load(Ordering::Relaxed));
    let mut summaries = Vec::with_capacity(cells.len());
    let mut truncated = false;

    for (ci, cell) in prepared.iter().enumerate() {
        let mut results: Vec<TrialResult> = Vec::with_capacity(cfg.trials);
        let mut memo: HashMap<Vec<usize>, Arc<Trajectory>> = HashMap::new();
        let mut start = 0;
        while start < cfg.trials {
            if stopped() {
                truncated = true;
                break;
            }
            let end = (start + CHUNK).min(cfg.trials);
            let chunk = run_chunk(cfg, ci, cell, start..end, &mut memo)?;
            results.extend(chunk);
            start = end;
        }
        if truncated && results.is_empty() {
            break;
        }
        let summary = CellSummary::from_trials(ci, cell, &results);
        on_cell(&summary, &results)?;
        summaries.push(summary);
        if truncated {
            break;
        }
    }

    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        algo: cfg.base.algo,
        trials_per_cell: cfg.trials,
        min_trials: cfg.min_trials,
        axes: cfg.axes.clone(),
        cells: summaries,
        truncated,
    })
}

/// GD depends on the sample only through its counts, so identical count
/// vectors share one trajectory.
fn run_chunk(
    cfg: &SweepConfig,
    ci: usize,
    cell: &PreparedCell,
    range: std::ops::Range<usize>,
    memo: &mut HashMap<Vec<usize>, Arc<Trajectory>>,
) -> Result<Vec<TrialResult>> {
    let seeds: Vec<u64> = range.map(|t| cfg.trial_seed(ci, t)).collect();
    let data: Vec<_> = seeds.par_iter().map(|&s| cell.sample(s)).collect();
    match cell.config.algo {
        Algo::Gd => {
            let mut fresh: Vec<Vec<usize>> = Vec::new();
            for d in &data {
                if !memo.contains_key(d.counts()) && !fresh.iter().any(|c| c == d.counts()) {
                    fresh.push(d.counts().to_vec());
                }
            }
            let trained: Vec<(Vec<usize>, Trajectory)> = fresh
                .into_par_iter()
                .map(|counts| {
                    let ds = data.iter().find(|d| d.counts() == counts.as_slice()).expect("present");
                    cell.train(ds, 0).map(|t| (counts, t))
                })
                .collect::<Result<_>>()?;
            for (k, t) in trained {
                memo.insert(k, Arc::new(t));
            }
            data.par_iter()
                .zip(&seeds)
                .map(|(d, &s)| cell.evaluate(d, &memo[d.counts()], s))
                .collect()
        }
        Algo::Sgd => data
            .par_iter()
            .zip(&seeds)
            .map(|(d, &s)| {
                let t = cell.train(d, s)?;
                cell.evaluate(d, &t, s)
            })
            .collect(),
    }
}
