use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use crate::numeric::z_one_sided_95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCheck {
    pub name: String,
    pub passed: bool,
    /// How far past the requirement the cell landed; positive means failure.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub cell: usize,
    pub checks: Vec<VerdictCheck>,
}

impl CellVerdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub cells: Vec<CellVerdict>,
    pub failures: usize,
    pub truncated: bool,
    pub passed: bool,
}

/// Per-cell pass/fail: no deterministic violations, mean risk within the
/// upper bound, and mean risk above the instance lower bound at one-sided 95%.
pub fn verify_bounds(sweep: &SweepResult) -> VerificationReport {
    let z = z_one_sided_95();
    let cells: Vec<CellVerdict> = sweep
        .cells
        .iter()
        .map(|c| {
            let mut checks = vec![
                VerdictCheck {
                    name: "deterministic_lemmas".into(),
                    passed: c.deterministic_violations == 0,
                    slack: c.max_deterministic_slack,
                },
                VerdictCheck {
                    name: "min_trials".into(),
                    passed: c.trials >= sweep.min_trials,
                    slack: sweep.min_trials as f64 - c.trials as f64,
                },
            ];
            if sweep.algo == crate::optim::Algo::Gd {
                checks.push(VerdictCheck {
                    name: "upper_bound".into(),
                    passed: c.mean_pop_risk <= c.upper_bound,
                    slack: c.mean_pop_risk - c.upper_bound,
                });
            }
            if let Some(lower) = c.lower_bound {
                let conservative = c.mean_pop_risk - z * c.stderr_pop_risk;
                checks.push(VerdictCheck {
                    name: "lower_bound".into(),
                    passed: conservative >= lower,
                    slack: lower - conservative,
                });
            }
            CellVerdict { cell: c.cell, checks }
        })
        .collect();
    let failures = cells.iter().filter(|c| !c.passed()).count();
    VerificationReport {
        failures,
        truncated: sweep.truncated,
        passed: failures == 0 && !sweep.truncated,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::sweep::CellSummary;
    use crate::optim::Algo;

    fn cell(i: usize) -> CellSummary {
        CellSummary {
            cell: i,
            gamma: 0.1,
            n: 100,
            steps: 100,
            eta: 0.5,
            eps: 0.1,
            trials: 10,
            mean_pop_risk: 0.01,
            stderr_pop_risk: 0.001,
            mean_emp_risk: 0.0,
            mean_final_norm: 1.0,
            upper_bound: 1.0,
            lower_bound: Some(0.001),
            deterministic_violations: 0,
            max_deterministic_slack: -0.5,
            upper_violations: 0,
            sgd_violations: 0,
            risks: vec![],
        }
    }

    fn sweep(cells: Vec<CellSummary>) -> SweepResult {
        SweepResult {
            schema_version: 1,
            seed: 0,
            algo: Algo::Gd,
            trials_per_cell: 10,
            min_trials: 10,
            axes: Default::default(),
            cells,
            truncated: false,
        }
    }

    #[test]
    fn clean_sweep_passes() {
        let r = verify_bounds(&sweep(vec![cell(0), cell(1)]));
        assert!(r.passed);
        assert_eq!(r.failures, 0);
    }

    #[test]
    fn injected_violation_is_flagged() {
        let mut bad = cell(1);
        bad.deterministic_violations = 1;
        bad.max_deterministic_slack = 3e-6;
        let r = verify_bounds(&sweep(vec![cell(0), bad]));
        assert!(!r.passed);
        assert_eq!(r.failures, 1);
        let c = r.cells[1].checks.iter().find(|c| c.name == "deterministic_lemmas").unwrap();
        assert!(!c.passed);
        assert_eq!(c.slack, 3e-6);
    }

    #[test]
    fn lower_bound_uses_one_sided_interval() {
        let mut c = cell(0);
        c.lower_bound = Some(0.0095);
        c.stderr_pop_risk = 0.0001;
        assert!(verify_bounds(&sweep(vec![c.clone()])).passed);
        c.stderr_pop_risk = 0.001;
        assert!(!verify_bounds(&sweep(vec![c])).passed);
    }

    #[test]
    fn truncated_or_short_cells_fail() {
        let mut s = sweep(vec![cell(0)]);
        s.truncated = true;
        assert!(!verify_bounds(&s).passed);
        let mut short = cell(0);
        short.trials = 3;
        assert!(!verify_bounds(&sweep(vec![short])).passed);
    }
}
