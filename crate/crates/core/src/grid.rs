//! Sampling grids and the pass/fail certificate records built on them.
//!
//! Axiom and class-membership checks are numerical certificates: every
//! property is evaluated on a finite grid and reported with the worst
//! violation found, never thrown as an error.

use serde::{Deserialize, Serialize};

/// A grid that is uniform on `[lo, knee]` and geometric on `[knee, hi]`.
///
/// The geometric tail lets a single grid both resolve curvature near the
/// origin and reach far into slowly decaying tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub knee: f64,
    pub hi: f64,
    pub linear_points: usize,
    pub log_points: usize,
}

impl GridSpec {
    pub fn uniform(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            knee: hi,
            hi,
            linear_points: points,
            log_points: 0,
        }
    }

    pub fn total_points(&self) -> usize {
        self.points().len()
    }

    /// Materialize the grid as an increasing sequence without duplicates.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.linear_points + self.log_points);
        let knee = self.knee.min(self.hi);
        if self.linear_points >= 2 {
            let step = (knee - self.lo) / (self.linear_points - 1) as f64;
            for i in 0..self.linear_points {
                out.push(if i + 1 == self.linear_points {
                    knee
                } else {
                    self.lo + step * i as f64
                });
            }
        } else {
            out.push(self.lo);
        }
        if self.log_points > 0 && self.hi > knee && knee > 0.0 {
            let ratio = (self.hi / knee).ln() / self.log_points as f64;
            for i in 1..=self.log_points {
                let u = if i == self.log_points {
                    self.hi
                } else {
                    knee * (ratio * i as f64).exp()
                };
                out.push(u);
            }
        }
        out.dedup();
        out
    }
}

/// Outcome of a single grid-checked property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest amount by which the property was exceeded (0 when it never was).
    pub worst_violation: f64,
    /// Location of the worst violation, if any.
    pub at: Option<f64>,
    pub evaluations: usize,
}

/// Accumulates the worst violation of one property over a grid.
#[derive(Debug, Clone)]
pub(crate) struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    at: Option<f64>,
    failed: bool,
    evaluations: usize,
}

impl Tracker {
    pub(crate) fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            at: None,
            failed: false,
            evaluations: 0,
        }
    }

    /// Record `excess` (positive means the property was violated by that much).
    pub(crate) fn observe(&mut self, excess: f64, at: f64) {
        self.evaluations += 1;
        let excess = if excess.is_nan() { f64::INFINITY } else { excess };
        if excess > self.tolerance {
            self.failed = true;
        }
        if excess > self.worst {
            self.worst = excess;
            self.at = Some(at);
        }
    }

    /// Record a property that fails regardless of magnitude (strictness checks).
    pub(crate) fn fail_at(&mut self, excess: f64, at: f64) {
        self.evaluations += 1;
        self.failed = true;
        if self.at.is_none() || excess > self.worst {
            self.worst = excess.max(self.worst);
            self.at = Some(at);
        }
    }

    pub(crate) fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: !self.failed,
            worst_violation: self.worst,
            at: self.at,
            evaluations: self.evaluations,
        }
    }
}

pub(crate) fn all_passed(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub(crate) fn worst(checks: &[CheckResult]) -> f64 {
    checks.iter().map(|c| c.worst_violation).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_grid_is_increasing_and_hits_endpoints() {
        let g = GridSpec {
            lo: 0.0,
            knee: 20.0,
            hi: 1.0e6,
            linear_points: 100,
            log_points: 50,
        };
        let p = g.points();
        assert_eq!(p[0], 0.0);
        assert_eq!(*p.last().unwrap(), 1.0e6);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.len(), 150);
    }

    #[test]
    fn uniform_grid_when_knee_is_hi() {
        let p = GridSpec::uniform(-1.0, 1.0, 5).points();
        assert_eq!(p, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn tracker_reports_worst() {
        let mut t = Tracker::new("x", 1e-12);
        t.observe(-1.0, 0.0);
        t.observe(0.5, 1.0);
        t.observe(0.25, 2.0);
        let r = t.finish();
        assert!(!r.passed);
        assert_eq!(r.worst_violation, 0.5);
        assert_eq!(r.at, Some(1.0));
    }
}
