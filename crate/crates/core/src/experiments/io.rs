//! CSV and JSON persistence. Every JSON document carries `schema_version`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::fit::{axis_cells, Axis};
use super::sweep::{CellSummary, SweepResult};
use super::trial::TrialRow;
use super::SCHEMA_VERSION;
use crate::error::Result;

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Wraps a payload as `{"schema_version": …, <payload fields>}`.
#[derive(Serialize)]
pub struct Versioned<'a, T: Serialize> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub payload: &'a T,
}

impl<'a, T: Serialize> Versioned<'a, T> {
    pub fn new(payload: &'a T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            payload,
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Streaming CSV writer for trial rows.
pub struct TrialCsv<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrialCsv<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(w),
        }
    }

    pub fn write(&mut self, row: &TrialRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }
}

pub fn trial_rows_csv(rows: &[TrialRow]) -> Result<Vec<u8>> {
    let mut w = TrialCsv::new(Vec::new());
    for r in rows {
        w.write(r)?;
    }
    w.into_inner()
}

pub fn cells_csv(cells: &[CellSummary]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c)?;
    }
    w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
}

#[derive(Serialize)]
struct PlotRow {
    x: f64,
    mean_risk: f64,
    stderr: f64,
    upper_bound: f64,
    lower_bound: Option<f64>,
}

/// `x, mean_risk, stderr, upper_bound, lower_bound` along one axis, the other
/// axis pinned to its largest value.
pub fn plot_csv(sweep: &SweepResult, axis: Axis) -> Result<Vec<u8>> {
    let (_, _, cells) = axis_cells(sweep, axis)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(PlotRow {
            x: axis.value(c),
            mean_risk: c.mean_pop_risk,
            stderr: c.stderr_pop_risk,
            upper_bound: c.upper_bound,
            lower_bound: c.lower_bound,
        })?;
    }
    w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
}

/// Axes with at least two grid values, for plot files.
pub fn plot_axes(sweep: &SweepResult) -> Vec<Axis> {
    let mut out = Vec::new();
    if sweep.axes.steps.len() >= 2 {
        out.push(Axis::T);
    }
    if sweep.axes.n.len() >= 2 {
        out.push(Axis::N);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_sweep, DistributionSpec, SweepAxes, SweepConfig, TrialConfig};
    use crate::loss::LossName;
    use crate::tail::TailSpec;

    #[test]
    fn versioned_wrapper_adds_field() {
        #[derive(Serialize)]
        struct P {
            a: u8,
        }
        let s = to_json(&Versioned::new(&P { a: 3 })).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["a"], 3);
    }

    #[test]
    fn plot_file_columns() {
        let cfg = SweepConfig {
            base: TrialConfig::new(
                TailSpec::exponential(),
                LossName::QuadraticExtension,
                DistributionSpec::BigT,
                1.0 / 16.0,
                50,
                40,
            ),
            axes: SweepAxes {
                steps: vec![10, 20],
                n: vec![],
                gamma: vec![],
            },
            trials: 2,
            min_trials: 2,
            seed: 1,
        };
        let s = run_sweep(&cfg).unwrap();
        assert_eq!(plot_axes(&s), vec![Axis::T]);
        let text = String::from_utf8(plot_csv(&s, Axis::T).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,mean_risk,stderr,upper_bound,lower_bound");
        assert_eq!(text.lines().count(), 3);
    }
}
