//! Commands behind the `sepgd` binary.
//!
//! Every command reads one JSON [`RunConfig`], writes its outputs under
//! `output_dir` and maps its outcome to a stable exit code: 0 on success,
//! 1 when a certificate or verification fails, 2 on usage or config errors.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use serde::Serialize;

use sepgd_core::experiments::io::{cells_csv, plot_axes, plot_csv, to_json, trial_rows_csv, TrialCsv, Versioned};
use sepgd_core::experiments::{
    fit_slope, run_sweep_streaming, run_trial, verify_bounds, Axis, SlopeFit, SweepResult, TrialResult,
};
use sepgd_core::{check_loss_class, check_tail_axioms, rate_table, Error, LossFunction, RateEntry};

pub use config::{load, RunConfig, SweepSection};

/// Name of the marker file left next to partial sweep outputs.
pub const TRUNCATION_MARKER: &str = "TRUNCATED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Certificate(_) => CliError::Failed(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_versioned<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_bytes(path, to_json(&Versioned::new(value))?.as_bytes())
}

#[derive(Serialize)]
struct Fits {
    fits: Vec<SlopeFit>,
}

#[derive(Serialize)]
struct Rates {
    entries: Vec<RateEntry>,
}

/// Outcome of certifying the configured tail and loss.
pub struct Certification {
    pub passed: bool,
    pub failures: Vec<String>,
    pub loss: LossFunction,
}

fn certify(cfg: &RunConfig) -> CliResult<Certification> {
    let tail = cfg.tail.build()?;
    let loss = cfg.loss.build(&tail)?;
    let axioms = check_tail_axioms(&tail, &tail.default_grid());
    let membership = check_loss_class(&loss, &tail, &LossFunction::default_grid(&tail));
    prepare_dir(&cfg.output_dir)?;
    write_versioned(&cfg.output_dir.join("axiom_report.json"), &axioms)?;
    write_versioned(&cfg.output_dir.join("membership_report.json"), &membership)?;
    let failures: Vec<String> = axioms
        .failures()
        .map(|c| format!("tail {}: {} (worst {:e} at {:?})", axioms.tail, c.name, c.worst_violation, c.at))
        .chain(membership.failures().map(|c| {
            format!("loss {}: {} (worst {:e} at {:?})", membership.loss, c.name, c.worst_violation, c.at)
        }))
        .collect();
    Ok(Certification {
        passed: failures.is_empty(),
        failures,
        loss,
    })
}

fn require_certified(cfg: &RunConfig) -> CliResult<()> {
    let cert = certify(cfg)?;
    if cert.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("certificate failed: {}", cert.failures.join("; "))))
    }
}

/// `validate`: certify the tail and loss, then build the distribution.
pub fn cmd_validate(cfg: &RunConfig, out: &mut impl Write) -> CliResult<()> {
    let cert = certify(cfg)?;
    for f in &cert.failures {
        writeln!(out, "FAIL {f}").ok();
    }
    if !cert.passed {
        return Err(CliError::Failed(format!(
            "certificate failed: {}",
            cert.failures.join("; ")
        )));
    }
    sepgd_core::experiments::PreparedCell::new(&cfg.trial())?;
    writeln!(
        out,
        "ok: {} with β = {} certified; reports in {}",
        cert.loss.label(),
        cert.loss.beta(),
        cfg.output_dir.display()
    )
    .ok();
    Ok(())
}

/// `run`: one trial at the configured seed; fails when a deterministic lemma is violated.
pub fn cmd_run(cfg: &RunConfig, out: &mut impl Write) -> CliResult<TrialResult> {
    require_certified(cfg)?;
    let result = run_trial(&cfg.trial(), cfg.seed)?;
    write_versioned(&cfg.output_dir.join("trial.json"), &result)?;
    write_bytes(&cfg.output_dir.join("trial.csv"), &trial_rows_csv(&[result.row(0, 0)])?)?;
    print_trial(&result, out);
    let broken: Vec<String> = result.deterministic_violations().map(|v| v.name.clone()).collect();
    if broken.is_empty() {
        Ok(result)
    } else {
        Err(CliError::Failed(format!("deterministic lemma violated: {}", broken.join(", "))))
    }
}

fn print_trial(r: &TrialResult, out: &mut impl Write) {
    let m = &r.measured;
    let b = &r.bounds;
    let mut rows: Vec<(&str, f64, Option<f64>)> = vec![
        ("population risk", m.pop_risk, Some(b.upper.value)),
        ("empirical risk", m.emp_risk, b.sgd.as_ref().map(|s| s.value)),
        ("final norm", m.final_norm, Some(b.norm)),
    ];
    if let (Some(o), Some(ref_risk)) = (b.opt_error, Some(m.ref_emp_risk)) {
        rows.push(("optimization gap", m.emp_risk - ref_risk, Some(o)));
    }
    if let (Some(reg), Some(bound)) = (m.regret, b.regret) {
        rows.push(("regret", reg, Some(bound)));
    }
    if let Some(lower) = &b.lower {
        rows.push(("lower bound on risk", lower.value, None));
    }
    writeln!(out, "{:<22} {:>14} {:>14}", "quantity", "measured", "bound").ok();
    for (name, v, bound) in rows {
        let bound = bound.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{name:<22} {v:>14.6e} {bound:>14}").ok();
    }
    for v in r.violations.iter().filter(|v| v.violated) {
        writeln!(out, "violated: {} by {:e}", v.name, v.slack).ok();
    }
}

/// `sweep`: streams per-trial rows, then writes cell summaries, plot data and fits.
pub fn cmd_sweep(cfg: &RunConfig, stop: Option<&AtomicBool>, out: &mut impl Write) -> CliResult<SweepResult> {
    require_certified(cfg)?;
    let dir = &cfg.output_dir;
    let marker = dir.join(TRUNCATION_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
    }
    let trials_path = dir.join("trials.csv");
    let file = File::create(&trials_path).map_err(|e| io_err(&trials_path, e))?;
    let mut rows = TrialCsv::new(BufWriter::new(file));
    let sweep_cfg = cfg.sweep_config();
    let total = sweep_cfg.cells().len();
    let result = run_sweep_streaming(&sweep_cfg, stop, |cell, trials| {
        for (i, t) in trials.iter().enumerate() {
            rows.write(&t.row(cell.cell, i))?;
        }
        rows.flush()?;
        writeln!(
            out,
            "cell {}/{total}: γ = {}, n = {}, T = {}, mean risk {:.4e} ± {:.1e}",
            cell.cell + 1,
            cell.gamma,
            cell.n,
            cell.steps,
            cell.mean_pop_risk,
            cell.stderr_pop_risk
        )
        .ok();
        Ok(())
    })?;
    rows.into_inner()?
        .flush()
        .map_err(|e| io_err(&trials_path, e))?;
    write_bytes(&dir.join("cells.csv"), &cells_csv(&result.cells)?)?;
    write_bytes(&dir.join("sweep.json"), to_json(&result)?.as_bytes())?;
    let mut fits: Vec<SlopeFit> = Vec::new();
    if !result.cells.is_empty() {
        for axis in plot_axes(&result) {
            let name = match axis {
                Axis::T => "T",
                Axis::N => "n",
            };
            write_bytes(&dir.join(format!("plotdata_{name}.csv")), &plot_csv(&result, axis)?)?;
            if let Ok(fit) = fit_slope(&result, axis) {
                writeln!(out, "slope over {name}: {:.3} [{:.3}, {:.3}]", fit.slope, fit.ci_lo, fit.ci_hi).ok();
                fits.push(fit);
            }
        }
    }
    write_versioned(&dir.join("fits.json"), &Fits { fits })?;
    if result.truncated {
        write_bytes(&marker, format!("{} of {total} cells completed\n", result.cells.len()).as_bytes())?;
        return Err(CliError::Failed(format!(
            "interrupted after {} of {total} cells; partial results in {}",
            result.cells.len(),
            dir.display()
        )));
    }
    Ok(result)
}

/// `rates`: closed-form rates for the configured family at every `(T, n)` on the grid.
pub fn cmd_rates(cfg: &RunConfig, out: &mut impl Write) -> CliResult<Vec<RateEntry>> {
    let family = cfg.tail.build()?.family();
    let steps = if cfg.sweep.steps.is_empty() { vec![cfg.steps] } else { cfg.sweep.steps.clone() };
    let ns = if cfg.sweep.n.is_empty() { vec![cfg.n] } else { cfg.sweep.n.clone() };
    let mut entries = Vec::new();
    for &n in &ns {
        for &t in &steps {
            entries.push(rate_table(family, cfg.gamma, t as f64, n as f64)?);
        }
    }
    if let Some(e) = entries.first() {
        writeln!(out, "{}: {}", cfg.tail.build()?.label(), e.formula).ok();
        writeln!(out, "T-term exponent {}, n-term exponent {}", e.t_exponent, e.n_exponent).ok();
    }
    writeln!(out, "{:>12} {:>10} {:>14} {:>10} {:>10}", "T", "n", "rate", "d/dlogT", "d/dlogn").ok();
    for e in &entries {
        writeln!(
            out,
            "{:>12} {:>10} {:>14.6e} {:>10.4} {:>10.4}",
            e.steps, e.n, e.value, e.slope_t, e.slope_n
        )
        .ok();
    }
    prepare_dir(&cfg.output_dir)?;
    let rates = Rates { entries };
    write_versioned(&cfg.output_dir.join("rates.json"), &rates)?;
    Ok(rates.entries)
}

/// `verify`: re-checks a written `sweep.json` and writes `verification.json` beside it.
pub fn cmd_verify(sweep_path: &Path, out: &mut impl Write) -> CliResult<()> {
    let text = fs::read_to_string(sweep_path).map_err(|e| io_err(sweep_path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let sweep: SweepResult = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Usage(format!("{}: {}: {}", sweep_path.display(), e.path(), e.inner())))?;
    let report = verify_bounds(&sweep);
    let dest = sweep_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
        .join("verification.json");
    write_versioned(&dest, &report)?;
    for cell in &report.cells {
        for check in cell.checks.iter().filter(|c| !c.passed) {
            writeln!(out, "FAIL cell {}: {} (slack {:e})", cell.cell, check.name, check.slack).ok();
        }
    }
    if report.passed {
        writeln!(out, "ok: {} cells verified", report.cells.len()).ok();
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} failed checks{}",
            report.failures,
            if report.truncated { " (sweep was truncated)" } else { "" }
        )))
    }
}

/// Parses `SEPGD_THREADS`; `None` leaves rayon's default.
pub fn threads_from_env(value: Option<&str>) -> CliResult<Option<usize>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("SEPGD_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
