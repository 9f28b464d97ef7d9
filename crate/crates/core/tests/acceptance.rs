//! Acceptance gate: one `acceptance <name>: PASS|FAIL …` line per criterion.
//!
//! Lines go straight to stdout, past libtest's capture, so they show up in a
//! plain `cargo test` run.

use std::f64::consts::E;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use sepgd_core::experiments::io::trial_rows_csv;
use sepgd_core::experiments::{
    estimate_event_probs, fit_slope, run_sweep, run_sweep_streaming, verify_bounds, Axis, DistributionSpec,
    EtaSpec, PreparedCell, ProbReport, SweepAxes, SweepConfig, SweepResult, TrialConfig, TrialRow,
};
use sepgd_core::loss::{make_linear_extension, make_quadratic_extension, LossFunction};
use sepgd_core::numeric::wilson_interval;
use sepgd_core::optim::Algo;
use sepgd_core::rng::stream_rng;
use sepgd_core::tail::{lower_feasibility_threshold, LOWER_CAP};
use sepgd_core::{check_loss_class, check_tail_axioms, LossName, TailFunction, TailSpec};

const SEED: u64 = 20_240_601;

fn report(name: &str, pass: bool, detail: String) {
    let line = format!("acceptance {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).ok();
    out.flush().ok();
}

fn builtin_tails() -> Vec<(TailSpec, TailFunction)> {
    let specs = vec![
        TailSpec::exponential(),
        TailSpec::polynomial(1.0),
        TailSpec::polynomial(2.0),
        TailSpec::polynomial(4.0),
        TailSpec::stretched_exponential(0.5),
        TailSpec::stretched_exponential(2.0),
        TailSpec::stretched_exponential(3.0),
    ];
    specs
        .into_iter()
        .map(|s| {
            let t = s.build().unwrap();
            (s, t)
        })
        .collect()
}

fn check_certification() -> bool {
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut failed = Vec::new();
    for (_, tail) in builtin_tails() {
        let ax = check_tail_axioms(&tail, &tail.default_grid());
        worst = worst.max(ax.worst_violation());
        if !ax.passed() {
            failed.push(tail.label());
        }
        let losses: [LossFunction; 2] = [
            make_quadratic_extension(&tail).unwrap(),
            make_linear_extension(&tail).unwrap(),
        ];
        for loss in &losses {
            let m = check_loss_class(loss, &tail, &LossFunction::default_grid(&tail));
            worst = worst.max(m.worst_violation());
            if !m.passed() {
                failed.push(loss.label().to_string());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failed.is_empty() && worst <= 1e-9 && secs < 10.0;
    report(
        "certification",
        pass,
        format!("7 tails x 2 extensions, worst violation {worst:.3e}, {secs:.1} s, failed {failed:?}"),
    );
    pass
}

/// A random separable distribution in `d` dimensions.
fn random_custom(rng: &mut impl Rng) -> DistributionSpec {
    let d = [2usize, 3, 5][rng.gen_range(0..3)];
    let mut w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= s);
    let k = rng.gen_range(1..=8);
    let mut support = Vec::new();
    while support.len() < k {
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nz = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let m: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum();
        if nz <= 1.0 && m >= 0.02 {
            support.push(z);
        }
    }
    let gamma = support
        .iter()
        .map(|z| z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DistributionSpec::Custom {
        support,
        probs: raw.iter().map(|p| p / total).collect(),
        w_star: w,
        gamma: Some(gamma),
    }
}

fn check_deterministic_lemmas() -> bool {
    let start = Instant::now();
    let tails = builtin_tails();
    let mut rng = stream_rng(SEED, 7);
    let (mut trials, mut gd, mut sgd) = (0usize, 0usize, 0usize);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut violations = Vec::new();
    while trials < 1000 {
        let (spec, tail) = tails[rng.gen_range(0..tails.len())].clone();
        let loss = match rng.gen_range(0..3) {
            0 => LossName::QuadraticExtension,
            1 => LossName::LinearExtension,
            _ if matches!(spec.family, sepgd_core::tail::TailFamilyName::Exponential) => LossName::Logistic,
            _ => LossName::QuadraticExtension,
        };
        let gamma = rng.gen_range(0.02..=0.125);
        let steps = 10f64.powf(rng.gen_range(0.0..=4.0)).round() as u64;
        let n = rng.gen_range(35..=300);
        let distribution = match rng.gen_range(0..3) {
            0 => DistributionSpec::BigT,
            1 => DistributionSpec::SmallT {
                eps: Some(rng.gen_range(0.001..(tail.at_zero() / 8.0))),
            },
            _ => random_custom(&mut rng),
        };
        let mut cfg = TrialConfig::new(spec, loss, distribution, gamma, steps, n);
        let beta = loss.build(&tail).unwrap().beta();
        cfg.eta = EtaSpec::Value(rng.gen_range(0.05..=1.0) * 0.5 / beta);
        cfg.algo = if rng.gen_bool(0.5) { Algo::Gd } else { Algo::Sgd };
        if rng.gen_bool(0.5) {
            cfg.reference_eps = Some(10f64.powf(rng.gen_range(-8.0..0.0)) * tail.at_zero());
        }
        let prepared = match PreparedCell::new(&cfg) {
            Ok(p) => p,
            // Few-steps instances need T large enough for a valid rare mass.
            Err(_) if matches!(cfg.distribution, DistributionSpec::SmallT { .. }) => continue,
            Err(e) => panic!("{e} for {cfg:?}"),
        };
        let r = prepared.run(rng.gen()).unwrap();
        match cfg.algo {
            Algo::Gd => gd += 1,
            Algo::Sgd => sgd += 1,
        }
        for v in &r.violations {
            if ["norm", "descent", "opt_error", "iterate_norm", "regret"].contains(&v.name.as_str()) {
                match worst.iter_mut().find(|(n, _)| *n == v.name) {
                    Some(w) => w.1 = w.1.max(v.slack),
                    None => worst.push((v.name.clone(), v.slack)),
                }
            }
        }
        for v in r.deterministic_violations() {
            violations.push(format!("{} slack {:.3e} in {:?}", v.name, v.slack, cfg));
        }
        trials += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violations.is_empty() && secs < 300.0;
    let worst: Vec<String> = worst.iter().map(|(n, s)| format!("{n} {s:.2e}")).collect();
    report(
        "deterministic_lemmas",
        pass,
        format!(
            "{trials} trials ({gd} GD, {sgd} SGD), {} violations, max slack [{}], {secs:.1} s",
            violations.len(),
            worst.join(", ")
        ),
    );
    for v in violations.iter().take(5) {
        report("deterministic_lemmas", false, format!("violation: {v}"));
    }
    pass
}

fn upper_grid_sweeps() -> Vec<(String, SweepConfig)> {
    let mut out = Vec::new();
    for (tname, spec) in [("exponential", TailSpec::exponential()), ("polynomial2", TailSpec::polynomial(2.0))] {
        for (dname, loss, dist) in [
            ("big_t", LossName::QuadraticExtension, DistributionSpec::BigT),
            ("small_t", LossName::LinearExtension, DistributionSpec::SmallT { eps: Some(1.0 / 16.0) }),
        ] {
            let base = TrialConfig::new(spec.clone(), loss, dist, 1.0 / 16.0, 100, 50);
            out.push((
                format!("{tname}/{dname}"),
                SweepConfig {
                    base,
                    axes: SweepAxes {
                        steps: vec![100, 1000, 10_000],
                        n: vec![50, 500, 5000],
                        gamma: vec![],
                    },
                    trials: 20,
                    min_trials: 20,
                    seed: SEED,
                },
            ));
        }
    }
    out
}

fn sweep_rows(cfg: &SweepConfig) -> (SweepResult, Vec<TrialRow>) {
    let mut rows = Vec::new();
    let r = run_sweep_streaming(cfg, None, |cell, trials| {
        rows.extend(trials.iter().enumerate().map(|(i, t)| t.row(cell.cell, i)));
        Ok(())
    })
    .unwrap();
    (r, rows)
}

fn check_upper_bound() -> bool {
    let start = Instant::now();
    let (mut trials, mut violated, mut det) = (0usize, 0usize, 0usize);
    let mut max_ratio = 0.0f64;
    for (_, cfg) in upper_grid_sweeps() {
        let (r, rows) = sweep_rows(&cfg);
        for row in &rows {
            trials += 1;
            if row.viol_upper == Some(true) {
                violated += 1;
            }
            max_ratio = max_ratio.max(row.pop_risk / row.upper_bound);
        }
        det += r.cells.iter().map(|c| c.deterministic_violations).sum::<usize>();
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violated == 0 && det == 0 && secs < 600.0;
    report(
        "upper_bound",
        pass,
        format!(
            "{trials} GD trials, {violated} above the bound (K = 1e5), max risk/bound {max_ratio:.3e}, {det} lemma violations, {secs:.1} s"
        ),
    );
    pass
}

fn threshold_steps() -> u64 {
    lower_feasibility_threshold(&TailFunction::exponential(), 1.0 / 16.0, 0.5, LOWER_CAP).unwrap()
}

fn many_steps_sweep() -> SweepConfig {
    let mut base = TrialConfig::new(
        TailSpec::exponential(),
        LossName::QuadraticExtension,
        DistributionSpec::BigT,
        1.0 / 16.0,
        threshold_steps(),
        35,
    );
    base.eta = EtaSpec::Value(0.5);
    SweepConfig {
        base,
        axes: SweepAxes {
            steps: vec![],
            n: vec![35, 70, 140, 280],
            gamma: vec![],
        },
        trials: 2000,
        min_trials: 2000,
        seed: SEED,
    }
}

fn check_lower_bound_many_steps() -> bool {
    let start = Instant::now();
    let steps = threshold_steps();
    let cfg = many_steps_sweep();
    let sweep = run_sweep(&cfg).unwrap();
    let verdict = verify_bounds(&sweep);
    let fit = fit_slope(&sweep, Axis::N).unwrap();
    let expected = |n: f64| (1.0 / (120.0 * E * n)) * (256.0 / 1152.0) * std::f64::consts::LN_2.powi(2);
    let constants_ok = sweep
        .cells
        .iter()
        .all(|c| (c.lower_bound.unwrap() - expected(c.n as f64)).abs() <= 1e-12 * expected(c.n as f64));
    let cells: Vec<String> = sweep
        .cells
        .iter()
        .map(|c| {
            format!(
                "n={} mean {:.3e} se {:.1e} lower {:.3e}",
                c.n,
                c.mean_pop_risk,
                c.stderr_pop_risk,
                c.lower_bound.unwrap()
            )
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = verdict.passed && constants_ok && (-1.5..=-0.5).contains(&fit.slope) && secs < 900.0;
    report(
        "lower_bound_many_steps",
        pass,
        format!(
            "T = {steps}, slope over n {:.3} [{:.3}, {:.3}], {}; {secs:.1} s",
            fit.slope,
            fit.ci_lo,
            fit.ci_hi,
            cells.join("; ")
        ),
    );
    pass
}

fn few_steps_sweep(spec: TailSpec, steps: Vec<u64>, eps: Option<f64>, trials: usize) -> SweepConfig {
    let base = TrialConfig::new(
        spec,
        LossName::LinearExtension,
        DistributionSpec::SmallT { eps },
        1.0 / 16.0,
        steps[0],
        10_000,
    );
    SweepConfig {
        base,
        axes: SweepAxes {
            steps,
            n: vec![],
            gamma: vec![],
        },
        trials,
        min_trials: trials,
        seed: SEED,
    }
}

fn describe(sweep: &SweepResult) -> String {
    sweep
        .cells
        .iter()
        .map(|c| {
            format!(
                "T={} eps {:.3e} mean {:.3e} lower {:.3e}",
                c.steps,
                c.eps,
                c.mean_pop_risk,
                c.lower_bound.unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// The three decades plus midpoints, so the slope fit has five points.
fn exponential_few_steps_sweep() -> SweepConfig {
    few_steps_sweep(
        TailSpec::exponential(),
        vec![100, 300, 1000, 3000, 10_000],
        Some(1.0 / 16.0),
        2000,
    )
}

fn check_lower_bound_few_steps() -> bool {
    let start = Instant::now();
    let sweep = run_sweep(&exponential_few_steps_sweep()).unwrap();
    let verdict = verify_bounds(&sweep);
    let fit = fit_slope(&sweep, Axis::T).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = verdict.passed && (-1.05..=-0.6).contains(&fit.slope) && secs < 900.0;
    report(
        "lower_bound_few_steps",
        pass,
        format!(
            "slope over T {:.3} [{:.3}, {:.3}], {}; {secs:.1} s",
            fit.slope,
            fit.ci_lo,
            fit.ci_hi,
            describe(&sweep)
        ),
    );
    pass
}

fn polynomial_exponent_sweep() -> SweepConfig {
    few_steps_sweep(
        TailSpec::polynomial(2.0),
        vec![1_000_000, 3_000_000, 10_000_000, 30_000_000],
        None,
        500,
    )
}

fn check_polynomial_exponent() -> bool {
    let start = Instant::now();
    let sweep = run_sweep(&polynomial_exponent_sweep()).unwrap();
    let fit = fit_slope(&sweep, Axis::T).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (fit.slope + 0.5).abs() <= 0.2;
    report(
        "polynomial_exponent",
        pass,
        format!(
            "slope over T {:.3} [{:.3}, {:.3}] vs -1/2, {}; {secs:.1} s",
            fit.slope,
            fit.ci_lo,
            fit.ci_hi,
            describe(&sweep)
        ),
    );
    pass
}

fn event_probs() -> ProbReport {
    estimate_event_probs(1.0 / 16.0, 50, 1_000_000, SEED).unwrap()
}

fn check_event_probabilities() -> bool {
    let start = Instant::now();
    let p = event_probs();
    let analytic = p.a1.analytic.unwrap();
    let within = (p.a1.estimate - analytic).abs() <= 3.0 * p.a1.stderr();
    let secs = start.elapsed().as_secs_f64();
    let pass = p.a1.exceeds_floor && p.a2_given_a1.exceeds_floor && p.a1_and_a2.exceeds_floor && within && secs < 120.0;
    let show = |e: &sepgd_core::experiments::EventEstimate| {
        format!("{} {:.5} [{:.5}, {:.5}] floor {:.5}", e.name, e.estimate, e.ci_lo, e.ci_hi, e.floor)
    };
    report(
        "event_probabilities",
        pass,
        format!(
            "{}; {}; {}; analytic a1 {analytic:.5}; {secs:.1} s",
            show(&p.a1),
            show(&p.a2_given_a1),
            show(&p.a1_and_a2)
        ),
    );
    pass
}

fn sgd_sweep() -> SweepConfig {
    let mut base = TrialConfig::new(
        TailSpec::exponential(),
        LossName::QuadraticExtension,
        DistributionSpec::BigT,
        1.0 / 16.0,
        1000,
        200,
    );
    base.eta = EtaSpec::Value(0.5);
    base.delta = 0.1;
    base.algo = Algo::Sgd;
    SweepConfig {
        base,
        axes: SweepAxes::default(),
        trials: 2000,
        min_trials: 2000,
        seed: SEED,
    }
}

fn check_sgd_high_probability() -> bool {
    let start = Instant::now();
    let (sweep, rows) = sweep_rows(&sgd_sweep());
    let r = rows.len() as u64;
    let k = rows.iter().filter(|t| t.viol_sgd_empirical == Some(true)).count() as u64;
    let (lo, hi) = wilson_interval(k, r, 1.959_963_984_540_054);
    let half = (hi - lo) / 2.0;
    let frac = k as f64 / r as f64;
    let det = sweep.cells[0].deterministic_violations;
    let secs = start.elapsed().as_secs_f64();
    let pass = frac <= 0.1 + half && det == 0;
    let max_ratio = rows.iter().map(|t| t.emp_risk / t.sgd_bound.unwrap()).fold(0.0, f64::max);
    report(
        "sgd_high_probability",
        pass,
        format!(
            "{k}/{r} trials above the bound (fraction {frac:.4}, allowed {:.4}), max risk/bound {max_ratio:.3e}, {det} lemma violations, {secs:.1} s",
            0.1 + half
        ),
    );
    pass
}

fn probs_csv(p: &ProbReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["event", "successes", "trials", "estimate", "ci_lo", "ci_hi", "floor", "analytic"])
        .unwrap();
    for e in [&p.a1, &p.a2_given_a1, &p.a1_and_a2] {
        w.serialize((&e.name, e.successes, e.trials, e.estimate, e.ci_lo, e.ci_hi, e.floor, e.analytic))
            .unwrap();
    }
    w.into_inner().unwrap()
}

fn check_reproducibility() -> bool {
    let start = Instant::now();
    let mut checked = Vec::new();
    let mut same = true;
    let rows_csv = |cfg: &SweepConfig| trial_rows_csv(&sweep_rows(cfg).1).unwrap();
    for (name, cfg) in upper_grid_sweeps() {
        let ok = rows_csv(&cfg) == rows_csv(&cfg);
        same &= ok;
        checked.push(format!("{name}={ok}"));
    }
    for (name, cfg) in [
        ("lower_bound_many_steps", many_steps_sweep()),
        ("lower_bound_few_steps", exponential_few_steps_sweep()),
    ] {
        let ok = rows_csv(&cfg) == rows_csv(&cfg);
        same &= ok;
        checked.push(format!("{name}={ok}"));
    }
    let poly = polynomial_exponent_sweep();
    let ok = rows_csv(&poly) == rows_csv(&poly);
    same &= ok;
    checked.push(format!("polynomial_exponent={ok}"));
    let ok = probs_csv(&event_probs()) == probs_csv(&event_probs());
    same &= ok;
    checked.push(format!("event_probabilities={ok}"));
    let sgd = sgd_sweep();
    let ok = rows_csv(&sgd) == rows_csv(&sgd);
    same &= ok;
    checked.push(format!("sgd={ok}"));
    let secs = start.elapsed().as_secs_f64();
    report(
        "reproducibility",
        same,
        format!("byte-identical CSV on rerun: {}; {secs:.1} s", checked.join(", ")),
    );
    same
}


#[test]
fn certification() {
    assert!(check_certification());
}

#[test]
fn deterministic_lemmas() {
    assert!(check_deterministic_lemmas());
}

#[test]
fn upper_bound() {
    assert!(check_upper_bound());
}

#[test]
fn lower_bound_many_steps() {
    assert!(check_lower_bound_many_steps());
}

#[test]
fn lower_bound_few_steps() {
    assert!(check_lower_bound_few_steps());
}

#[test]
fn polynomial_exponent() {
    assert!(check_polynomial_exponent());
}

#[test]
fn event_probabilities() {
    assert!(check_event_probabilities());
}

#[test]
fn sgd_high_probability() {
    assert!(check_sgd_high_probability());
}

#[test]
fn reproducibility() {
    assert!(check_reproducibility());
}
