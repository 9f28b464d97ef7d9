use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};

use sepgd_cli::{cmd_rates, cmd_run, cmd_sweep, cmd_validate, cmd_verify, load, threads_from_env, CliError, CliResult};

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint() {
    let handler = on_sigint as extern "C" fn(libc::c_int);
    // SAFETY: the handler only stores to an atomic, which is async-signal-safe.
    unsafe {
        libc::signal(libc::SIGINT, handler as libc::sighandler_t);
    }
}

/// Gradient descent on separable data: certificates, trials, sweeps and rates.
#[derive(Parser)]
#[command(name = "sepgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON run configuration.
    config: PathBuf,
    /// Override a config field, e.g. `--set sweep.T=1000`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory; same as `--set output_dir=DIR`.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the tail and loss and build the distribution.
    Validate(ConfigArgs),
    /// Train once at the configured seed and compare against the bounds.
    Run(ConfigArgs),
    /// Run every cell of the configured grid.
    Sweep(ConfigArgs),
    /// Closed-form rates and predicted slopes for the configured family.
    Rates(ConfigArgs),
    /// Check a written sweep.json against the lemma and bound criteria.
    Verify {
        /// Path to sweep.json.
        sweep: PathBuf,
    },
}

fn configure(args: &ConfigArgs) -> CliResult<sepgd_cli::RunConfig> {
    let mut cfg = load(&args.config, &args.overrides)?;
    if let Some(dir) = &args.out {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = threads_from_env(std::env::var("SEPGD_THREADS").ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("SEPGD_THREADS: {e}")))?;
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Validate(a) => cmd_validate(&configure(&a)?, &mut out),
        Command::Run(a) => cmd_run(&configure(&a)?, &mut out).map(drop),
        Command::Sweep(a) => {
            let cfg = configure(&a)?;
            install_sigint();
            cmd_sweep(&cfg, Some(&INTERRUPTED), &mut out).map(drop)
        }
        Command::Rates(a) => cmd_rates(&configure(&a)?, &mut out).map(drop),
        Command::Verify { sweep } => cmd_verify(&sweep, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            io::stdout().flush().ok();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
