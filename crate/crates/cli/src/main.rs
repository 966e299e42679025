//! `qls`: run control experiments described by a TOML config.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 tolerance failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;
mod run;

use anyhow::Result;
use artifacts::Artifacts;
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qls", version, about = "Control experiments for quasi-linear Schrödinger equations on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 1 runs the sequential path and gives bit-identical tables.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Geometric control condition report for the configured region.
    CheckGcc { config: PathBuf },
    /// Uncontrolled nonlinear run with a conservation table.
    Solve { config: PathBuf },
    /// Linear null control by HUM.
    HumControl { config: PathBuf },
    /// Nonlinear null control by Picard iteration.
    NonlinearControl { config: PathBuf },
    /// Exact control between two small states.
    ExactControl { config: PathBuf },
    /// Duality, operator identities, observability and diagonalization defects.
    Diagnose { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckGcc { .. } => "check-gcc",
            Command::Solve { .. } => "solve",
            Command::HumControl { .. } => "hum-control",
            Command::NonlinearControl { .. } => "nonlinear-control",
            Command::ExactControl { .. } => "exact-control",
            Command::Diagnose { .. } => "diagnose",
        }
    }

    fn config(&self) -> &Path {
        match self {
            Command::CheckGcc { config }
            | Command::Solve { config }
            | Command::HumControl { config }
            | Command::NonlinearControl { config }
            | Command::ExactControl { config }
            | Command::Diagnose { config } => config,
        }
    }
}

fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    match e.downcast_ref::<qls_core::Error>() {
        Some(qls_core::Error::Validation(_)) => ("validation", 2),
        Some(qls_core::Error::Tolerance(_)) => ("tolerance", 4),
        Some(_) => ("numerical", 3),
        None if e.downcast_ref::<toml::de::Error>().is_some() => ("validation", 2),
        None => ("numerical", 3),
    }
}

fn failure_record(kind: &str, code: u8, e: &anyhow::Error) -> String {
    format!("status=error\nkind={kind}\nexit_code={code}\nmessage={}\n", format!("{e:#}").replace('\n', " "))
}

fn configure_threads(threads: usize) -> Result<()> {
    let threads = threads.max(1);
    qls_core::exec::set_parallel(threads > 1);
    if threads > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn execute(cmd: Command, cfg: &ExperimentConfig, base: &Path, out: &mut Artifacts) -> Result<()> {
    out.text("config.toml", &cfg.to_toml()?)?;
    let mut ctx = run::Context { cfg, base, out };
    match cmd {
        Command::CheckGcc { .. } => run::check_gcc_cmd(&mut ctx),
        Command::Solve { .. } => run::solve_cmd(&mut ctx),
        Command::HumControl { .. } => run::hum_control_cmd(&mut ctx),
        Command::NonlinearControl { .. } => run::nonlinear_control_cmd(&mut ctx),
        Command::ExactControl { .. } => run::exact_control_cmd(&mut ctx),
        Command::Diagnose { .. } => run::diagnose_cmd(&mut ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cmd = cli.command;
    let path = cmd.config().to_path_buf();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{}", failure_record("validation", 2, &e));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprint!("{}", failure_record("validation", 2, &e));
        return ExitCode::from(2);
    }
    let dir = base.join(&cfg.output.dir).join(cmd.name());
    let mut out = match Artifacts::create(&dir, cfg.output.field_dumps, cfg.output.trajectory_stride) {
        Ok(o) => o,
        Err(e) => {
            eprint!("{}", failure_record("numerical", 3, &e));
            return ExitCode::from(3);
        }
    };
    let result = execute(cmd.clone(), &cfg, &base, &mut out).and_then(|()| out.checks_table());
    let (status, code) = match &result {
        Ok(()) if out.all_pass() => ("ok", 0),
        Ok(()) => ("tolerance", 4),
        Err(e) => {
            let (kind, code) = classify(e);
            let rec = failure_record(kind, code, e);
            eprint!("{rec}");
            let _ = out.text("failure.txt", &rec);
            (kind, code)
        }
    };
    for c in out.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {}={:.3e} tolerance={:.3e}", c.name, c.value, c.tolerance);
    }
    if let Err(e) = out.manifest(cmd.name(), status, i32::from(code)) {
        eprintln!("could not write manifest: {e:#}");
        return ExitCode::from(3);
    }
    println!("status={status} output={}", dir.display());
    ExitCode::from(code)
}
