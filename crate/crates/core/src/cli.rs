//! Command-line front end.
//!
//! Exit status: 0 success, 1 configuration or input error, 2 a run aborted in
//! the solver or on a non-finite loss, 3 a `verify` check failed.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::editors::EditorKind;
use crate::error::{Error, Result};
use crate::harness::{compare, measure_d_base, run, sweep_alpha, RunConfig, RunOutcome};
use crate::oracle::run_verify_suite;
use crate::report::{records_csv, summaries_csv, summary_line};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable capping compare/sweep parallelism.
pub const THREADS_ENV: &str = "LYAPEDIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lyapedit", version, about = "Sequential associative-memory editing under a long-term preservation constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunFlags {
    /// Run-configuration document (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `stream.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress the summary line.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one editor over the configured stream and write per-step records.
    Simulate(RunFlags),
    /// Run several editors on the same stream; one CSV row per editor.
    Compare(RunFlags),
    /// Run the configured editor once per `sweep.alphas`; one CSV row per α.
    Sweep(RunFlags),
    /// Run the built-in oracle checks.
    Verify {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Print the measured one-edit preservation loss `D_base`.
    Dbase(RunFlags),
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::InvalidParameter {
            name: THREADS_ENV,
            reason: format!("expected a nonnegative integer, got {v:?}"),
        }),
    }
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// The summary goes to stdout when the CSV has its own file, else to stderr.
fn note(flags: &RunFlags, stdout: &mut dyn Write, stderr: &mut dyn Write, line: &str) -> Result<()> {
    if flags.quiet {
        return Ok(());
    }
    let sink: &mut dyn Write = if flags.out.is_some() { stdout } else { stderr };
    writeln!(sink, "{line}")?;
    Ok(())
}

fn abort_code(outcomes: &[RunOutcome]) -> i32 {
    if outcomes.iter().all(|o| o.summary.status.is_completed()) {
        EXIT_OK
    } else {
        EXIT_ABORT
    }
}

fn simulate(flags: &RunFlags, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = Config::load(&flags.config, flags.seed)?;
    let outcome = run(&cfg.run)?;
    emit(flags.out.as_deref(), stdout, &records_csv(&outcome))?;
    note(flags, stdout, stderr, &summary_line(&outcome.summary))?;
    Ok(abort_code(std::slice::from_ref(&outcome)))
}

fn compare_cmd(flags: &RunFlags, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = Config::load(&flags.config, flags.seed)?;
    let editors = cfg
        .compare_editors
        .clone()
        .unwrap_or_else(|| vec![EditorKind::Lyaplock, EditorKind::Baseline, EditorKind::EditOnly]);
    let configs: Vec<RunConfig> = editors
        .into_iter()
        .map(|editor| RunConfig { editor, ..cfg.run.clone() })
        .collect();
    let outcomes = compare(&configs, threads()?)?;
    emit(flags.out.as_deref(), stdout, &summaries_csv(outcomes.iter().map(|o| &o.summary)))?;
    for o in &outcomes {
        note(flags, stdout, stderr, &summary_line(&o.summary))?;
    }
    Ok(abort_code(&outcomes))
}

fn sweep_cmd(flags: &RunFlags, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = Config::load(&flags.config, flags.seed)?;
    let alphas = cfg
        .sweep_alphas
        .clone()
        .ok_or_else(|| Error::Config("sweep needs `sweep.alphas`".into()))?;
    let outcomes = sweep_alpha(&cfg.run, &alphas, threads()?)?;
    emit(flags.out.as_deref(), stdout, &summaries_csv(outcomes.iter().map(|o| &o.summary)))?;
    for o in &outcomes {
        note(flags, stdout, stderr, &summary_line(&o.summary))?;
    }
    Ok(abort_code(&outcomes))
}

fn dbase(flags: &RunFlags, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = Config::load(&flags.config, flags.seed)?;
    let d = measure_d_base(&cfg.run)?;
    let text = format!("d_base={}\n", crate::report::fmt_f64(d));
    emit(flags.out.as_deref(), stdout, &text)?;
    Ok(EXIT_OK)
}

fn verify(seed: u64, quiet: bool, stdout: &mut dyn Write) -> Result<i32> {
    let checks = run_verify_suite(seed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        if !quiet || !c.passed {
            writeln!(stdout, "{c}")?;
        }
    }
    if !quiet {
        writeln!(stdout, "{} checks, {failed} failed", checks.len())?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
}

/// Runs one parsed command and returns the process exit status.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Simulate(f) => simulate(f, stdout, stderr),
        Command::Compare(f) => compare_cmd(f, stdout, stderr),
        Command::Sweep(f) => sweep_cmd(f, stdout, stderr),
        Command::Dbase(f) => dbase(f, stdout),
        Command::Verify { seed, quiet } => verify(*seed, *quiet, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::SingularSystem { .. } | Error::NumericalInstability { .. } | Error::NonFinite(_) => EXIT_ABORT,
                _ => EXIT_CONFIG,
            }
        }
    }
}
