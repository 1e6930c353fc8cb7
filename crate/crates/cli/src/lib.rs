//! `partsim validate | run | report`.
//!
//! Exit codes: 0 success, 1 validation findings or invalid scenario,
//! 2 runtime fault (the health monitor halted the system), 3 I/O error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use partsim_core::config::{parse_config, validate};
use partsim_core::harness::{
    export_csv, read_csv, simulate, summarize_groups, summary_table, HarnessError, Horizon,
    Scenario, Workload,
};
use partsim_core::scheduler::export_trace;
use partsim_core::time::Duration;

pub const SEED_ENV: &str = "PARTSIM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Success = 0,
    Findings = 1,
    Runtime = 2,
    Io = 3,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "partsim",
    version,
    about = "Partitioned hypervisor and broker latency simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a system configuration and print every finding.
    Validate { config: PathBuf },
    /// Run a scenario, write its CSV and print a summary.
    Run(RunArgs),
    /// Summarize one or more result CSV files.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Result CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run each repetition for this many major frames.
    #[arg(long, conflicts_with = "until")]
    pub frames: Option<u64>,
    /// Run each repetition until this time, e.g. 10ms.
    #[arg(long)]
    pub until: Option<Duration>,
    /// Base seed; falls back to PARTSIM_SEED, then the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the event trace of the first repetition here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Runs one command, writing normal output to `out` and diagnostics to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    match cli.command {
        Command::Validate { config } => cmd_validate(&config, out, err),
        Command::Run(args) => cmd_run(&args, std::env::var(SEED_ENV).ok(), out, err),
        Command::Report { csv } => cmd_report(&csv, out, err),
    }
}

pub fn cmd_validate(path: &PathBuf, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            return Exit::Io;
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(out, "ERROR PARSE_ERROR {} {e}", path.display());
            return Exit::Findings;
        }
    };
    let findings = validate(&config);
    for f in findings.iter() {
        let _ = writeln!(out, "{f}");
    }
    if findings.is_empty() {
        Exit::Success
    } else {
        Exit::Findings
    }
}

fn harness_exit(e: &HarnessError) -> Exit {
    match e {
        HarnessError::ScenarioInvalid(_) | HarnessError::EmptyResult => Exit::Findings,
        HarnessError::SystemHalted { .. } => Exit::Runtime,
        HarnessError::Io { .. } | HarnessError::MalformedCsv(_) => Exit::Io,
    }
}

pub fn cmd_run(
    args: &RunArgs,
    env_seed: Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Exit {
    let mut scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return harness_exit(&e);
        }
    };
    let seed = match (args.seed, env_seed) {
        (Some(s), _) => Some(s),
        (None, Some(v)) => match v.trim().parse() {
            Ok(s) => Some(s),
            Err(_) => {
                let _ = writeln!(err, "{SEED_ENV} is not an unsigned integer: '{v}'");
                return Exit::Findings;
            }
        },
        (None, None) => None,
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let horizon = match (args.frames, args.until) {
        (Some(n), _) => Some(Horizon::Frames(n)),
        (None, Some(t)) => Some(Horizon::Until(t)),
        (None, None) => None,
    };
    if let (Some(h), Workload::Partitioned(setup)) = (horizon, &mut scenario.workload) {
        setup.horizon = h;
    }

    if let Some(trace_path) = &args.trace {
        let Workload::Partitioned(setup) = &scenario.workload else {
            let _ = writeln!(err, "--trace needs a partitioned scenario");
            return Exit::Findings;
        };
        let problems = scenario.check();
        if !problems.is_empty() {
            let e = HarnessError::ScenarioInvalid(problems);
            let _ = writeln!(err, "{e}");
            return harness_exit(&e);
        }
        let state = simulate(setup, scenario.payload_sizes[0], None);
        if let Err(e) = std::fs::write(trace_path, export_trace(state.trace())) {
            let _ = writeln!(err, "{}: {e}", trace_path.display());
            return Exit::Io;
        }
    }

    let result = match partsim_core::run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return harness_exit(&e);
        }
    };
    if let Some(path) = &args.out {
        if let Err(e) = export_csv(&result, path) {
            let _ = writeln!(err, "{e}");
            return Exit::Io;
        }
    }
    let _ = write!(out, "{}", summary_table(&result.summaries()));
    Exit::Success
}

pub fn cmd_report(paths: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    let mut rows = Vec::new();
    for path in paths {
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", path.display());
                return Exit::Io;
            }
        };
        match read_csv(file) {
            Ok(r) => rows.extend(r),
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", path.display());
                return Exit::Io;
            }
        }
    }
    if rows.is_empty() {
        let _ = writeln!(out, "no data");
        return Exit::Success;
    }
    let groups = summarize_groups(rows.iter().map(|(s, m, r)| (s.as_str(), *m, r)));
    let _ = write!(out, "{}", summary_table(&groups));
    Exit::Success
}
