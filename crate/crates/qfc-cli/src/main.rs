//! `qfc`: run a scenario file through the matching pipeline.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 check verdict "fail" (the *-check kinds only), 1 i/o trouble.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qfc_cli::run::{run_scenario, RunError};
use qfc_cli::scenario::{parse_scenario, Kind};

#[derive(Parser)]
#[command(name = "qfc", version, about = "Quantum filtering and control scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic master-equation path
    Master(RunArgs),
    /// Trajectory ensemble under continuous diffusive readout
    FilterDiffusive(RunArgs),
    /// Trajectory ensemble under counting readout
    FilterJump(RunArgs),
    /// Riccati flows, optimal gains, minimal cost, optional closed-loop MC
    LqgRun(RunArgs),
    /// Filtering/control duality gap report (pass/fail)
    DualityCheck(RunArgs),
    /// Dynamic-programming residual sweep (pass/fail)
    BellmanCheck(RunArgs),
    /// Increment-table pseudo-unitarity report (pass/fail)
    ItoCheck(RunArgs),
}

impl Command {
    fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Master(a) => (Kind::Master, a),
            Command::FilterDiffusive(a) => (Kind::FilterDiffusive, a),
            Command::FilterJump(a) => (Kind::FilterJump, a),
            Command::LqgRun(a) => (Kind::LqgRun, a),
            Command::DualityCheck(a) => (Kind::DualityCheck, a),
            Command::BellmanCheck(a) => (Kind::BellmanCheck, a),
            Command::ItoCheck(a) => (Kind::ItoCheck, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides output.dir from the scenario
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; replaces numerics.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble pipelines (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Parse and validate the scenario, then exit without running
    #[arg(long)]
    validate_only: bool,
}

fn main() -> ExitCode {
    ExitCode::from(real_main())
}

fn real_main() -> u8 {
    let (kind, args) = Cli::parse().command.split();

    if let Some(n) = args.threads {
        // ignore the error when tests or embedders already installed a pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.scenario.display());
            return 2;
        }
    };

    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(errs) => {
            for e in &errs {
                eprintln!("error: {e}");
            }
            eprintln!("{} validation error(s) in {}", errs.len(), args.scenario.display());
            return 2;
        }
    };

    if scenario.kind != kind {
        eprintln!(
            "error: kind: scenario declares \"{}\" but was invoked as \"{}\"",
            scenario.kind, kind
        );
        return 2;
    }

    if let Some(seed) = args.seed {
        scenario.numerics.seed = seed;
    }

    if args.validate_only {
        println!("ok: {} scenario is valid", scenario.kind);
        return 0;
    }

    let out_dir = match args.out.or_else(|| scenario.out_dir.clone().map(PathBuf::from)) {
        Some(dir) => dir,
        None => {
            eprintln!("error: output.dir: no output directory configured and --out not given");
            return 2;
        }
    };

    match run_scenario(&scenario, &out_dir) {
        Ok(outcome) => {
            println!(
                "wrote {} artifact(s) + manifest.json to {}",
                outcome.manifest.files.len(),
                out_dir.display()
            );
            match outcome.check_failed {
                None => 0,
                Some(msg) => {
                    eprintln!("check failed: {msg}");
                    4
                }
            }
        }
        Err(e @ RunError::Validation(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e @ RunError::Numerical { .. }) => {
            eprintln!("error: {e}");
            3
        }
        Err(e @ RunError::Io(_)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
