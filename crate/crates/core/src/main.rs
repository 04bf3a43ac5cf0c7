use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quadom::cli::{self, Command, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "quadom", version, about = "Quadratic optomechanics simulator")]
struct Args {
    #[command(subcommand)]
    command: Verb,

    /// Config file (`key = value` lines); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Force the momentum-field coupling off.
    #[arg(long, global = true)]
    no_nonstandard: bool,

    /// Weight `m + 1/2` on |S14|² instead of |S16|².
    #[arg(long, global = true)]
    eq19_literal: bool,

    /// Thermal phonon occupancy in the input weights.
    #[arg(long, global = true)]
    thermal_input: bool,

    /// Worker threads; falls back to QUADOM_JOBS.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Steady-state populations over the drive sweep.
    Steady,
    /// Output spectra with and without the momentum-field coupling.
    Spectrum,
    /// Stability map over imposed populations.
    Stability,
    /// Operator algebra and solver cross-checks.
    Verify,
    /// Drive sweep for every configured frequency ratio.
    Sweep,
}

fn load(args: &Args) -> quadom::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if args.no_nonstandard {
        cfg.include_nonstandard = false;
    }
    cfg.eq19_literal |= args.eq19_literal;
    cfg.thermal_input |= args.thermal_input;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("quadom: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let jobs = args.jobs.or_else(|| {
        std::env::var("QUADOM_JOBS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
    });
    let cmd = match args.command {
        Verb::Steady => Command::Steady,
        Verb::Spectrum => Command::Spectrum,
        Verb::Stability => Command::Stability,
        Verb::Verify => Command::Verify,
        Verb::Sweep => Command::Sweep,
    };
    match cli::run(cmd, &cfg, &args.out, jobs) {
        Ok(outcome) => {
            for note in &outcome.notes {
                eprintln!("{note}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("quadom: {e}");
            ExitCode::from(cli::exit_code_for(&e))
        }
    }
}
