use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use securecyclon_cli::runner::{self, OUT_ENV};
use securecyclon_cli::{cmd_report, CliError, SeedRange, Source};

#[derive(Parser)]
#[command(name = "securecyclon", version = runner::version(), about = "SecureCyclon experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, a preset or a manifest.
    Run {
        scenario: String,
        /// Inclusive seed range, e.g. 1..10.
        #[arg(long, visible_alias = "seed")]
        seed_range: Option<SeedRange>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Output directory.
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Aggregate a results directory and check acceptance targets.
    Report {
        dir: PathBuf,
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            seed_range,
            workers,
            out,
        } => {
            let source = Source::load(&scenario)?;
            let points = source.points(seed_range)?;
            let out = runner::resolve_out(out, None, source.out());
            let manifest = runner::execute(source.name(), source.targets(), &points, workers.max(1), &out)?;
            println!("wrote {} runs to {}", manifest.runs.len(), out.display());
            Ok(())
        }
        Command::Report { dir, targets } => {
            let report = cmd_report(&dir, targets.as_deref())?;
            print!("{}", report.summary());
            match report.failures() {
                0 => Ok(()),
                n => Err(CliError::Acceptance(n)),
            }
        }
        Command::Presets => {
            for name in securecyclon_cli::presets::NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}
