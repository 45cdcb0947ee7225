//! `failslow`: a fail-slow disk detection benchmark runner.
//!
//! Subcommands wire synthetic generation, 3-sigma labeling, detector
//! training, daily detection, and the lookback x threshold benchmark
//! into reproducible runs. All randomness derives from one --seed per
//! run, fanned out by hashing a component label into the seed, so
//! adding a detector never perturbs another's stream.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use clap::{Parser, Subcommand};
use failslow_cli::commands;
use failslow_core::Error;

#[derive(Parser)]
#[command(name = "failslow", version, about = "Fail-slow disk detection benchmark suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic PERSEUS-format cluster with injected faults.
    Gen(commands::GenArgs),
    /// Label traces with the peer-relative 3-sigma statistical labeler.
    Label(commands::LabelArgs),
    /// Train one detector family on the training segment.
    Train(commands::TrainArgs),
    /// Score test-segment disk-days with a trained detector.
    Detect(commands::DetectArgs),
    /// Sweep lookback x threshold grids and emit heatmaps + failure rates.
    Bench(commands::BenchArgs),
    /// Summarize a bench directory across models.
    Report(commands::ReportArgs),
    /// Run gen -> label -> train -> detect -> bench -> report from a config file.
    Pipeline(commands::PipelineArgs),
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_)
        | Error::Contract(_)
        | Error::InvalidFolds { .. }
        | Error::UnsupportedForKernel(_) => 1,
        Error::NumericFailure(_) => 3,
        _ => 2,
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        1 => "usage",
        3 => "numeric",
        _ => "data",
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print normally and exit 0.
            if e.use_stderr() {
                let msg = e.to_string();
                let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("bad usage");
                eprintln!("failslow: error[usage]: {}", first.trim());
                std::process::exit(1);
            }
            e.exit();
        }
    };
    let result = match &cli.command {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Label(args) => commands::cmd_label(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Detect(args) => commands::cmd_detect(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::Report(args) => commands::cmd_report(args),
        Command::Pipeline(args) => commands::cmd_pipeline(args),
    };
    if let Err(e) = result {
        let code = exit_code(&e);
        let message = e.to_string().replace('\n', "; ");
        eprintln!("failslow: error[{}]: {}", error_kind(code), message);
        std::process::exit(code);
    }
}
