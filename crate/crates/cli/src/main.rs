use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foeim_core::experiment::{
    run_case, stage_eim, stage_fom, stage_offline, stage_online, stage_pod, ExperimentConfig, Layout, StageOutcome,
};
use foeim_core::Error;

/// Offline/online reduced-order pipeline driven by a JSON or TOML config.
#[derive(Parser)]
#[command(name = "foeim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Experiment configuration (`.json` or `.toml`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` or `out/<case>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Training snapshots.
    Fom(Io),
    /// Reduced basis from stored snapshots.
    Pod(Io),
    /// Interpolation systems from stored snapshots.
    Eim(Io),
    /// Reduced operators from the stored basis and interpolation systems.
    Offline(Io),
    /// Online sweep over the test sample from stored operators only.
    Online(Io),
    /// Whole pipeline with error and timing tables.
    Bench(Io),
}

/// Exit code of a failure, by the stage that raised it.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Stage { stage, .. } => match *stage {
            "config" => 2,
            "fom" => 3,
            "pod" => 4,
            "eim" => 5,
            "offline" => 6,
            "online" => 7,
            _ => 8,
        },
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    let (io, stage): (Io, Option<fn(&ExperimentConfig, &Layout) -> foeim_core::Result<StageOutcome>>) =
        match command {
            Command::Fom(io) => (io, Some(stage_fom)),
            Command::Pod(io) => (io, Some(stage_pod)),
            Command::Eim(io) => (io, Some(stage_eim)),
            Command::Offline(io) => (io, Some(stage_offline)),
            Command::Online(io) => (io, Some(stage_online)),
            Command::Bench(io) => (io, None),
        };
    let cfg = ExperimentConfig::load(&io.config).map_err(|e| e.in_stage("config"))?;
    let out = io
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.case.name()));
    match stage {
        Some(stage) => {
            let done = stage(&cfg, &Layout::new(&out))?;
            println!("{}: {} ({:.3} s)", done.stage, done.summary, done.seconds);
        }
        None => {
            let report = run_case(&cfg, &out)?;
            for (stage, secs) in &report.stage_times {
                println!("{stage}: {secs:.3} s");
            }
            println!("tables written to {}", out.display());
        }
    }
    Ok(())
}
