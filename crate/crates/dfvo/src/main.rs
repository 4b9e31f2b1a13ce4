use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfvo::config::FeatureChoice;
use dfvo::{commands, io, CliError, RunConfig};

/// Direct feature odometry: synthetic experiments, pose solving and evaluation.
#[derive(Parser)]
#[command(name = "dfvo", version)]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pyramid levels to solve, e.g. `2,3,4` (1 = finest).
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    /// auto, dfog, intensity, gradient or random-projection.
    #[arg(long, global = true)]
    feature_source: Option<FeatureChoice>,
    #[arg(long, global = true, value_parser = ["3", "5"])]
    snippet_len: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a seeded synthetic snippet, solve it and check the poses.
    SynthSolve,
    /// Solve consecutive pairs of a frame directory.
    Solve { frames: PathBuf },
    /// ATE of predicted against ground-truth KITTI poses.
    EvalPose { pred: PathBuf, gt: PathBuf },
    /// Depth metrics of a predicted against a ground-truth DFOG depth grid.
    EvalDepth {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        median_scale: bool,
    },
    /// Loss breakdown of a snippet directory with ground-truth poses.
    Losses { snippet: PathBuf },
}

fn config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(l) = &cli.levels {
        cfg.solver.levels = l.clone();
    }
    if let Some(f) = cli.feature_source {
        cfg.feature_source = f;
    }
    if let Some(n) = &cli.snippet_len {
        cfg.snippet_len = n.parse().expect("validated by clap");
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| CliError::Config("--out is required for this command".into()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = config(cli)?;
    match &cli.command {
        Command::SynthSolve => {
            commands::synth_solve(&cfg, out_dir(cli)?)?;
        }
        Command::Solve { frames } => print!("{}", commands::solve(&cfg, frames, out_dir(cli)?)?),
        Command::EvalPose { pred, gt } => print!("{}", commands::eval_pose(pred, gt, cfg.snippet_len)?),
        Command::EvalDepth { pred, gt, mask, median_scale } => {
            cfg.eval.median_scale |= *median_scale;
            print!("{}", commands::depth_eval(&cfg, pred, gt, mask.as_deref())?.1);
        }
        Command::Losses { snippet } => {
            let (_, text) = commands::losses(&cfg, snippet)?;
            if let Some(out) = &cli.out {
                io::write_bytes(&out.join("losses.txt"), text.as_bytes())?;
            }
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dfvo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
