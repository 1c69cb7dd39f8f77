use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use singait_cli::calibrate::{render_calibration, run_calibration};
use singait_cli::config::RunConfig;
use singait_cli::eval::{eval_policy, load_checkpoint_for, render_report};
use singait_cli::plot::{render_plot, PlotKind};
use singait_cli::replay::run_replay;
use singait_cli::train::{run_training, TrainOptions};
use singait_cli::{io_runtime, CliError, EXIT_OK};

/// Train and inspect a planar biped that learns to walk by imitating
/// sine-wave foot-height references.
#[derive(Parser)]
#[command(name = "singait", version, about)]
struct Cli {
    /// Run configuration file (flat `section.key = value` lines).
    /// Without it, every key keeps its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override run.out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy; writes CSVs, checkpoints, and an evaluation report.
    Train,
    /// Roll out a checkpoint with mean actions and report tracking quality.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episode count (default: run.eval_episodes).
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Probe what the raw imitation kernel pays an untrained policy and
    /// suggest a normalization floor.
    CalibrateBlower {
        /// Policy steps to sample.
        #[arg(long, default_value_t = 4096)]
        steps: u32,
        /// Pin both references to zero (kernel sanity check: a standing
        /// robot should score about 1).
        #[arg(long)]
        zero_reference: bool,
    },
    /// Dump a per-substep state/torque trace to CSV.
    Replay {
        /// Checkpoint to drive the robot (default: hold the standing pose).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Policy steps to simulate.
        #[arg(long, default_value_t = 40)]
        steps: u32,
    },
    /// Render a CSV artifact to an SVG chart in the output directory.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKindArg,
        /// Source CSV (training or trajectory, depending on the kind).
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotKindArg {
    LearningCurves,
    FootHeights,
    PelvisTrack,
}

impl From<PlotKindArg> for PlotKind {
    fn from(k: PlotKindArg) -> PlotKind {
        match k {
            PlotKindArg::LearningCurves => PlotKind::LearningCurves,
            PlotKindArg::FootHeights => PlotKind::FootHeights,
            PlotKindArg::PelvisTrack => PlotKind::PelvisTrack,
        }
    }
}

/// Load the config (or defaults), apply global overrides, and return it
/// with the directory relative paths inside it resolve against.
fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let (mut cfg, dir) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            (cfg, dir)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok((cfg, dir))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out).map_err(|e| io_runtime("cannot create", &out, e))?;
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, config_dir) = load_config(&cli)?;
    match cli.cmd {
        Cmd::Train => {
            let art = run_training(&cfg, &config_dir, &TrainOptions::default())?;
            println!(
                "trained {} updates; artifacts in {}",
                art.updates_run,
                art.out_dir.display()
            );
        }
        Cmd::Eval { checkpoint, episodes } => {
            cfg.validate()?;
            let out = ensure_out_dir(&cfg)?;
            let ac = load_checkpoint_for(&cfg, &checkpoint)?;
            let env_cfg = cfg.env_config_with_pose(&config_dir)?;
            let n = episodes.unwrap_or(cfg.eval_episodes);
            let traj = out.join("eval_trajectory.csv");
            let report = eval_policy(&env_cfg, &ac, n, cfg.seed, Some(&traj))?;
            let text = render_report(&report);
            let report_path = out.join("eval_report.txt");
            std::fs::write(&report_path, &text)
                .map_err(|e| io_runtime("cannot write", &report_path, e))?;
            print!("{text}");
            println!("trajectory: {}", traj.display());
        }
        Cmd::CalibrateBlower { steps, zero_reference } => {
            let out = ensure_out_dir(&cfg)?;
            let calib = run_calibration(&cfg, &config_dir, steps, zero_reference)?;
            let text = render_calibration(&calib);
            let path = out.join("calibration.txt");
            std::fs::write(&path, &text).map_err(|e| io_runtime("cannot write", &path, e))?;
            print!("{text}");
        }
        Cmd::Replay { checkpoint, steps } => {
            let out = ensure_out_dir(&cfg)?;
            let csv = out.join("replay.csv");
            run_replay(&cfg, &config_dir, checkpoint.as_deref(), steps, &csv)?;
            println!("replay trace: {}", csv.display());
        }
        Cmd::Plot { kind, csv } => {
            cfg.validate()?;
            let out = PathBuf::from(&cfg.out_dir);
            let written = render_plot(kind.into(), &csv, &out)?;
            println!("chart: {}", written.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
