//! The `train` subcommand: PPO on the walking task.
//!
//! Artifacts land in `run.out_dir`: a canonical config snapshot (written
//! before the first step), `training.csv` (one row per update),
//! `episodes.csv` (one row per finished episode), periodic and final
//! checkpoints, and a post-run evaluation report.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use singait_core::nn::{write_checkpoint, ActorCritic, AdamState};
use singait_core::ppo::RolloutBuffer;
use singait_core::reward::EndReason;
use singait_core::rollout::{
    collect, seeded_rng, EnvConfig, EnvInstance, EpisodeRecord, INIT_RNG_STREAM,
    SHUFFLE_RNG_STREAM,
};
use singait_core::{ACTION_DIM, OBS_DIM};

use crate::config::RunConfig;
use crate::csv::{num, CsvWriter, EPISODE_COLUMNS, TRAINING_COLUMNS};
use crate::eval::{eval_policy, render_report};
use crate::{io_runtime, CliError};

/// Episodes the rolling progress means look back over.
const WINDOW: usize = 100;

/// Caller knobs that are not part of the run configuration.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop early once the rolling means reach `(min episode length,
    /// min nominal imitation reward)`.
    pub stop_when: Option<(f64, f64)>,
    /// Suppress per-update progress lines.
    pub quiet: bool,
}

/// What a finished (or early-stopped) training run left behind.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub training_csv: PathBuf,
    pub episodes_csv: PathBuf,
    pub final_checkpoint: PathBuf,
    pub updates_run: u32,
    /// First update whose rolling means met `stop_when`, if they ever did.
    pub reached_at: Option<u32>,
    pub last_mean_len: f64,
    pub last_mean_imit_nominal: f64,
}

/// One environment lane per index, each on its own RNG stream.
pub fn make_envs(
    env_cfg: &EnvConfig,
    master_seed: u64,
    n: usize,
) -> Result<Vec<EnvInstance>, CliError> {
    (0..n)
        .map(|i| {
            EnvInstance::new(env_cfg.clone(), master_seed, i as u64)
                .map_err(|e| CliError::config(format!("environment setup: {e}")))
        })
        .collect()
}

/// Fresh actor-critic the way every run starts: orthogonal init on a
/// dedicated RNG stream, mean head biased to the standing pose, and all
/// log-stds at `ppo.log_std0`.
pub fn init_actor(cfg: &RunConfig, env_cfg: &EnvConfig) -> Result<ActorCritic, CliError> {
    let mut rng = seeded_rng(cfg.seed, INIT_RNG_STREAM);
    let mut ac = ActorCritic::init(OBS_DIM, &cfg.hidden, ACTION_DIM, &mut rng)
        .map_err(|e| CliError::config(format!("network setup: {e}")))?;
    let standing = env_cfg
        .model
        .standing_joint_angles()
        .map_err(|e| CliError::config(format!("model cannot stand: {e}")))?;
    ac.set_policy_output_bias(&standing);
    for v in ac.policy.log_std.iter_mut() {
        *v = cfg.log_std0;
    }
    Ok(ac)
}

fn window_means(window: &VecDeque<EpisodeRecord>) -> (f64, f64, f64, f64) {
    if window.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let n = window.len() as f64;
    let mut reward = 0.0;
    let mut len = 0.0;
    let mut imit = 0.0;
    let mut perf = 0.0;
    for r in window {
        reward += r.reward_sum;
        len += r.length as f64;
        imit += r.imit_nominal_mean;
        perf += r.perf_mean;
    }
    (reward / n, len / n, imit / n, perf / n)
}

pub fn run_training(
    cfg: &RunConfig,
    config_dir: &Path,
    opts: &TrainOptions,
) -> Result<TrainArtifacts, CliError> {
    cfg.validate()?;
    let env_cfg = cfg.env_config_with_pose(config_dir)?;
    let ppo_cfg = cfg.ppo_config();

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| io_runtime("cannot create", &out_dir, e))?;
    let snapshot_path = out_dir.join("config.txt");
    fs::write(&snapshot_path, cfg.snapshot())
        .map_err(|e| io_runtime("cannot write", &snapshot_path, e))?;

    let mut envs = make_envs(&env_cfg, cfg.seed, cfg.n_envs)?;
    let mut ac = init_actor(cfg, &env_cfg)?;
    let mut adam = AdamState::new(&ac);
    let mut buffer = RolloutBuffer::new(cfg.n_envs, cfg.n_steps, OBS_DIM, ACTION_DIM);
    let mut shuffle_rng = seeded_rng(cfg.seed, SHUFFLE_RNG_STREAM);

    let training_csv = out_dir.join("training.csv");
    let episodes_csv = out_dir.join("episodes.csv");
    let mut training = CsvWriter::create(&training_csv, "training", TRAINING_COLUMNS)?;
    let mut episodes = CsvWriter::create(&episodes_csv, "episodes", EPISODE_COLUMNS)?;

    let started = Instant::now();
    let mut window: VecDeque<EpisodeRecord> = VecDeque::with_capacity(WINDOW + 1);
    let mut reached_at = None;
    let mut updates_run = 0;
    let mut last_len = f64::NAN;
    let mut last_imit = f64::NAN;

    for update in 1..=cfg.total_updates {
        let records = collect(&mut envs, &ac, cfg.gamma, &mut buffer)
            .map_err(|e| CliError::runtime(format!("rollout at update {update}: {e}")))?;

        let blown = records.iter().filter(|r| r.reason == EndReason::Blowup).count();
        for r in &records {
            episodes.row(&[
                format!("{:.3}", started.elapsed().as_secs_f64()),
                num(update as f64),
                num(r.env_id as f64),
                num(r.length as f64),
                r.reason.as_str().to_string(),
                num(r.imit_nominal_mean),
                num(r.perf_mean),
                num(r.reward_sum),
            ])?;
            window.push_back(*r);
            if window.len() > WINDOW {
                window.pop_front();
            }
        }
        if blown * 2 > records.len() && !records.is_empty() {
            training.flush()?;
            episodes.flush()?;
            return Err(CliError::runtime(format!(
                "physics blowup storm at update {update}: {blown} of {} episodes ended in a \
                 blowup; aborting. The usual causes are oversized model.kp/model.torque_limit \
                 or ppo.lr; CSVs up to this update are in {}",
                records.len(),
                out_dir.display()
            )));
        }

        buffer
            .compute_advantages(cfg.gamma, cfg.lam)
            .map_err(|e| CliError::runtime(format!("advantage pass at update {update}: {e}")))?;
        let stats = singait_core::ppo::ppo_update(&mut ac, &buffer, &ppo_cfg, &mut adam, &mut shuffle_rng)
            .map_err(|e| CliError::runtime(format!("ppo update {update}: {e}")))?;

        let steps = update as u64 * (cfg.n_envs * cfg.n_steps) as u64;
        let (mean_reward, mean_len, mean_imit, mean_perf) = window_means(&window);
        training.row(&[
            num(update as f64),
            num(steps as f64),
            num(mean_reward),
            num(mean_len),
            num(mean_imit),
            num(mean_perf),
            num(stats.policy_loss),
            num(stats.value_loss),
            num(stats.clip_frac),
            num(stats.approx_kl),
        ])?;
        training.flush()?;
        episodes.flush()?;

        updates_run = update;
        last_len = mean_len;
        last_imit = mean_imit;
        if !opts.quiet {
            println!(
                "update {update}/{}  steps {steps}  ep_len {mean_len:.1}  imit {mean_imit:.3}  \
                 perf {mean_perf:.3}  kl {:.4}",
                cfg.total_updates, stats.approx_kl
            );
        }

        if update % cfg.checkpoint_every == 0 {
            let path = out_dir.join(format!("checkpoint_{update:05}.txt"));
            fs::write(&path, write_checkpoint(&ac, Some(&adam)))
                .map_err(|e| io_runtime("cannot write", &path, e))?;
        }

        if let Some((need_len, need_imit)) = opts.stop_when {
            if mean_len >= need_len && mean_imit > need_imit {
                reached_at = Some(update);
                if !opts.quiet {
                    println!("stop threshold reached at update {update}");
                }
                break;
            }
        }
    }

    let final_checkpoint = out_dir.join("checkpoint_final.txt");
    fs::write(&final_checkpoint, write_checkpoint(&ac, Some(&adam)))
        .map_err(|e| io_runtime("cannot write", &final_checkpoint, e))?;

    if cfg.eval_episodes > 0 {
        let report = eval_policy(
            &env_cfg,
            &ac,
            cfg.eval_episodes,
            cfg.seed,
            Some(&out_dir.join("trajectory.csv")),
        )?;
        let report_path = out_dir.join("eval_report.txt");
        fs::write(&report_path, render_report(&report))
            .map_err(|e| io_runtime("cannot write", &report_path, e))?;
        if !opts.quiet {
            println!(
                "eval: mean length {:.1}, foot RMSE {:.4} m over {} episodes",
                report.mean_len, report.foot_rmse, report.episodes
            );
        }
    }

    Ok(TrainArtifacts {
        out_dir,
        training_csv,
        episodes_csv,
        final_checkpoint,
        updates_run,
        reached_at,
        last_mean_len: last_len,
        last_mean_imit_nominal: last_imit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csv::CsvTable;

    fn tiny_cfg(out: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.n_envs = 2;
        cfg.n_steps = 16;
        cfg.minibatch_size = 8;
        cfg.epochs = 2;
        cfg.hidden = vec![8];
        cfg.total_updates = 3;
        cfg.checkpoint_every = 2;
        cfg.eval_episodes = 1;
        cfg.episode_cap = 12;
        cfg.out_dir = out.display().to_string();
        cfg
    }

    #[test]
    fn smoke_run_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = tiny_cfg(&out);
        let opts = TrainOptions { quiet: true, ..TrainOptions::default() };
        let art = run_training(&cfg, dir.path(), &opts).unwrap();
        assert_eq!(art.updates_run, 3);
        assert!(art.reached_at.is_none());

        // snapshot parses back to the same config
        let snap = RunConfig::load(&out.join("config.txt")).unwrap();
        assert_eq!(snap, cfg);

        let t = CsvTable::read(&art.training_csv, "training").unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.numeric_column("steps").unwrap(), vec![32.0, 64.0, 96.0]);
        // cap 12 guarantees finished episodes, so the means are real numbers
        let lens = t.numeric_column("mean_ep_len").unwrap();
        assert!(lens.iter().all(|v| v.is_finite() && *v > 0.0));

        let e = CsvTable::read(&art.episodes_csv, "episodes").unwrap();
        assert!(!e.rows.is_empty());
        let reason_col = e.column("reason").unwrap();
        assert!(e.rows.iter().all(|r| r[reason_col] == "timeout"
            || r[reason_col] == "pelvis_low"
            || r[reason_col] == "pelvis_high"
            || r[reason_col] == "tracking"
            || r[reason_col] == "blowup"));

        assert!(out.join("checkpoint_00002.txt").exists());
        assert!(art.final_checkpoint.exists());
        assert!(out.join("eval_report.txt").exists());
        assert!(out.join("trajectory.csv").exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let mut cfg_a = tiny_cfg(&out_a);
        cfg_a.eval_episodes = 0;
        let mut cfg_b = cfg_a.clone();
        cfg_b.out_dir = out_b.display().to_string();
        let opts = TrainOptions { quiet: true, ..TrainOptions::default() };
        run_training(&cfg_a, dir.path(), &opts).unwrap();
        run_training(&cfg_b, dir.path(), &opts).unwrap();
        let a = fs::read(out_a.join("training.csv")).unwrap();
        let b = fs::read(out_b.join("training.csv")).unwrap();
        assert_eq!(a, b);
        let ca = fs::read(out_a.join("checkpoint_final.txt")).unwrap();
        let cb = fs::read(out_b.join("checkpoint_final.txt")).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn early_stop_honors_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = tiny_cfg(&out);
        cfg.eval_episodes = 0;
        // Thresholds any run clears instantly: zero length, any imitation.
        let opts = TrainOptions { stop_when: Some((0.0, -10.0)), quiet: true };
        let art = run_training(&cfg, dir.path(), &opts).unwrap();
        assert_eq!(art.reached_at, Some(1));
        assert_eq!(art.updates_run, 1);
        assert!(art.final_checkpoint.exists());
    }
}
