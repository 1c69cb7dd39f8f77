//! Deterministic policy evaluation: mean-action rollouts, tracking and
//! imitation statistics, and an optional per-step trajectory CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use singait_core::nn::{read_checkpoint, ActorCritic, Activations};
use singait_core::rollout::EnvConfig;
use singait_core::{EnvInstance, ACTION_DIM, OBS_DIM};

use crate::config::RunConfig;
use crate::csv::{num, CsvWriter, TRAJECTORY_COLUMNS};
use crate::{CliError, ConfigError};

/// Aggregate results of a batch of mean-action episodes.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: u32,
    pub mean_len: f64,
    pub std_len: f64,
    pub mean_total: f64,
    pub mean_imit_nominal: f64,
    pub mean_imit: f64,
    pub mean_perf: f64,
    /// RMS error between reference and actual foot heights, both feet.
    pub foot_rmse: f64,
    /// Mean height of detected swing apexes (NaN when no foot ever left
    /// the ground).
    pub mean_swing_peak: f64,
    /// Mean spacing between successive left-foot swing apexes, seconds
    /// (NaN with fewer than two apexes in every episode).
    pub measured_period_s: f64,
    /// Mean over episodes of |pelvis_x - target_x| when the episode ended
    /// (the target glides at the commanded velocity).
    pub mean_final_drift: f64,
    pub reasons: Vec<(&'static str, u32)>,
}

impl EvalReport {
    fn empty() -> Self {
        EvalReport {
            episodes: 0,
            mean_len: f64::NAN,
            std_len: f64::NAN,
            mean_total: f64::NAN,
            mean_imit_nominal: f64::NAN,
            mean_imit: f64::NAN,
            mean_perf: f64::NAN,
            foot_rmse: f64::NAN,
            mean_swing_peak: f64::NAN,
            measured_period_s: f64::NAN,
            mean_final_drift: f64::NAN,
            reasons: Vec::new(),
        }
    }
}

/// Apex (index, height) of each contiguous run where the series exceeds
/// `threshold`. A run still open at the end of the series counts.
pub fn swing_peaks(heights: &[f64], threshold: f64) -> Vec<(usize, f64)> {
    let mut peaks = Vec::new();
    let mut run_max: Option<(usize, f64)> = None;
    for (i, &h) in heights.iter().enumerate() {
        if h > threshold {
            run_max = match run_max {
                Some((j, m)) if m >= h => Some((j, m)),
                _ => Some((i, h)),
            };
        } else if let Some(p) = run_max.take() {
            peaks.push(p);
        }
    }
    if let Some(p) = run_max {
        peaks.push(p);
    }
    peaks
}

/// Mean index spacing between consecutive peaks, scaled to seconds.
pub fn mean_peak_spacing(peaks: &[(usize, f64)], dt: f64) -> Option<f64> {
    if peaks.len() < 2 {
        return None;
    }
    let total: usize = peaks.last().unwrap().0 - peaks[0].0;
    Some(total as f64 * dt / (peaks.len() - 1) as f64)
}

/// Load a checkpoint and insist its network matches this config's shapes.
pub fn load_checkpoint_for(cfg: &RunConfig, path: &Path) -> Result<ActorCritic, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigError::Io { path: path.display().to_string(), err: e.to_string() })
    })?;
    let (ac, _adam) = read_checkpoint(&text)
        .map_err(|e| CliError::config(format!("checkpoint {}: {e}", path.display())))?;
    if ac.obs_dim() != OBS_DIM
        || ac.action_dim() != ACTION_DIM
        || ac.hidden_sizes() != cfg.hidden.as_slice()
    {
        return Err(CliError::config(format!(
            "checkpoint {} holds a {}x{:?}x{} network but the config describes {}x{:?}x{}; \
             pass the config this checkpoint was trained with",
            path.display(),
            ac.obs_dim(),
            ac.hidden_sizes(),
            ac.action_dim(),
            OBS_DIM,
            cfg.hidden,
            ACTION_DIM
        )));
    }
    Ok(ac)
}

/// Roll out `episodes` mean-action episodes and aggregate them. With a
/// `trajectory` path, also dump one CSV row per policy step.
pub fn eval_policy(
    env_cfg: &EnvConfig,
    ac: &ActorCritic,
    episodes: u32,
    seed: u64,
    trajectory: Option<&Path>,
) -> Result<EvalReport, CliError> {
    if ac.obs_dim() != OBS_DIM || ac.action_dim() != ACTION_DIM {
        return Err(CliError::config(format!(
            "network is {}x{} but the environment needs {OBS_DIM}x{ACTION_DIM}",
            ac.obs_dim(),
            ac.action_dim()
        )));
    }
    let mut writer = match trajectory {
        Some(path) => Some(CsvWriter::create(path, "trajectory", TRAJECTORY_COLUMNS)?),
        None => None,
    };
    if episodes == 0 {
        if let Some(w) = writer.as_mut() {
            w.flush()?;
        }
        return Ok(EvalReport::empty());
    }

    let mut env = EnvInstance::new(env_cfg.clone(), seed, 0)
        .map_err(|e| CliError::config(format!("environment setup: {e}")))?;
    let mut cache = Activations::for_mlp(&ac.policy.mlp);
    let dt = env_cfg.model.policy_dt;

    let mut lengths = Vec::new();
    let mut totals = Vec::new();
    let mut imits = Vec::new();
    let mut imits_nominal = Vec::new();
    let mut perfs = Vec::new();
    let mut drifts = Vec::new();
    let mut reasons: BTreeMap<&'static str, u32> = BTreeMap::new();
    let mut sq_err_sum = 0.0;
    let mut step_count = 0u64;
    let mut peak_heights = Vec::new();
    let mut spacings = Vec::new();

    for ep in 0..episodes {
        let mut left_heights = Vec::new();
        let mut right_heights = Vec::new();
        loop {
            let obs = env.observe();
            let dist = ac.policy.distribution_cached(&obs, &mut cache);
            let mut action = [0.0; ACTION_DIM];
            action.copy_from_slice(&dist.mean);
            let out = env.env_step(&action);

            let k = env.steps_in_episode();
            let (foot_l, foot_r) = out.foot_heights;
            left_heights.push(foot_l);
            right_heights.push(foot_r);
            let dl = out.reference.left - foot_l;
            let dr = out.reference.right - foot_r;
            sq_err_sum += dl * dl + dr * dr;
            step_count += 1;

            if let Some(w) = writer.as_mut() {
                w.row(&[
                    num(ep as f64),
                    num(k as f64),
                    num(k as f64 * dt),
                    num(out.phase.sin),
                    num(out.phase.cos),
                    num(out.reference.left),
                    num(out.reference.right),
                    num(foot_l),
                    num(foot_r),
                    num(out.pelvis[0]),
                    num(out.pelvis[2]),
                    num(out.pitch),
                    num(out.planar_velocity[0]),
                    num(out.tracking_target[0]),
                    num(out.breakdown.total),
                    num(out.breakdown.imit_nominal),
                    num(out.breakdown.perf),
                    num(if out.contact[0] { 1.0 } else { 0.0 }),
                    num(if out.contact[1] { 1.0 } else { 0.0 }),
                ])?;
            }

            if let Some(record) = out.episode {
                lengths.push(record.length as f64);
                totals.push(record.reward_sum);
                imits.push(record.imit_mean);
                imits_nominal.push(record.imit_nominal_mean);
                perfs.push(record.perf_mean);
                drifts.push((out.pelvis[0] - out.tracking_target[0]).abs());
                *reasons.entry(record.reason.as_str()).or_insert(0) += 1;
                env.reset()
                    .map_err(|e| CliError::runtime(format!("reset after episode {ep}: {e}")))?;
                break;
            }
        }
        let threshold = 0.01;
        let left_peaks = swing_peaks(&left_heights, threshold);
        let right_peaks = swing_peaks(&right_heights, threshold);
        peak_heights.extend(left_peaks.iter().chain(&right_peaks).map(|&(_, h)| h));
        if let Some(s) = mean_peak_spacing(&left_peaks, dt) {
            spacings.push(s);
        }
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_len = mean(&lengths);
    let var_len = lengths.iter().map(|l| (l - mean_len) * (l - mean_len)).sum::<f64>()
        / lengths.len() as f64;
    Ok(EvalReport {
        episodes,
        mean_len,
        std_len: var_len.sqrt(),
        mean_total: mean(&totals),
        mean_imit_nominal: mean(&imits_nominal),
        mean_imit: mean(&imits),
        mean_perf: mean(&perfs),
        foot_rmse: (sq_err_sum / (2.0 * step_count as f64)).sqrt(),
        mean_swing_peak: if peak_heights.is_empty() { f64::NAN } else { mean(&peak_heights) },
        measured_period_s: if spacings.is_empty() { f64::NAN } else { mean(&spacings) },
        mean_final_drift: mean(&drifts),
        reasons: reasons.into_iter().collect(),
    })
}

/// Plain-text report block for stdout and `eval_report.txt`.
pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let w = &mut s;
    if r.episodes == 0 {
        let _ = writeln!(w, "evaluation: no episodes requested, nothing to report");
        return s;
    }
    let _ = writeln!(w, "evaluation over {} mean-action episodes", r.episodes);
    let _ = writeln!(w, "  episode length        : {:.1} steps (sigma {:.1})", r.mean_len, r.std_len);
    let _ = writeln!(w, "  episode reward        : {:.3}", r.mean_total);
    let _ = writeln!(w, "  imitation (nominal)   : {:.4}", r.mean_imit_nominal);
    let _ = writeln!(w, "  imitation (normalized): {:.4}", r.mean_imit);
    let _ = writeln!(w, "  performance           : {:.4}", r.mean_perf);
    let _ = writeln!(w, "  foot height RMSE      : {:.4} m", r.foot_rmse);
    let _ = writeln!(w, "  mean swing apex       : {:.4} m", r.mean_swing_peak);
    let _ = writeln!(w, "  measured gait period  : {:.3} s", r.measured_period_s);
    let _ = writeln!(w, "  final tracking drift  : {:.3} m", r.mean_final_drift);
    let reasons: Vec<String> =
        r.reasons.iter().map(|(name, n)| format!("{name} x{n}")).collect();
    let _ = writeln!(w, "  end reasons           : {}", reasons.join(", "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csv::CsvTable;
    use crate::train::init_actor;

    #[test]
    fn peaks_split_contiguous_runs() {
        assert!(swing_peaks(&[], 0.01).is_empty());
        assert!(swing_peaks(&[0.0, 0.005, 0.0], 0.01).is_empty());
        let h = [0.0, 0.05, 0.12, 0.07, 0.0, 0.0, 0.02, 0.09, 0.03, 0.0];
        assert_eq!(swing_peaks(&h, 0.01), vec![(2, 0.12), (7, 0.09)]);
        // run still open at the end is kept
        assert_eq!(swing_peaks(&[0.0, 0.04, 0.08], 0.01), vec![(2, 0.08)]);
        // plateau keeps the first index
        assert_eq!(swing_peaks(&[0.0, 0.05, 0.05, 0.0], 0.01), vec![(1, 0.05)]);
    }

    #[test]
    fn peak_spacing_is_mean_gap_times_dt() {
        assert_eq!(mean_peak_spacing(&[], 0.03), None);
        assert_eq!(mean_peak_spacing(&[(5, 0.1)], 0.03), None);
        let peaks = vec![(0, 0.1), (28, 0.1), (56, 0.1)];
        let got = mean_peak_spacing(&peaks, 0.03).unwrap();
        assert!((got - 0.84).abs() < 1e-12);
    }

    #[test]
    fn standing_policy_times_out_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let traj = dir.path().join("traj.csv");
        let mut cfg = RunConfig::default();
        cfg.hidden = vec![8];
        cfg.episode_cap = 10;
        cfg.log_std0 = -5.0;
        let env_cfg = cfg.env_config().unwrap();
        let ac = init_actor(&cfg, &env_cfg).unwrap();

        let r = eval_policy(&env_cfg, &ac, 2, 7, Some(&traj)).unwrap();
        assert_eq!(r.episodes, 2);
        assert_eq!(r.mean_len, 10.0);
        assert_eq!(r.std_len, 0.0);
        assert_eq!(r.reasons, vec![("timeout", 2)]);
        assert!(r.foot_rmse > 0.0 && r.foot_rmse.is_finite());
        assert!(r.mean_final_drift.is_finite());

        let t = CsvTable::read(&traj, "trajectory").unwrap();
        assert_eq!(t.rows.len(), 20);
        let steps = t.numeric_column("step").unwrap();
        assert_eq!(steps[0], 1.0);
        assert_eq!(steps[9], 10.0);
        assert_eq!(steps[10], 1.0);
        let text = render_report(&r);
        assert!(text.contains("timeout x2"), "{text}");
    }

    #[test]
    fn zero_episodes_is_an_empty_report() {
        let cfg = RunConfig::default();
        let env_cfg = cfg.env_config().unwrap();
        let mut small = cfg.clone();
        small.hidden = vec![8];
        let ac = init_actor(&small, &env_cfg).unwrap();
        let r = eval_policy(&env_cfg, &ac, 0, 1, None).unwrap();
        assert_eq!(r.episodes, 0);
        assert!(r.mean_len.is_nan());
        assert!(render_report(&r).contains("nothing to report"));
    }

    #[test]
    fn checkpoint_shape_mismatch_is_a_config_error() {
        use singait_core::nn::write_checkpoint;
        use singait_core::rollout::seeded_rng;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        let mut rng = seeded_rng(1, 0);
        let ac = ActorCritic::init(OBS_DIM, &[8], ACTION_DIM, &mut rng).unwrap();
        fs::write(&path, write_checkpoint(&ac, None)).unwrap();

        let mut cfg = RunConfig::default();
        cfg.hidden = vec![8];
        assert!(load_checkpoint_for(&cfg, &path).is_ok());

        cfg.hidden = vec![64, 64];
        let err = load_checkpoint_for(&cfg, &path).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_CONFIG);
        assert!(err.to_string().contains("trained with"), "{err}");
    }
}
