//! The `calibrate-blower` subcommand: measure what the raw imitation
//! kernel pays an untrained policy, and suggest a normalization floor.
//!
//! The floor (`reward.b_lower`) should sit just above the do-nothing
//! score so that standing still earns a *negative* normalized imitation
//! reward. This probe runs the exact policy a fresh training run would
//! start with and reports its mean nominal kernel value plus a safety
//! margin.

use singait_core::gait::GaitSpec;
use singait_core::nn::Activations;
use singait_core::reward::EndReason;
use singait_core::rollout::seeded_rng;
use singait_core::{EnvInstance, ACTION_DIM};

use crate::config::RunConfig;
use crate::train::init_actor;
use crate::CliError;

/// RNG stream for the probe's action sampling, distinct from the env and
/// training streams.
const CALIBRATE_RNG_STREAM: u64 = 2_000_000;

/// Margin added on top of the measured mean to get the suggested floor.
pub const FLOOR_MARGIN: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct FloorCalibration {
    /// Steps that actually contributed a kernel sample (blowup steps
    /// carry no terms and are excluded).
    pub scored_steps: u64,
    pub mean_nominal: f64,
    pub suggested_floor: f64,
    pub zero_reference: bool,
}

/// Run the untrained-policy probe for `steps` policy steps.
///
/// With `zero_reference`, both reference trajectories are pinned to zero
/// (a degenerate clearance equal to the amplitude); a standing robot then
/// scores a kernel value of about 1, which bounds what the probe can
/// report and is a quick sanity check of the kernel plumbing.
pub fn run_calibration(
    cfg: &RunConfig,
    config_dir: &std::path::Path,
    steps: u32,
    zero_reference: bool,
) -> Result<FloorCalibration, CliError> {
    cfg.validate()?;
    let mut env_cfg = cfg.env_config_with_pose(config_dir)?;
    if zero_reference {
        env_cfg.gait =
            GaitSpec::new_unchecked(cfg.gait_h, cfg.gait_h, cfg.gait_period_s, 0.0);
        env_cfg.randomize_phase = false;
    }
    let ac = init_actor(cfg, &env_cfg)?;
    let mut env = EnvInstance::new(env_cfg, cfg.seed, 0)
        .map_err(|e| CliError::config(format!("environment setup: {e}")))?;
    let mut rng = seeded_rng(cfg.seed, CALIBRATE_RNG_STREAM);
    let mut cache = Activations::for_mlp(&ac.policy.mlp);

    let mut sum = 0.0;
    let mut scored = 0u64;
    for _ in 0..steps {
        let obs = env.observe();
        let dist = ac.policy.distribution_cached(&obs, &mut cache);
        let sampled = dist.sample(&mut rng);
        let mut action = [0.0; ACTION_DIM];
        action.copy_from_slice(&sampled);
        let out = env.env_step(&action);
        if out.reason != Some(EndReason::Blowup) {
            sum += out.breakdown.imit_nominal;
            scored += 1;
        }
        if out.done {
            env.reset()
                .map_err(|e| CliError::runtime(format!("reset during probe: {e}")))?;
        }
    }
    if scored == 0 {
        return Err(CliError::runtime(
            "probe collected no scored steps (every step blew up); the model or gains are \
             broken",
        ));
    }
    let mean = sum / scored as f64;
    Ok(FloorCalibration {
        scored_steps: scored,
        mean_nominal: mean,
        suggested_floor: mean + FLOOR_MARGIN,
        zero_reference,
    })
}

pub fn render_calibration(c: &FloorCalibration) -> String {
    let mode = if c.zero_reference { " (references pinned to zero)" } else { "" };
    format!(
        "calibration over {} scored steps{mode}\n\
         \x20 mean nominal imitation kernel : {:.6}\n\
         \x20 suggested reward.b_lower      : {:.6}  (mean + {FLOOR_MARGIN})\n",
        c.scored_steps, c.mean_nominal, c.suggested_floor
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reference_probe_scores_near_one_when_standing() {
        let mut cfg = RunConfig::default();
        cfg.hidden = vec![8];
        cfg.log_std0 = -5.0; // essentially deterministic standing
        cfg.episode_cap = 50;
        let c = run_calibration(&cfg, std::path::Path::new("."), 200, true).unwrap();
        assert_eq!(c.scored_steps, 200);
        assert!(c.mean_nominal > 0.95, "got {}", c.mean_nominal);
        assert!(c.mean_nominal <= 1.0 + 1e-12);
        assert!((c.suggested_floor - c.mean_nominal - FLOOR_MARGIN).abs() < 1e-15);
    }

    #[test]
    fn moving_references_pay_a_standing_policy_much_less() {
        let mut cfg = RunConfig::default();
        cfg.hidden = vec![8];
        cfg.log_std0 = -5.0;
        cfg.episode_cap = 50;
        let c = run_calibration(&cfg, std::path::Path::new("."), 400, false).unwrap();
        // References sweep to 0.12 m while the feet stay down, so the mean
        // kernel value collapses well below the default 0.4 floor.
        assert!(c.mean_nominal < 0.4, "got {}", c.mean_nominal);
        assert!(c.mean_nominal > 0.0);
        let text = render_calibration(&c);
        assert!(text.contains("suggested reward.b_lower"), "{text}");
    }

    #[test]
    fn probe_is_deterministic_for_a_seed() {
        let mut cfg = RunConfig::default();
        cfg.hidden = vec![8];
        cfg.episode_cap = 40;
        let a = run_calibration(&cfg, std::path::Path::new("."), 150, false).unwrap();
        let b = run_calibration(&cfg, std::path::Path::new("."), 150, false).unwrap();
        assert_eq!(a.mean_nominal.to_bits(), b.mean_nominal.to_bits());
        let mut other = cfg.clone();
        other.seed = 9;
        let c = run_calibration(&other, std::path::Path::new("."), 150, false).unwrap();
        assert_ne!(a.mean_nominal.to_bits(), c.mean_nominal.to_bits());
    }
}
