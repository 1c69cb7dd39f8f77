//! The `replay` subcommand: a per-substep physics microscope.
//!
//! Runs the policy loop by hand — one action per policy step, then every
//! integrator substep dumped as a CSV row (coordinates, rates, foot
//! heights, contact flags, applied torques). The torque path is the same
//! clamp + PD code the environment uses, so a replay reproduces exactly
//! what training simulated. No termination logic runs here; the dump is
//! for inspecting states, including bad ones.

use std::path::Path;

use singait_core::nn::{ActorCritic, Activations};
use singait_core::rollout::build_observation;
use singait_core::sim::{
    clamp_targets, foot_heights, initial_state, pd_torques, step_lowlevel, SimState, DOF,
};
use singait_core::ACTION_DIM;

use crate::config::RunConfig;
use crate::csv::{num, CsvWriter, REPLAY_COLUMNS};
use crate::eval::load_checkpoint_for;
use crate::CliError;

/// Dump `steps` policy steps (times the model's substep count) to `out_csv`.
/// Without a checkpoint, the joint targets are the standing pose.
pub fn run_replay(
    cfg: &RunConfig,
    config_dir: &Path,
    checkpoint: Option<&Path>,
    steps: u32,
    out_csv: &Path,
) -> Result<(), CliError> {
    cfg.validate()?;
    let env_cfg = cfg.env_config_with_pose(config_dir)?;
    let model = env_cfg.model.clone();
    let ac: Option<ActorCritic> = match checkpoint {
        Some(p) => Some(load_checkpoint_for(cfg, p)?),
        None => None,
    };
    let standing = model
        .standing_joint_angles()
        .map_err(|e| CliError::config(format!("model cannot stand: {e}")))?;

    let mut state = match env_cfg.initial_q {
        Some(q) => SimState { q, qd: [0.0; DOF], substeps_taken: 0, contact: [false, false] },
        None => initial_state(&model)
            .map_err(|e| CliError::config(format!("initial state: {e}")))?,
    };
    let mut cache = ac.as_ref().map(|a| Activations::for_mlp(&a.policy.mlp));
    let mut w = CsvWriter::create(out_csv, "replay", REPLAY_COLUMNS)?;

    for k in 0..steps as u64 {
        let raw: [f64; ACTION_DIM] = match (&ac, &mut cache) {
            (Some(a), Some(c)) => {
                let obs =
                    build_observation(env_cfg.command, env_cfg.vel_scale, &env_cfg.gait, &state, k);
                let dist = a.policy.distribution_cached(&obs, c);
                let mut out = [0.0; ACTION_DIM];
                out.copy_from_slice(&dist.mean);
                out
            }
            _ => standing,
        };
        let targets = clamp_targets(&model, &raw);
        for _ in 0..model.substeps() {
            let tau = pd_torques(&model, &state.q, &state.qd, &targets);
            step_lowlevel(&model, &mut state, &tau).map_err(|e| {
                CliError::runtime(format!(
                    "physics failed at substep {}: {e}; rows up to the failure are in {}",
                    state.substeps_taken,
                    out_csv.display()
                ))
            })?;
            let (foot_l, foot_r) = foot_heights(&model, &state.q);
            let mut row = Vec::with_capacity(REPLAY_COLUMNS.len());
            row.push(num(state.substeps_taken as f64 * model.sim_dt));
            row.extend(state.q.iter().map(|v| num(*v)));
            row.extend(state.qd.iter().map(|v| num(*v)));
            row.push(num(foot_l));
            row.push(num(foot_r));
            row.push(num(if state.contact[0] { 1.0 } else { 0.0 }));
            row.push(num(if state.contact[1] { 1.0 } else { 0.0 }));
            row.extend(tau.iter().map(|v| num(*v)));
            w.row(&row)?;
        }
    }
    w.flush()
}
