//! Environment instances and on-policy data collection.
//!
//! An [`EnvInstance`] bundles one biped, its gait reference, reward
//! configuration, and a private RNG stream. [`collect`] walks a set of
//! instances environment-major, samples actions from a shared policy, and
//! fills a [`RolloutBuffer`] ready for advantage estimation. Everything is
//! deterministic given the master seed: instance `i` draws from ChaCha
//! stream `i`, so adding lanes never perturbs existing ones.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gait::{GaitError, GaitSpec, PhaseVector, ReferencePair};
use crate::nn::{ActorCritic, Activations};
use crate::ppo::{log_prob, RolloutBuffer};
use crate::reward::{
    check_termination, imitation_nominal, normalize_imitation, performance, regularization,
    total_reward, AblationMode, EndReason, Quat, RewardBreakdown, RewardConfig, RewardError,
    RewardTerms, TrackingState,
};
use crate::sim::{
    foot_heights, initial_state, kinematics, step_policy, BipedModel, SimError, SimState, DOF,
    JOINT_OFFSET,
};
use crate::{ACTION_DIM, OBS_DIM, POLICY_DT};

/// ChaCha stream reserved for network initialization. Environment lanes use
/// their own index as the stream, so these sit far above any plausible lane
/// count.
pub const INIT_RNG_STREAM: u64 = 1_000_000;

/// ChaCha stream reserved for minibatch shuffling during updates.
pub const SHUFFLE_RNG_STREAM: u64 = 1_000_001;

/// Actuated joint names, in coordinate order `q[3..7]`. The reward
/// regularizer looks joints up by these names.
pub const JOINT_NAMES: [&str; ACTION_DIM] = ["hip_left", "knee_left", "hip_right", "knee_right"];

/// A ChaCha generator on a fixed stream of the master seed.
pub fn seeded_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum RolloutError {
    Gait(GaitError),
    Reward(RewardError),
    Sim(SimError),
    /// An environment config field failed validation.
    BadEnv(String),
    /// Collection inputs disagree on a dimension.
    Shape { what: &'static str, expected: usize, got: usize },
}

impl core::fmt::Display for RolloutError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RolloutError::Gait(e) => write!(f, "gait: {e}"),
            RolloutError::Reward(e) => write!(f, "reward: {e}"),
            RolloutError::Sim(e) => write!(f, "sim: {e}"),
            RolloutError::BadEnv(msg) => write!(f, "bad environment config: {msg}"),
            RolloutError::Shape { what, expected, got } => {
                write!(f, "{what}: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for RolloutError {}

impl From<GaitError> for RolloutError {
    fn from(e: GaitError) -> Self {
        RolloutError::Gait(e)
    }
}

impl From<RewardError> for RolloutError {
    fn from(e: RewardError) -> Self {
        RolloutError::Reward(e)
    }
}

impl From<SimError> for RolloutError {
    fn from(e: SimError) -> Self {
        RolloutError::Sim(e)
    }
}

/// Everything one environment lane needs, minus the seed and lane id.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub model: BipedModel,
    pub gait: GaitSpec,
    pub reward: RewardConfig,
    pub ablation: AblationMode,
    /// Commanded planar pelvis velocity, m/s.
    pub command: [f64; 2],
    /// Policy steps before an episode is cut off (truncated, not failed).
    pub episode_cap: u32,
    /// Re-draw which leg swings first on every reset. Training wants this on
    /// so the policy cannot overfit to one leading leg; evaluation turns it
    /// off for reproducible traces.
    pub randomize_phase: bool,
    /// Divisor applied to every velocity-flavored observation entry.
    pub vel_scale: f64,
    /// Optional full generalized-coordinate vector episodes start from
    /// instead of the balanced standing pose. Velocities always start at
    /// zero.
    pub initial_q: Option<[f64; DOF]>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            model: BipedModel::default(),
            // 0.84 s = 28 policy steps per gait cycle; values known-valid.
            gait: GaitSpec::new_unchecked(0.15, 0.03, 0.84, 0.0),
            reward: RewardConfig::default(),
            ablation: AblationMode::None,
            command: [0.4, 0.0],
            episode_cap: 600,
            randomize_phase: true,
            vel_scale: 5.0,
            initial_q: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        self.model.validate()?;
        self.reward.validate()?;
        if libm::fabs(self.model.policy_dt - POLICY_DT) > 1e-12 {
            return Err(RolloutError::BadEnv(String::from(
                "model policy_dt must match the global policy step",
            )));
        }
        if self.episode_cap == 0 {
            return Err(RolloutError::BadEnv(String::from("episode_cap must be at least 1")));
        }
        if !(self.vel_scale.is_finite() && self.vel_scale > 0.0) {
            return Err(RolloutError::BadEnv(String::from("vel_scale must be positive")));
        }
        if !(self.command[0].is_finite() && self.command[1].is_finite()) {
            return Err(RolloutError::BadEnv(String::from("command must be finite")));
        }
        for name in &self.reward.reg_joints {
            if !JOINT_NAMES.contains(&name.as_str()) {
                return Err(RolloutError::BadEnv(format!(
                    "unknown regularization joint '{name}'"
                )));
            }
        }
        if let Some(q) = &self.initial_q {
            if q.iter().any(|v| !v.is_finite()) {
                return Err(RolloutError::BadEnv(String::from("initial pose must be finite")));
            }
            for j in 0..ACTION_DIM {
                let angle = q[JOINT_OFFSET + j];
                if angle < self.model.joint_lower[j] || angle > self.model.joint_upper[j] {
                    return Err(RolloutError::BadEnv(format!(
                        "initial pose joint {} = {angle} outside [{}, {}]",
                        JOINT_NAMES[j], self.model.joint_lower[j], self.model.joint_upper[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// The state episodes start from: either the balanced standing pose or
    /// the configured pose override, at rest.
    fn spawn_state(&self) -> Result<SimState, RolloutError> {
        if let Some(q) = self.initial_q {
            return Ok(SimState { q, qd: [0.0; DOF], substeps_taken: 0, contact: [false, false] });
        }
        Ok(initial_state(&self.model)?)
    }
}

/// Per-episode summary, emitted by the step that ended the episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub env_id: u64,
    /// Policy steps survived.
    pub length: u32,
    /// Sum of per-step totals, termination penalty included.
    pub reward_sum: f64,
    /// Per-step means of the logged reward terms.
    pub imit_mean: f64,
    pub imit_nominal_mean: f64,
    pub perf_mean: f64,
    pub reason: EndReason,
}

/// What one call to [`EnvInstance::env_step`] produced. Kinematic fields
/// describe the post-step state; after a physics blowup they are raw
/// diagnostics and may be huge or NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub reason: Option<EndReason>,
    /// Reference foot heights this step was scored against.
    pub reference: ReferencePair,
    pub phase: PhaseVector,
    pub foot_heights: (f64, f64),
    pub contact: [bool; 2],
    /// Pelvis position lifted to 3-D as `[x, 0, z]`.
    pub pelvis: [f64; 3],
    pub pitch: f64,
    pub planar_velocity: [f64; 2],
    pub tracking_target: [f64; 3],
    /// Present exactly when `done`; the summary of the episode that ended.
    pub episode: Option<EpisodeRecord>,
}

/// Flattened policy observation for a state at integer gait step `step`.
///
/// ```text
///  0.. 4  joint positions (hipL kneeL hipR kneeR)
///  4.. 8  joint velocities / vel_scale
///  8..12  pelvis orientation quaternion (w x y z)
/// 12      pitch rate / vel_scale
/// 13..15  planar pelvis velocity [vx 0] / vel_scale
/// 15      pelvis height
/// 16..18  gait phase (sin cos)
/// 18..20  commanded velocity / vel_scale
/// ```
///
/// Free function so offline tools can rebuild the exact observation a
/// policy saw from a dumped `SimState`.
pub fn build_observation(
    command: [f64; 2],
    vel_scale: f64,
    gait: &GaitSpec,
    state: &SimState,
    step: u64,
) -> [f64; OBS_DIM] {
    let q = &state.q;
    let qd = &state.qd;
    let s = vel_scale;
    let quat = Quat::from_pitch(q[2]);
    let phase = gait.phase_at_step(step);
    let mut obs = [0.0; OBS_DIM];
    obs[0..4].copy_from_slice(&q[3..7]);
    for j in 0..4 {
        obs[4 + j] = qd[3 + j] / s;
    }
    obs[8] = quat.w;
    obs[9] = quat.x;
    obs[10] = quat.y;
    obs[11] = quat.z;
    obs[12] = qd[2] / s;
    obs[13] = qd[0] / s;
    obs[14] = 0.0;
    obs[15] = q[1];
    obs[16] = phase.sin;
    obs[17] = phase.cos;
    obs[18] = command[0] / s;
    obs[19] = command[1] / s;
    obs
}

/// One environment lane: biped state, gait phase counter, tracking target,
/// episode accumulators, and a private RNG stream.
///
/// Callers must [`reset`](Self::reset) after a step reports `done`; stepping
/// past a terminal state keeps simulating and re-triggers the terminal
/// checks every step.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    cfg: EnvConfig,
    /// Episode's gait spec; differs from `cfg.gait` only in initial phase.
    gait: GaitSpec,
    env_id: u64,
    rng: ChaCha8Rng,
    state: SimState,
    tracking: TrackingState,
    step_in_episode: u64,
    ep_reward: f64,
    ep_imit: f64,
    ep_imit_nominal: f64,
    ep_perf: f64,
}

impl EnvInstance {
    /// Build and reset one lane. `master_seed` is shared by the whole run;
    /// `env_id` picks this lane's private ChaCha stream.
    pub fn new(cfg: EnvConfig, master_seed: u64, env_id: u64) -> Result<Self, RolloutError> {
        cfg.validate()?;
        let state = cfg.spawn_state()?;
        let tracking = TrackingState::new([state.q[0], 0.0, state.q[1]]);
        let gait = cfg.gait.clone();
        let mut env = EnvInstance {
            cfg,
            gait,
            env_id,
            rng: seeded_rng(master_seed, env_id),
            state,
            tracking,
            step_in_episode: 0,
            ep_reward: 0.0,
            ep_imit: 0.0,
            ep_imit_nominal: 0.0,
            ep_perf: 0.0,
        };
        env.reset()?;
        Ok(env)
    }

    /// Start a fresh episode: standing state, zeroed counters, tracking
    /// target on the pelvis, and (when enabled) a re-drawn leading leg.
    pub fn reset(&mut self) -> Result<(), RolloutError> {
        self.state = self.cfg.spawn_state()?;
        self.gait = if self.cfg.randomize_phase {
            let phi0 = if self.rng.gen_bool(0.5) { core::f64::consts::PI } else { 0.0 };
            self.cfg.gait.with_initial_phase(phi0)?
        } else {
            self.cfg.gait.clone()
        };
        self.tracking = TrackingState::new([self.state.q[0], 0.0, self.state.q[1]]);
        self.step_in_episode = 0;
        self.ep_reward = 0.0;
        self.ep_imit = 0.0;
        self.ep_imit_nominal = 0.0;
        self.ep_perf = 0.0;
        Ok(())
    }

    pub fn env_id(&self) -> u64 {
        self.env_id
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// The gait spec in force this episode (initial phase may differ from
    /// the configured one when phase randomization is on).
    pub fn gait(&self) -> &GaitSpec {
        &self.gait
    }

    pub fn sim_state(&self) -> &SimState {
        &self.state
    }

    pub fn steps_in_episode(&self) -> u64 {
        self.step_in_episode
    }

    pub fn tracking_target(&self) -> [f64; 3] {
        self.tracking.target
    }

    /// Flattened policy observation of the current state; see
    /// [`build_observation`] for the layout.
    pub fn observe(&self) -> [f64; OBS_DIM] {
        build_observation(
            self.cfg.command,
            self.cfg.vel_scale,
            &self.gait,
            &self.state,
            self.step_in_episode,
        )
    }

    /// Advance one policy step and score the state it lands in.
    ///
    /// The phase counter and tracking target advance unconditionally; the
    /// reward is evaluated at the post-step state against the post-step
    /// references. A physics failure (non-finite or runaway state) ends the
    /// episode with [`EndReason::Blowup`] and only the termination penalty.
    /// Truncation at the episode cap reports [`EndReason::Timeout`] and
    /// charges no penalty; real failures beat the cap when both land on the
    /// same step.
    pub fn env_step(&mut self, action: &[f64; ACTION_DIM]) -> StepOutcome {
        let k = self.step_in_episode + 1;
        self.step_in_episode = k;
        let reference = self.gait.references_at_step(k);
        let phase = self.gait.phase_at_step(k);
        // Where the commanded pelvis should now be; glides no matter what
        // the mechanics do.
        self.tracking.advance(self.cfg.command, self.cfg.model.policy_dt);
        let rcfg = &self.cfg.reward;

        if step_policy(&self.cfg.model, &mut self.state, action).is_err() {
            let terms = RewardTerms {
                imit_nominal: 0.0,
                imit: 0.0,
                p_vel: 0.0,
                p_orient: 0.0,
                perf: 0.0,
                reg: 0.0,
            };
            let breakdown = total_reward(&terms, true, rcfg, self.cfg.ablation);
            self.ep_reward += breakdown.total;
            let q = &self.state.q;
            return StepOutcome {
                breakdown,
                done: true,
                reason: Some(EndReason::Blowup),
                reference,
                phase,
                foot_heights: foot_heights(&self.cfg.model, q),
                contact: self.state.contact,
                pelvis: [q[0], 0.0, q[1]],
                pitch: q[2],
                planar_velocity: [self.state.qd[0], 0.0],
                tracking_target: self.tracking.target,
                episode: Some(self.finish_episode(EndReason::Blowup)),
            };
        }

        let q = &self.state.q;
        let qd = &self.state.qd;
        let kin = kinematics(&self.cfg.model, q);
        let feet = (kin.foot[0][1], kin.foot[1][1]);
        let imit_nominal = imitation_nominal(&reference, feet, rcfg.sigma_imit);
        let imit = normalize_imitation(imit_nominal, rcfg.b_lower, rcfg.b_upper)
            .expect("normalization band validated at construction");
        let orientation = Quat::from_pitch(q[2]);
        let v_p = [qd[0], 0.0];
        let perf = performance(v_p, self.cfg.command, &orientation, rcfg)
            .expect("pitch quaternion is unit length");
        let joint_angles = [
            (JOINT_NAMES[0], q[3]),
            (JOINT_NAMES[1], q[4]),
            (JOINT_NAMES[2], q[5]),
            (JOINT_NAMES[3], q[6]),
        ];
        let reg = regularization(&joint_angles, rcfg)
            .expect("regularization joints validated at construction");

        let pelvis = [q[0], 0.0, q[1]];
        let reason = check_termination(pelvis, &self.tracking, self.cfg.command, rcfg)
            .or_else(|| (k >= self.cfg.episode_cap as u64).then_some(EndReason::Timeout));
        let terminated = matches!(reason, Some(r) if r != EndReason::Timeout);

        let terms = RewardTerms {
            imit_nominal,
            imit,
            p_vel: perf.p_vel,
            p_orient: perf.p_orient,
            perf: perf.perf,
            reg,
        };
        let breakdown = total_reward(&terms, terminated, rcfg, self.cfg.ablation);
        self.ep_reward += breakdown.total;
        self.ep_imit += breakdown.imit;
        self.ep_imit_nominal += breakdown.imit_nominal;
        self.ep_perf += breakdown.perf;

        StepOutcome {
            breakdown,
            done: reason.is_some(),
            reason,
            reference,
            phase,
            foot_heights: feet,
            contact: self.state.contact,
            pelvis,
            pitch: q[2],
            planar_velocity: v_p,
            tracking_target: self.tracking.target,
            episode: reason.map(|r| self.finish_episode(r)),
        }
    }

    fn finish_episode(&self, reason: EndReason) -> EpisodeRecord {
        let length = self.step_in_episode as u32;
        let n = (length as f64).max(1.0);
        EpisodeRecord {
            env_id: self.env_id,
            length,
            reward_sum: self.ep_reward,
            imit_mean: self.ep_imit / n,
            imit_nominal_mean: self.ep_imit_nominal / n,
            perf_mean: self.ep_perf / n,
            reason,
        }
    }
}

/// Fill `buffer` by rolling every lane forward `buffer.n_steps` steps under
/// the current policy. Lanes run sequentially and draw actions from their
/// own RNG streams, so results are independent of how many lanes exist.
///
/// Terminal steps store a zero-continuation (`done = true`); lanes that end
/// by hitting the episode cap additionally fold `gamma * V(next state)` into
/// the stored reward, since truncation is bookkeeping rather than failure.
/// Each lane's final state is evaluated once more for the GAE tail
/// bootstrap. Episodes straddle calls: an unfinished episode keeps its
/// accumulators and continues in the next collection.
///
/// Returns the episodes that finished, in completion order.
pub fn collect(
    envs: &mut [EnvInstance],
    params: &ActorCritic,
    gamma: f64,
    buffer: &mut RolloutBuffer,
) -> Result<Vec<EpisodeRecord>, RolloutError> {
    if buffer.n_envs != envs.len() {
        return Err(RolloutError::Shape {
            what: "buffer lanes",
            expected: envs.len(),
            got: buffer.n_envs,
        });
    }
    if params.obs_dim() != OBS_DIM {
        return Err(RolloutError::Shape {
            what: "policy input size",
            expected: OBS_DIM,
            got: params.obs_dim(),
        });
    }
    if params.action_dim() != ACTION_DIM {
        return Err(RolloutError::Shape {
            what: "policy output size",
            expected: ACTION_DIM,
            got: params.action_dim(),
        });
    }
    if buffer.obs_dim != OBS_DIM {
        return Err(RolloutError::Shape {
            what: "buffer observation size",
            expected: OBS_DIM,
            got: buffer.obs_dim,
        });
    }
    if buffer.act_dim != ACTION_DIM {
        return Err(RolloutError::Shape {
            what: "buffer action size",
            expected: ACTION_DIM,
            got: buffer.act_dim,
        });
    }

    let mut policy_cache = Activations::for_mlp(&params.policy.mlp);
    let mut value_cache = Activations::for_mlp(&params.value.mlp);
    let mut finished = Vec::new();
    for (lane, env) in envs.iter_mut().enumerate() {
        let mut obs = env.observe();
        for t in 0..buffer.n_steps {
            let dist = params.policy.distribution_cached(&obs, &mut policy_cache);
            let sampled = dist.sample(&mut env.rng);
            let mut action = [0.0; ACTION_DIM];
            action.copy_from_slice(&sampled);
            let lp = log_prob(&dist, &action);
            let value = params.value.value_cached(&obs, &mut value_cache);
            let out = env.env_step(&action);
            let mut reward = out.breakdown.total;
            if out.done {
                if out.reason == Some(EndReason::Timeout) {
                    let next = env.observe();
                    reward += gamma * params.value.value_cached(&next, &mut value_cache);
                }
                if let Some(record) = out.episode {
                    finished.push(record);
                }
                env.reset()?;
            }
            buffer.set_step(lane, t, &obs, &action, reward, out.done, value, lp);
            obs = env.observe();
        }
        let tail = params.value.value_cached(&obs, &mut value_cache);
        buffer.set_bootstrap(lane, tail);
    }
    Ok(finished)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LOG_STD_MIN;
    use std::collections::BTreeSet;
    use std::vec;

    fn still_cfg() -> EnvConfig {
        let mut cfg = EnvConfig::default();
        cfg.command = [0.0, 0.0];
        cfg.randomize_phase = false;
        cfg
    }

    fn standing(model: &BipedModel) -> [f64; ACTION_DIM] {
        model.standing_joint_angles().unwrap()
    }

    /// A policy that stands nearly still: output bias at the standing pose,
    /// log-stds pinned to the floor.
    fn quiet_actor(seed: u64) -> ActorCritic {
        let mut rng = seeded_rng(seed, INIT_RNG_STREAM);
        let mut ac = ActorCritic::init(OBS_DIM, &[16, 16], ACTION_DIM, &mut rng).unwrap();
        ac.set_policy_output_bias(&standing(&BipedModel::default()));
        for v in ac.policy.log_std.iter_mut() {
            *v = LOG_STD_MIN;
        }
        ac
    }

    fn loud_actor(seed: u64) -> ActorCritic {
        let mut rng = seeded_rng(seed, INIT_RNG_STREAM);
        ActorCritic::init(OBS_DIM, &[16, 16], ACTION_DIM, &mut rng).unwrap()
    }

    #[test]
    fn default_env_config_validates() {
        EnvConfig::default().validate().unwrap();

        let mut bad = EnvConfig::default();
        bad.episode_cap = 0;
        assert!(matches!(bad.validate(), Err(RolloutError::BadEnv(_))));

        let mut bad = EnvConfig::default();
        bad.vel_scale = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = EnvConfig::default();
        bad.command = [f64::NAN, 0.0];
        assert!(bad.validate().is_err());

        let mut bad = EnvConfig::default();
        bad.model.policy_dt = 0.02;
        assert!(bad.validate().is_err());

        let mut bad = EnvConfig::default();
        bad.reward.reg_joints = vec![String::from("flux_capacitor")];
        assert!(matches!(bad.validate(), Err(RolloutError::BadEnv(_))));
    }

    #[test]
    fn standing_still_earns_near_full_reward() {
        // At step one the references have barely left the ground and the
        // robot is upright with zero command, so every term is near its max.
        let mut env = EnvInstance::new(still_cfg(), 1, 0).unwrap();
        let action = standing(&env.config().model);
        let out = env.env_step(&action);
        assert!(!out.done);
        assert_eq!(out.reason, None);
        assert_eq!(out.breakdown.term, 0.0);
        assert!(out.breakdown.imit > 0.9, "imit = {}", out.breakdown.imit);
        assert!(out.breakdown.perf > 0.9, "perf = {}", out.breakdown.perf);
        assert!(
            out.breakdown.total > 0.9 && out.breakdown.total <= 1.0,
            "total = {}",
            out.breakdown.total
        );
        assert_eq!(out.contact, [true, true]);
        assert!(out.pelvis[2] > 0.9);
        assert_eq!(out.reference, env.gait().references_at_step(1));
    }

    #[test]
    fn observation_layout_matches_state() {
        let mut cfg = still_cfg();
        cfg.command = [0.4, 0.0];
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        for _ in 0..3 {
            env.env_step(&action);
        }
        let obs = env.observe();
        let q = env.sim_state().q;
        let qd = env.sim_state().qd;
        let quat = Quat::from_pitch(q[2]);
        let phase = env.gait().phase_at_step(3);
        let mut expect = [0.0; OBS_DIM];
        expect[0..4].copy_from_slice(&q[3..7]);
        for j in 0..4 {
            expect[4 + j] = qd[3 + j] / 5.0;
        }
        expect[8] = quat.w;
        expect[9] = quat.x;
        expect[10] = quat.y;
        expect[11] = quat.z;
        expect[12] = qd[2] / 5.0;
        expect[13] = qd[0] / 5.0;
        expect[14] = 0.0;
        expect[15] = q[1];
        expect[16] = phase.sin;
        expect[17] = phase.cos;
        expect[18] = 0.4 / 5.0;
        expect[19] = 0.0;
        assert_eq!(obs, expect);
    }

    #[test]
    fn phase_and_references_track_the_step_counter() {
        // 35 steps crosses the 28-step period boundary once.
        let mut env = EnvInstance::new(still_cfg(), 1, 0).unwrap();
        let action = standing(&env.config().model);
        for k in 1..=35u64 {
            let out = env.env_step(&action);
            assert!(!out.done, "unexpected termination at step {k}: {:?}", out.reason);
            assert_eq!(out.phase, env.gait().phase_at_step(k));
            assert_eq!(out.reference, env.gait().references_at_step(k));
            assert_eq!(env.steps_in_episode(), k);
        }
    }

    #[test]
    fn tracking_target_integrates_command() {
        let mut cfg = still_cfg();
        cfg.command = [0.4, 0.0];
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        let start = env.tracking_target();
        let mut expect_x = start[0];
        for _ in 0..10 {
            let out = env.env_step(&action);
            expect_x += 0.4 * POLICY_DT;
            assert_eq!(out.tracking_target, [expect_x, start[1], start[2]]);
        }
    }

    #[test]
    fn collapse_terminates_with_pelvis_low() {
        let mut env = EnvInstance::new(still_cfg(), 1, 0).unwrap();
        let fold = [0.0, -2.4, 0.0, -2.4];
        let mut ended = None;
        for _ in 0..200 {
            let out = env.env_step(&fold);
            if out.done {
                ended = Some(out);
                break;
            }
        }
        let out = ended.expect("folding the knees must end the episode");
        assert_eq!(out.reason, Some(EndReason::PelvisLow));
        assert_eq!(out.breakdown.term, -10.0);
        assert!(out.breakdown.total < -8.5, "total = {}", out.breakdown.total);
        let record = out.episode.unwrap();
        assert_eq!(record.reason, EndReason::PelvisLow);
        assert_eq!(record.length as u64, env.steps_in_episode());
    }

    #[test]
    fn tight_tracking_slack_trips_on_settling_droop() {
        // The PD stance sags roughly two centimetres while settling, so a
        // one-centimetre tracking sphere around the spawn point must break
        // within the first second even though the robot never falls.
        let mut cfg = still_cfg();
        cfg.reward.track_slack = 0.01;
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        let mut reason = None;
        for _ in 0..40 {
            let out = env.env_step(&action);
            if out.done {
                reason = out.reason;
                break;
            }
        }
        assert_eq!(reason, Some(EndReason::Tracking));
    }

    #[test]
    fn timeout_ends_episode_without_penalty() {
        let mut cfg = still_cfg();
        cfg.episode_cap = 5;
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        for _ in 0..4 {
            assert!(!env.env_step(&action).done);
        }
        let out = env.env_step(&action);
        assert!(out.done);
        assert_eq!(out.reason, Some(EndReason::Timeout));
        assert_eq!(out.breakdown.term, 0.0);
        assert!(out.breakdown.total > -2.0);
        let record = out.episode.unwrap();
        assert_eq!(record.length, 5);
        assert_eq!(record.reason, EndReason::Timeout);
    }

    #[test]
    fn real_failures_beat_the_step_cap() {
        // One settling step leaves the pelvis around 0.945, above a 0.9
        // ceiling, on the same step the one-step cap would truncate.
        let mut cfg = still_cfg();
        cfg.reward.pelvis_max = 0.9;
        cfg.episode_cap = 1;
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        let out = env.env_step(&action);
        assert!(out.done);
        assert_eq!(out.reason, Some(EndReason::PelvisHigh));
        assert_eq!(out.breakdown.term, -10.0);
    }

    #[test]
    fn blowup_is_terminal_with_bare_penalty() {
        // Astronomical gains make the very first substep diverge.
        let mut cfg = still_cfg();
        cfg.model.kp = [1.0e15; ACTION_DIM];
        cfg.model.torque_limit = [1.0e15; ACTION_DIM];
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let out = env.env_step(&[1.4, -0.05, 1.4, -0.05]);
        assert!(out.done);
        assert_eq!(out.reason, Some(EndReason::Blowup));
        assert_eq!(out.breakdown.term, -10.0);
        assert_eq!(out.breakdown.total, -10.0);
        assert_eq!(out.breakdown.imit, 0.0);
        let record = out.episode.unwrap();
        assert_eq!(record.reason, EndReason::Blowup);
        assert_eq!(record.length, 1);
        assert_eq!(record.reward_sum, -10.0);
        // Reset clears the wreckage.
        env.reset().unwrap();
        assert_eq!(env.steps_in_episode(), 0);
        assert!(env.sim_state().q.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn regularizer_reads_configured_joints() {
        let mut cfg = still_cfg();
        cfg.reward.reg_joints = JOINT_NAMES.iter().map(|n| String::from(*n)).collect();
        cfg.reward.reg_denom = 10.0;
        let mut env = EnvInstance::new(cfg, 1, 0).unwrap();
        let action = standing(&env.config().model);
        let out = env.env_step(&action);
        let q = env.sim_state().q;
        let sum_sq: f64 = q[3..7].iter().map(|a| a * a).sum();
        let expect = 0.1 * libm::exp(-sum_sq / 10.0);
        assert_eq!(out.breakdown.reg, expect);
        assert!(out.breakdown.reg > 0.08);
    }

    #[test]
    fn pose_override_replaces_the_standing_spawn() {
        let mut cfg = still_cfg();
        let q0 = [0.1, 0.8, 0.05, 0.3, -0.9, 0.2, -0.7];
        cfg.initial_q = Some(q0);
        let env = EnvInstance::new(cfg, 1, 0).unwrap();
        assert_eq!(env.sim_state().q, q0);
        assert_eq!(env.sim_state().qd, [0.0; 7]);
        assert_eq!(env.tracking_target(), [0.1, 0.0, 0.8]);

        let mut bad = still_cfg();
        let mut q_bad = q0;
        q_bad[4] = 0.5; // knees cannot hyperextend past the limit box
        bad.initial_q = Some(q_bad);
        assert!(matches!(bad.validate(), Err(RolloutError::BadEnv(_))));
    }

    #[test]
    fn reset_redraws_swing_leg() {
        let mut cfg = EnvConfig::default();
        cfg.randomize_phase = true;
        let mut env = EnvInstance::new(cfg, 7, 0).unwrap();
        let mut seen = BTreeSet::new();
        for _ in 0..40 {
            env.reset().unwrap();
            let phi0 = env.gait().initial_phase();
            assert!(phi0 == 0.0 || phi0 == core::f64::consts::PI);
            seen.insert(phi0.to_bits());
        }
        assert_eq!(seen.len(), 2, "both leading legs should appear across resets");
    }

    #[test]
    fn collect_fills_buffer_deterministically() {
        let run = || {
            let mut cfg = EnvConfig::default();
            cfg.episode_cap = 30;
            let params = loud_actor(9);
            let mut envs: Vec<EnvInstance> = (0..3)
                .map(|id| EnvInstance::new(cfg.clone(), 9, id).unwrap())
                .collect();
            let mut buffer = RolloutBuffer::new(3, 50, OBS_DIM, ACTION_DIM);
            let records = collect(&mut envs, &params, 0.99, &mut buffer).unwrap();
            (buffer, records)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.obs, b.obs);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.rewards, b.rewards);
        assert_eq!(a.dones, b.dones);
        assert_eq!(a.values, b.values);
        assert_eq!(a.log_probs, b.log_probs);
        assert_eq!(a.bootstrap, b.bootstrap);
        assert_eq!(ra, rb);
        // The 30-step cap inside a 50-step collection guarantees finished
        // episodes, and everything written must be finite.
        assert!(ra.len() >= 3);
        assert!(a.obs.iter().all(|v| v.is_finite()));
        assert!(a.rewards.iter().all(|v| v.is_finite()));
        assert!(a.values.iter().all(|v| v.is_finite()));
        assert!(a.log_probs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_lane_matches_first_of_two() {
        // Lane RNG streams are keyed by env id, so adding a second lane must
        // not disturb the first in any way.
        let cfg = EnvConfig::default();
        let params = loud_actor(13);
        let n = 40;

        let mut solo = vec![EnvInstance::new(cfg.clone(), 13, 0).unwrap()];
        let mut buf_a = RolloutBuffer::new(1, n, OBS_DIM, ACTION_DIM);
        let ra = collect(&mut solo, &params, 0.99, &mut buf_a).unwrap();

        let mut pair = vec![
            EnvInstance::new(cfg.clone(), 13, 0).unwrap(),
            EnvInstance::new(cfg, 13, 1).unwrap(),
        ];
        let mut buf_b = RolloutBuffer::new(2, n, OBS_DIM, ACTION_DIM);
        let rb = collect(&mut pair, &params, 0.99, &mut buf_b).unwrap();

        assert_eq!(buf_a.obs[..], buf_b.obs[..n * OBS_DIM]);
        assert_eq!(buf_a.actions[..], buf_b.actions[..n * ACTION_DIM]);
        assert_eq!(buf_a.rewards[..], buf_b.rewards[..n]);
        assert_eq!(buf_a.dones[..], buf_b.dones[..n]);
        assert_eq!(buf_a.values[..], buf_b.values[..n]);
        assert_eq!(buf_a.log_probs[..], buf_b.log_probs[..n]);
        assert_eq!(buf_a.bootstrap[0], buf_b.bootstrap[0]);
        let rb_lane0: Vec<_> = rb.iter().filter(|r| r.env_id == 0).copied().collect();
        assert_eq!(ra, rb_lane0);
    }

    #[test]
    fn episodes_span_collection_boundaries() {
        let mut cfg = still_cfg();
        cfg.episode_cap = 10;
        let params = quiet_actor(5);
        let mut envs = vec![EnvInstance::new(cfg, 5, 0).unwrap()];
        let mut buffer = RolloutBuffer::new(1, 6, OBS_DIM, ACTION_DIM);

        let first = collect(&mut envs, &params, 0.99, &mut buffer).unwrap();
        assert!(first.is_empty(), "episode should still be running: {first:?}");

        let second = collect(&mut envs, &params, 0.99, &mut buffer).unwrap();
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].length, 10);
        assert_eq!(second[0].reason, EndReason::Timeout);
        // Steps 11 and 12 belong to the next episode.
        assert_eq!(envs[0].steps_in_episode(), 2);
    }

    #[test]
    fn timeout_reward_carries_discounted_tail() {
        let mut cfg = still_cfg();
        cfg.episode_cap = 3;
        let params = quiet_actor(11);
        let gamma = 0.99;

        // Hand-rolled replica of the collection loop for one lane.
        let mut env = EnvInstance::new(cfg.clone(), 11, 0).unwrap();
        let mut expected = 0.0;
        for t in 0..3 {
            let obs = env.observe();
            let dist = crate::nn::forward_policy(&obs, &params.policy).unwrap();
            let sampled = dist.sample(&mut env.rng);
            let mut action = [0.0; ACTION_DIM];
            action.copy_from_slice(&sampled);
            let out = env.env_step(&action);
            if t == 2 {
                assert_eq!(out.reason, Some(EndReason::Timeout));
                let tail = crate::nn::forward_value(&env.observe(), &params.value).unwrap();
                expected = out.breakdown.total + gamma * tail;
            }
        }

        let mut envs = vec![EnvInstance::new(cfg, 11, 0).unwrap()];
        let mut buffer = RolloutBuffer::new(1, 3, OBS_DIM, ACTION_DIM);
        collect(&mut envs, &params, gamma, &mut buffer).unwrap();
        assert!(buffer.dones[2]);
        assert_eq!(buffer.rewards[2], expected);
    }

    #[test]
    fn failure_reward_is_not_bootstrapped() {
        // Terminations must store the bare penalized reward; only cap hits
        // get the value tail folded in.
        let mut cfg = still_cfg();
        cfg.reward.pelvis_max = 0.9;
        let params = quiet_actor(11);

        let mut env = EnvInstance::new(cfg.clone(), 11, 0).unwrap();
        let obs = env.observe();
        let dist = crate::nn::forward_policy(&obs, &params.policy).unwrap();
        let sampled = dist.sample(&mut env.rng);
        let mut action = [0.0; ACTION_DIM];
        action.copy_from_slice(&sampled);
        let out = env.env_step(&action);
        assert_eq!(out.reason, Some(EndReason::PelvisHigh));

        let mut envs = vec![EnvInstance::new(cfg, 11, 0).unwrap()];
        let mut buffer = RolloutBuffer::new(1, 2, OBS_DIM, ACTION_DIM);
        let records = collect(&mut envs, &params, 0.99, &mut buffer).unwrap();
        assert!(buffer.dones[0]);
        assert_eq!(buffer.rewards[0], out.breakdown.total);
        assert_eq!(records[0].reason, EndReason::PelvisHigh);
    }

    #[test]
    fn blowups_inside_collection_stay_contained() {
        // Every episode explodes on its first step; the buffer must still
        // come out finite because pre-step observations are taken before the
        // state goes bad and resets follow immediately.
        let mut cfg = still_cfg();
        cfg.model.kp = [1.0e15; ACTION_DIM];
        cfg.model.torque_limit = [1.0e15; ACTION_DIM];
        let params = loud_actor(3);
        let mut envs = vec![EnvInstance::new(cfg, 3, 0).unwrap()];
        let mut buffer = RolloutBuffer::new(1, 5, OBS_DIM, ACTION_DIM);
        let records = collect(&mut envs, &params, 0.99, &mut buffer).unwrap();
        assert_eq!(records.len(), 5);
        assert!(records.iter().all(|r| r.reason == EndReason::Blowup && r.length == 1));
        assert!(buffer.obs.iter().all(|v| v.is_finite()));
        assert!(buffer.rewards.iter().all(|&r| r == -10.0));
        assert!(buffer.dones.iter().all(|&d| d));
        assert!(buffer.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn collect_rejects_shape_mismatches() {
        let cfg = EnvConfig::default();
        let params = quiet_actor(2);
        let mut envs = vec![EnvInstance::new(cfg, 2, 0).unwrap()];

        let mut wrong_lanes = RolloutBuffer::new(2, 4, OBS_DIM, ACTION_DIM);
        assert!(matches!(
            collect(&mut envs, &params, 0.99, &mut wrong_lanes),
            Err(RolloutError::Shape { what: "buffer lanes", .. })
        ));

        let mut wrong_obs = RolloutBuffer::new(1, 4, OBS_DIM - 1, ACTION_DIM);
        assert!(matches!(
            collect(&mut envs, &params, 0.99, &mut wrong_obs),
            Err(RolloutError::Shape { what: "buffer observation size", .. })
        ));

        let mut rng = seeded_rng(2, INIT_RNG_STREAM);
        let narrow = ActorCritic::init(OBS_DIM - 1, &[8], ACTION_DIM, &mut rng).unwrap();
        let mut buffer = RolloutBuffer::new(1, 4, OBS_DIM, ACTION_DIM);
        assert!(matches!(
            collect(&mut envs, &narrow, 0.99, &mut buffer),
            Err(RolloutError::Shape { what: "policy input size", .. })
        ));
    }
}
