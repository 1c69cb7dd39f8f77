//! Clipped-surrogate policy optimization over fixed-size rollout buffers.
//!
//! The update consumes a buffer of `n_envs * n_steps` transitions laid out
//! environment-major, computes generalized advantage estimates per
//! environment lane, normalizes them once per update, then runs several
//! epochs of shuffled minibatch steps. Each minibatch does one Adam step on
//! the combined objective
//!
//! ```text
//! L = mean(-min(ratio * A, clamp(ratio, 1-clip, 1+clip) * A))
//!   + value_coef * mean((V - returns)^2)
//!   + entropy_coef * mean(-entropy)
//! ```
//!
//! with a global gradient-norm clip across every policy and value tensor.
//! Given the same buffer, parameters, and shuffle seed the update is bitwise
//! deterministic.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{
    adam_step, AcGrads, Activations, ActorCritic, AdamState, PolicyDistribution,
};

#[derive(Debug, Clone, PartialEq)]
pub enum PpoError {
    BadConfig(&'static str),
    /// Slice lengths passed to GAE disagree.
    LengthMismatch { rewards: usize, values: usize, dones: usize },
    /// The buffer was not fully written or advantages were never computed.
    BufferNotReady,
    /// Buffer dimensions do not match the network.
    ShapeMismatch { expected: usize, got: usize },
    /// A loss went non-finite mid-update; carries (epoch, minibatch).
    NonFiniteLoss { epoch: u32, minibatch: usize },
}

impl core::fmt::Display for PpoError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PpoError::BadConfig(msg) => write!(f, "bad ppo config: {msg}"),
            PpoError::LengthMismatch { rewards, values, dones } => write!(
                f,
                "gae inputs disagree: {rewards} rewards, {values} values, {dones} dones"
            ),
            PpoError::BufferNotReady => write!(f, "rollout buffer incomplete or advantages missing"),
            PpoError::ShapeMismatch { expected, got } => {
                write!(f, "buffer feature size {got} does not match network input {expected}")
            }
            PpoError::NonFiniteLoss { epoch, minibatch } => {
                write!(f, "non-finite loss in epoch {epoch}, minibatch {minibatch}")
            }
        }
    }
}

impl core::error::Error for PpoError {}

/// Hyperparameters for collection and optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub lr: f64,
    pub clip: f64,
    pub epochs: u32,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Parallel environment lanes per update.
    pub n_envs: usize,
    /// Steps collected per lane per update.
    pub n_steps: usize,
    /// Total updates a training run performs.
    pub total_updates: u32,
    /// Hidden layer widths shared by the policy and value nets.
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            lr: 3e-4,
            clip: 0.2,
            epochs: 10,
            minibatch_size: 128,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            n_envs: 16,
            n_steps: 256,
            total_updates: 500,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(PpoError::BadConfig("gamma must be in [0, 1]"));
        }
        if !(self.lam >= 0.0 && self.lam <= 1.0) {
            return Err(PpoError::BadConfig("lambda must be in [0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PpoError::BadConfig("lr must be positive"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(PpoError::BadConfig("clip must be in (0, 1)"));
        }
        if self.epochs == 0 {
            return Err(PpoError::BadConfig("epochs must be >= 1"));
        }
        if self.minibatch_size == 0 {
            return Err(PpoError::BadConfig("minibatch_size must be >= 1"));
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return Err(PpoError::BadConfig("loss coefficients must be >= 0"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(PpoError::BadConfig("max_grad_norm must be positive"));
        }
        if self.n_envs == 0 || self.n_steps == 0 {
            return Err(PpoError::BadConfig("n_envs and n_steps must be >= 1"));
        }
        if self.total_updates == 0 {
            return Err(PpoError::BadConfig("total_updates must be >= 1"));
        }
        Ok(())
    }
}

/// Log density of a diagonal Gaussian at `action`. Dimensions must match.
pub fn log_prob(dist: &PolicyDistribution, action: &[f64]) -> f64 {
    debug_assert_eq!(dist.mean.len(), action.len());
    const HALF_LOG_TAU: f64 = 0.91893853320467274178; // 0.5 * ln(2*pi)
    let mut lp = 0.0;
    for i in 0..action.len() {
        let sigma = libm::exp(dist.log_std[i]);
        let z = (action[i] - dist.mean[i]) / sigma;
        lp += -0.5 * z * z - dist.log_std[i] - HALF_LOG_TAU;
    }
    lp
}

/// Generalized advantage estimation over one trajectory lane.
///
/// `dones[t]` marks a terminal at step `t`; both the bootstrap value and the
/// advantage recursion are masked across it. `bootstrap` is `V` of the state
/// after the final step and must be 0 if that step terminated. Returns
/// `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let t_max = rewards.len();
    if values.len() != t_max || dones.len() != t_max {
        return Err(PpoError::LengthMismatch {
            rewards: t_max,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut advantages = vec![0.0; t_max];
    let mut returns = vec![0.0; t_max];
    let mut gae = 0.0;
    for t in (0..t_max).rev() {
        let next_value = if t + 1 == t_max { bootstrap } else { values[t + 1] };
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        gae = delta + gamma * lam * not_done * gae;
        advantages[t] = gae;
        returns[t] = gae + values[t];
    }
    Ok((advantages, returns))
}

/// Center and scale to unit standard deviation (population), with the
/// denominator floored at 1e-8 to survive constant inputs.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let denom = libm::sqrt(var).max(1e-8);
    adv.iter().map(|a| (a - mean) / denom).collect()
}

/// Fixed-capacity transition store, laid out environment-major:
/// sample `env * n_steps + t`. The rollout layer fills every slot each
/// iteration; `compute_advantages` must run before `ppo_update`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Per-lane value of the state after the last collected step.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    advantages_ready: bool,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, n_steps: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = n_envs * n_steps;
        RolloutBuffer {
            n_envs,
            n_steps,
            obs_dim,
            act_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * act_dim],
            rewards: vec![0.0; n],
            dones: vec![false; n],
            values: vec![0.0; n],
            log_probs: vec![0.0; n],
            bootstrap: vec![0.0; n_envs],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
            advantages_ready: false,
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write one transition. Any write invalidates computed advantages.
    #[allow(clippy::too_many_arguments)]
    pub fn set_step(
        &mut self,
        env: usize,
        t: usize,
        obs: &[f64],
        action: &[f64],
        reward: f64,
        done: bool,
        value: f64,
        log_prob_val: f64,
    ) {
        assert!(env < self.n_envs && t < self.n_steps, "buffer index out of range");
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(action.len(), self.act_dim);
        let idx = env * self.n_steps + t;
        self.obs[idx * self.obs_dim..(idx + 1) * self.obs_dim].copy_from_slice(obs);
        self.actions[idx * self.act_dim..(idx + 1) * self.act_dim].copy_from_slice(action);
        self.rewards[idx] = reward;
        self.dones[idx] = done;
        self.values[idx] = value;
        self.log_probs[idx] = log_prob_val;
        self.advantages_ready = false;
    }

    pub fn set_bootstrap(&mut self, env: usize, value: f64) {
        self.bootstrap[env] = value;
        self.advantages_ready = false;
    }

    pub fn obs_at(&self, idx: usize) -> &[f64] {
        &self.obs[idx * self.obs_dim..(idx + 1) * self.obs_dim]
    }

    pub fn action_at(&self, idx: usize) -> &[f64] {
        &self.actions[idx * self.act_dim..(idx + 1) * self.act_dim]
    }

    /// Run GAE independently over every environment lane.
    pub fn compute_advantages(&mut self, gamma: f64, lam: f64) -> Result<(), PpoError> {
        for env in 0..self.n_envs {
            let lo = env * self.n_steps;
            let hi = lo + self.n_steps;
            let (adv, ret) = compute_gae(
                &self.rewards[lo..hi],
                &self.values[lo..hi],
                &self.dones[lo..hi],
                self.bootstrap[env],
                gamma,
                lam,
            )?;
            self.advantages[lo..hi].copy_from_slice(&adv);
            self.returns[lo..hi].copy_from_slice(&ret);
        }
        self.advantages_ready = true;
        Ok(())
    }

    pub fn advantages_ready(&self) -> bool {
        self.advantages_ready
    }
}

/// Per-update optimization statistics (means over all minibatches).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// One full PPO update: `epochs` passes of shuffled minibatches, one Adam
/// step per minibatch. Deterministic given `(params, buffer, rng state)`.
pub fn ppo_update<R: Rng>(
    params: &mut ActorCritic,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    cfg.validate()?;
    if !buffer.advantages_ready {
        return Err(PpoError::BufferNotReady);
    }
    if buffer.obs_dim != params.obs_dim() {
        return Err(PpoError::ShapeMismatch { expected: params.obs_dim(), got: buffer.obs_dim });
    }
    if buffer.act_dim != params.action_dim() {
        return Err(PpoError::ShapeMismatch { expected: params.action_dim(), got: buffer.act_dim });
    }

    let n = buffer.len();
    let adv = if cfg.normalize_advantages {
        normalize_advantages(&buffer.advantages)
    } else {
        buffer.advantages.clone()
    };

    let mut indices: Vec<usize> = (0..n).collect();
    let mut grads = AcGrads::zeros_like(params);
    let mut policy_cache = Activations::for_mlp(&params.policy.mlp);
    let mut value_cache = Activations::for_mlp(&params.value.mlp);
    let mut mean_grad = vec![0.0; params.action_dim()];
    let mut ls_grad = vec![0.0; params.action_dim()];

    let mut stats = UpdateStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_frac: 0.0,
        grad_norm: 0.0,
        minibatches: 0,
    };

    for epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for (mb_idx, chunk) in indices.chunks(cfg.minibatch_size).enumerate() {
            let mb = chunk.len() as f64;
            grads.zero();
            let mut pol_loss = 0.0;
            let mut val_loss = 0.0;
            let mut entropy_sum = 0.0;
            let mut kl_sum = 0.0;
            let mut clipped = 0usize;

            for &idx in chunk {
                let obs = buffer.obs_at(idx);
                let action = buffer.action_at(idx);
                let dist = params.policy.distribution_cached(obs, &mut policy_cache);
                let value = params.value.value_cached(obs, &mut value_cache);

                let lp_new = log_prob(&dist, action);
                let log_ratio = lp_new - buffer.log_probs[idx];
                let ratio = libm::exp(log_ratio);
                let a = adv[idx];
                let unclipped = ratio * a;
                let clamped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
                pol_loss += -unclipped.min(clamped);
                kl_sum += (ratio - 1.0) - log_ratio;
                if libm::fabs(ratio - 1.0) > cfg.clip {
                    clipped += 1;
                }
                entropy_sum += dist.entropy();

                // Policy gradient flows only while the unclipped branch is
                // the active minimum; a saturated clamp has zero slope.
                let dlp = if unclipped <= clamped { -a * ratio } else { 0.0 };
                for i in 0..action.len() {
                    let sigma = dist.std(i);
                    let z = (action[i] - dist.mean[i]) / sigma;
                    mean_grad[i] = dlp * z / sigma;
                    // d log_prob / d log_std = z^2 - 1; entropy adds
                    // d(-H)/d log_std = -1 per dimension.
                    ls_grad[i] = dlp * (z * z - 1.0) - cfg.entropy_coef;
                }
                params.policy.mlp.backward(&mean_grad, &policy_cache, &mut grads.policy, None);
                // The log_std parameter only acts through its clamp: no
                // gradient where it sits outside the active band.
                for i in 0..action.len() {
                    let p = params.policy.log_std[i];
                    if (crate::nn::LOG_STD_MIN..=crate::nn::LOG_STD_MAX).contains(&p) {
                        grads.log_std[i] += ls_grad[i];
                    }
                }

                let verr = value - buffer.returns[idx];
                val_loss += verr * verr;
                params.value.mlp.backward(
                    &[cfg.value_coef * 2.0 * verr],
                    &value_cache,
                    &mut grads.value,
                    None,
                );
            }

            let pol_loss = pol_loss / mb;
            let val_loss = val_loss / mb;
            if !pol_loss.is_finite() || !val_loss.is_finite() {
                return Err(PpoError::NonFiniteLoss { epoch, minibatch: mb_idx });
            }
            grads.scale(1.0 / mb);
            let norm = grads.global_norm();
            if norm > cfg.max_grad_norm {
                grads.scale(cfg.max_grad_norm / norm);
            }
            adam_step(params, &grads, adam, cfg.lr);

            stats.policy_loss += pol_loss;
            stats.value_loss += val_loss;
            stats.entropy += entropy_sum / mb;
            stats.approx_kl += kl_sum / mb;
            stats.clip_frac += clipped as f64 / mb;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }

    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_frac /= k;
    stats.grad_norm /= k;
    Ok(stats)
}
