//! Core numerics for the singait workbench: sine-wave gait references, the
//! reward that scores them, a planar five-link biped, and a small PPO stack
//! (MLP policy/value nets, GAE, clipped updates, rollout collection).
//!
//! Everything in here is `no_std + alloc` and bitwise deterministic: float
//! transcendentals go through `libm`, randomness through seeded ChaCha
//! streams, and no container with unstable iteration order is used anywhere.
//! File formats, CSV logs, and the CLI live in the companion `singait-cli`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod gait;
pub mod nn;
pub mod ppo;
pub mod reward;
pub mod rollout;
pub mod sim;

pub use gait::{GaitSpec, PhaseVector, ReferencePair};
pub use nn::ActorCritic;
pub use ppo::{PpoConfig, RolloutBuffer, UpdateStats};
pub use reward::{AblationMode, EndReason, RewardBreakdown, RewardConfig};
pub use rollout::{build_observation, collect, EnvConfig, EnvInstance, EpisodeRecord, StepOutcome};
pub use sim::{BipedModel, SimState};

/// Low-level integrator step, seconds. The contact model's stability margin
/// and all frozen test expectations assume this rate.
pub const SIM_DT: f64 = 1.0 / 2000.0;

/// Policy (control) step, seconds. One policy step = [`SUBSTEPS`] sim steps.
pub const POLICY_DT: f64 = 0.03;

/// Integrator substeps per policy step.
pub const SUBSTEPS: u32 = 60;

/// Entries in a flattened observation vector.
pub const OBS_DIM: usize = 20;

/// Actuated joints, and therefore entries in an action vector.
pub const ACTION_DIM: usize = 4;
