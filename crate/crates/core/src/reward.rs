//! Reward shaping for reference-tracking locomotion.
//!
//! The per-step reward is a weighted sum of four terms:
//!
//! ```text
//! r = w_imit * r_imit + w_perf * r_perf + r_reg + r_term
//! ```
//!
//! * `r_imit` scores how closely the feet track the sine references. The raw
//!   kernel `r_imit* = exp(-sum((ref - foot)^2) / sigma^2)` is affinely
//!   renormalized so that the score a do-nothing policy collects (feet flat on
//!   the ground, `r_imit*` near the band floor `b_lower`) maps to a *negative*
//!   value: standing still costs reward instead of accumulating it, which is
//!   what pushes survival-seeking policies into actually lifting their feet.
//! * `r_perf` blends velocity-command tracking and pelvis uprightness.
//! * `r_reg` is an optional joint-angle regularizer for morphologies with
//!   passive joints; with no regularized joints configured it is exactly 0.
//! * `r_term` is a one-time penalty on termination.
//!
//! Termination itself is also decided here: pelvis height leaving its band, or
//! the pelvis drifting out of a sphere of radius `track_slack + |v_c|` around
//! a virtual target that advances at the commanded velocity.

use alloc::string::String;
use alloc::vec::Vec;

/// Scalar-first unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Rotation of `pitch` radians about the +y axis.
    pub fn from_pitch(pitch: f64) -> Quat {
        Quat { w: libm::cos(0.5 * pitch), x: 0.0, y: libm::sin(0.5 * pitch), z: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardError {
    /// Normalization band must satisfy `b_lower < b_upper`.
    BadNormalizationBand { lower: f64, upper: f64 },
    /// Quaternion inputs must be unit length within 1e-9.
    NonUnitQuaternion { norm: f64 },
    /// A configured regularization joint was not present in the joint map.
    MissingJoint(String),
    /// A config field failed validation.
    BadConfig(&'static str),
}

impl core::fmt::Display for RewardError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RewardError::BadNormalizationBand { lower, upper } => {
                write!(f, "normalization band requires b_lower < b_upper, got [{lower}, {upper}]")
            }
            RewardError::NonUnitQuaternion { norm } => {
                write!(f, "quaternion must be unit length, got norm {norm}")
            }
            RewardError::MissingJoint(name) => {
                write!(f, "regularization joint '{name}' not present in joint map")
            }
            RewardError::BadConfig(what) => write!(f, "bad reward config: {what}"),
        }
    }
}

impl core::error::Error for RewardError {}

/// Which reward terms the episode composes. The two degraded modes exist for
/// controlled comparisons against the full reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    /// Full reward as documented on [`total_reward`].
    None,
    /// Drop imitation entirely: `r = 0*r_imit + 1*r_perf + r_reg + r_term`.
    NoImitation,
    /// Use the raw kernel: `r = w_imit*r_imit_nominal + w_perf*r_perf + ...`.
    NoNormalization,
}

/// Why an episode ended. The first three come out of
/// [`check_termination`]; the last two are assigned by the rollout layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    PelvisLow,
    PelvisHigh,
    Tracking,
    Timeout,
    Blowup,
}

impl EndReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            EndReason::PelvisLow => "pelvis_low",
            EndReason::PelvisHigh => "pelvis_high",
            EndReason::Tracking => "tracking",
            EndReason::Timeout => "timeout",
            EndReason::Blowup => "blowup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    /// Outer weight on the normalized imitation term.
    pub w_imit: f64,
    /// Outer weight on the performance term.
    pub w_perf: f64,
    /// Inner weight on velocity tracking within the performance term.
    pub w_vel: f64,
    /// Inner weight on uprightness within the performance term.
    pub w_orient: f64,
    /// Imitation kernel width, metres.
    pub sigma_imit: f64,
    /// Imitation normalization band floor (do-nothing baseline score).
    pub b_lower: f64,
    /// Imitation normalization band ceiling.
    pub b_upper: f64,
    /// One-time reward on termination.
    pub term_penalty: f64,
    /// Pelvis height band, metres.
    pub pelvis_min: f64,
    pub pelvis_max: f64,
    /// Base radius of the allowed sphere around the tracking target, metres.
    pub track_slack: f64,
    /// Regularizer magnitude and squared-angle denominator.
    pub reg_scale: f64,
    pub reg_denom: f64,
    /// Joints the regularizer reads; empty disables the term entirely.
    pub reg_joints: Vec<String>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_imit: 0.5,
            w_perf: 0.5,
            w_vel: 0.75,
            w_orient: 0.25,
            sigma_imit: 0.05,
            b_lower: 0.4,
            b_upper: 1.0,
            term_penalty: -10.0,
            pelvis_min: 0.6,
            pelvis_max: 1.2,
            track_slack: 0.6,
            reg_scale: 0.1,
            reg_denom: 0.001,
            reg_joints: Vec::new(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.sigma_imit > 0.0) {
            return Err(RewardError::BadConfig("sigma_imit must be > 0"));
        }
        if !(self.b_lower < self.b_upper) {
            return Err(RewardError::BadNormalizationBand {
                lower: self.b_lower,
                upper: self.b_upper,
            });
        }
        if !(self.pelvis_min < self.pelvis_max) {
            return Err(RewardError::BadConfig("pelvis_min must be < pelvis_max"));
        }
        if !(self.track_slack > 0.0) {
            return Err(RewardError::BadConfig("track_slack must be > 0"));
        }
        if !(self.reg_denom > 0.0) {
            return Err(RewardError::BadConfig("reg_denom must be > 0"));
        }
        let finite = [
            self.w_imit,
            self.w_perf,
            self.w_vel,
            self.w_orient,
            self.term_penalty,
            self.reg_scale,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(RewardError::BadConfig("weights must be finite"));
        }
        Ok(())
    }
}

/// The individual reward terms for one step, before composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub imit_nominal: f64,
    pub imit: f64,
    pub p_vel: f64,
    pub p_orient: f64,
    pub perf: f64,
    pub reg: f64,
}

/// Everything [`total_reward`] produced for one step. `total` is what the
/// learner sees; the rest is kept for logs and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub imit_nominal: f64,
    pub imit: f64,
    pub p_vel: f64,
    pub p_orient: f64,
    pub perf: f64,
    pub reg: f64,
    pub term: f64,
    pub total: f64,
}

/// Virtual point the pelvis is asked to stay near. Starts at the reset pelvis
/// position and glides at the commanded planar velocity; height never moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingState {
    pub target: [f64; 3],
}

impl TrackingState {
    pub fn new(pelvis_pos: [f64; 3]) -> Self {
        TrackingState { target: pelvis_pos }
    }

    /// Advance the target by one step of the commanded velocity.
    pub fn advance(&mut self, v_c: [f64; 2], dt: f64) {
        self.target[0] += v_c[0] * dt;
        self.target[1] += v_c[1] * dt;
    }
}

/// Raw imitation kernel: `exp(-((ref_l-foot_l)^2 + (ref_r-foot_r)^2) / sigma^2)`.
/// Always in (0, 1]. `sigma` must be positive.
pub fn imitation_nominal(
    refs: &crate::gait::ReferencePair,
    foot_heights: (f64, f64),
    sigma: f64,
) -> f64 {
    debug_assert!(sigma > 0.0);
    let dl = refs.left - foot_heights.0;
    let dr = refs.right - foot_heights.1;
    libm::exp(-(dl * dl + dr * dr) / (sigma * sigma))
}

/// Affine renormalization of the imitation kernel:
/// `(r_star - b_lower) / (b_upper - b_lower)`. Scores at the band floor map
/// to 0 and below-floor scores go negative.
pub fn normalize_imitation(r_star: f64, b_lower: f64, b_upper: f64) -> Result<f64, RewardError> {
    if !(b_lower < b_upper) {
        return Err(RewardError::BadNormalizationBand { lower: b_lower, upper: b_upper });
    }
    Ok((r_star - b_lower) / (b_upper - b_lower))
}

/// Geodesic angle between two unit quaternions, in [0, pi]. Insensitive to
/// the double cover (`q` and `-q` compare equal).
pub fn quaternion_angle(a: &Quat, b: &Quat) -> Result<f64, RewardError> {
    for q in [a, b] {
        let norm = q.norm();
        if libm::fabs(norm - 1.0) > 1e-9 {
            return Err(RewardError::NonUnitQuaternion { norm });
        }
    }
    // Scalar part of conj(a)*b is the 4-D dot product; for unit inputs the
    // vector part's norm is sqrt(1 - w^2).
    let w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    let v = libm::sqrt((1.0 - w * w).max(0.0));
    Ok(2.0 * libm::atan2(v, libm::fabs(w)))
}

/// Velocity-tracking penalty exponent:
/// `|v_p - v_c|^2 / max(0.1^2, 0.5*|v_c|^2)`. The floor keeps the
/// denominator sane for small or zero commands.
pub fn velocity_penalty(v_p: [f64; 2], v_c: [f64; 2]) -> f64 {
    let dx = v_p[0] - v_c[0];
    let dy = v_p[1] - v_c[1];
    let cmd_sq = v_c[0] * v_c[0] + v_c[1] * v_c[1];
    (dx * dx + dy * dy) / (0.01f64).max(0.5 * cmd_sq)
}

/// Performance term and its two penalty exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub p_vel: f64,
    pub p_orient: f64,
    pub perf: f64,
}

/// `r_perf = w_vel * exp(-p_vel) + w_orient * exp(-p_orient)` where `p_vel`
/// is the velocity penalty above and `p_orient = sin^2(angle/2) / 0.1` with
/// `angle` the pelvis tilt away from upright.
pub fn performance(
    v_p: [f64; 2],
    v_c: [f64; 2],
    orientation: &Quat,
    cfg: &RewardConfig,
) -> Result<Performance, RewardError> {
    let p_vel = velocity_penalty(v_p, v_c);
    let angle = quaternion_angle(orientation, &Quat::IDENTITY)?;
    let half_sin = libm::sin(0.5 * angle);
    let p_orient = half_sin * half_sin / 0.1;
    let perf = cfg.w_vel * libm::exp(-p_vel) + cfg.w_orient * libm::exp(-p_orient);
    Ok(Performance { p_vel, p_orient, perf })
}

/// `r_reg = reg_scale * exp(-sum(q_j^2) / reg_denom)` over the configured
/// joints, looked up by name in `joint_angles`. An empty joint list yields
/// exactly 0 rather than `reg_scale`, so morphologies without passive joints
/// collect no free per-step reward from this term.
pub fn regularization(
    joint_angles: &[(&str, f64)],
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    if cfg.reg_joints.is_empty() {
        return Ok(0.0);
    }
    let mut sum_sq = 0.0;
    for name in &cfg.reg_joints {
        let angle = joint_angles
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| *a)
            .ok_or_else(|| RewardError::MissingJoint(name.clone()))?;
        sum_sq += angle * angle;
    }
    Ok(cfg.reg_scale * libm::exp(-sum_sq / cfg.reg_denom))
}

/// Decides whether the state is terminal. Checks run in a fixed order:
/// pelvis too low, pelvis too high, then pelvis outside the sphere of radius
/// `track_slack + |v_c|` around the tracking target.
pub fn check_termination(
    pelvis_pos: [f64; 3],
    tracking: &TrackingState,
    v_c: [f64; 2],
    cfg: &RewardConfig,
) -> Option<EndReason> {
    let height = pelvis_pos[2];
    if height < cfg.pelvis_min {
        return Some(EndReason::PelvisLow);
    }
    if height > cfg.pelvis_max {
        return Some(EndReason::PelvisHigh);
    }
    let dx = pelvis_pos[0] - tracking.target[0];
    let dy = pelvis_pos[1] - tracking.target[1];
    let dz = pelvis_pos[2] - tracking.target[2];
    let dev = libm::sqrt(dx * dx + dy * dy + dz * dz);
    let radius = cfg.track_slack + libm::sqrt(v_c[0] * v_c[0] + v_c[1] * v_c[1]);
    if dev > radius {
        return Some(EndReason::Tracking);
    }
    None
}

/// Composes the final per-step reward from the individual terms.
pub fn total_reward(
    terms: &RewardTerms,
    terminated: bool,
    cfg: &RewardConfig,
    ablation: AblationMode,
) -> RewardBreakdown {
    let term = if terminated { cfg.term_penalty } else { 0.0 };
    let total = match ablation {
        AblationMode::None => cfg.w_imit * terms.imit + cfg.w_perf * terms.perf,
        AblationMode::NoImitation => terms.perf,
        AblationMode::NoNormalization => cfg.w_imit * terms.imit_nominal + cfg.w_perf * terms.perf,
    } + terms.reg
        + term;
    RewardBreakdown {
        imit_nominal: terms.imit_nominal,
        imit: terms.imit,
        p_vel: terms.p_vel,
        p_orient: terms.p_orient,
        perf: terms.perf,
        reg: terms.reg,
        term,
        total,
    }
}
