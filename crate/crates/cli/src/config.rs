//! Flat-key run configuration.
//!
//! The format is one `section.key = value` per line, `#` comments, blank
//! lines ignored. Unknown keys are rejected with the offending line number
//! so typos fail loudly instead of silently training with a default.
//!
//! [`RunConfig::snapshot`] renders the complete effective configuration in
//! a canonical order; parsing the snapshot reproduces the config exactly
//! (floats are printed shortest-round-trip).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use singait_core::gait::GaitSpec;
use singait_core::nn::{LOG_STD_MAX, LOG_STD_MIN};
use singait_core::ppo::PpoConfig;
use singait_core::reward::{AblationMode, RewardConfig};
use singait_core::rollout::EnvConfig;
use singait_core::sim::{BipedModel, DOF, N_JOINTS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// A line of a config file failed to parse; `origin` is the file path
    /// (or a placeholder for in-memory text) and `line` is 1-based.
    #[error("{origin}:{line}: {msg}")]
    Parse { origin: String, line: usize, msg: String },
    /// The file parsed but the resulting configuration is unusable.
    #[error("config: {0}")]
    Invalid(String),
    /// Could not read an input file at all.
    #[error("{path}: {err}")]
    Io { path: String, err: String },
}

/// Which initial swing leg an episode may start with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi0Choices {
    /// Coin-flip per episode between the two leg orderings.
    Both,
    /// Always start with phase 0 (left leg swings first).
    Zero,
    /// Always start with phase pi (right leg swings first).
    Pi,
}

impl Phi0Choices {
    fn as_str(self) -> &'static str {
        match self {
            Phi0Choices::Both => "both",
            Phi0Choices::Zero => "zero",
            Phi0Choices::Pi => "pi",
        }
    }

    fn parse(v: &str) -> Result<Self, String> {
        match v {
            "both" => Ok(Phi0Choices::Both),
            "zero" => Ok(Phi0Choices::Zero),
            "pi" => Ok(Phi0Choices::Pi),
            other => Err(format!(
                "expected one of both|zero|pi for gait.phi0_choices, got '{other}'"
            )),
        }
    }
}

fn ablation_as_str(mode: AblationMode) -> &'static str {
    match mode {
        AblationMode::None => "none",
        AblationMode::NoImitation => "no_imitation",
        AblationMode::NoNormalization => "no_normalization",
    }
}

fn ablation_parse(v: &str) -> Result<AblationMode, String> {
    match v {
        "none" => Ok(AblationMode::None),
        "no_imitation" => Ok(AblationMode::NoImitation),
        "no_normalization" => Ok(AblationMode::NoNormalization),
        other => Err(format!(
            "expected one of none|no_imitation|no_normalization for ablation.mode, got '{other}'"
        )),
    }
}

/// Everything a run needs, exactly one field per config key.
///
/// Inertias are `None` for the `auto` sentinel (segment modeled as a thin
/// rod: `m*l^2/12`), so a snapshot keeps saying `auto` instead of freezing
/// a number that would silently stop tracking mass/length edits.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // gait.*
    pub gait_h: f64,
    pub gait_dh: f64,
    pub gait_period_s: f64,
    pub phi0_choices: Phi0Choices,

    // reward.*
    pub w_imit: f64,
    pub w_perf: f64,
    pub w_vel: f64,
    pub w_orient: f64,
    pub sigma_imit: f64,
    pub b_lower: f64,
    pub b_upper: f64,
    pub term_penalty: f64,
    /// Pelvis height band as fractions of `model.nominal_height`.
    pub pelvis_min_frac: f64,
    pub pelvis_max_frac: f64,
    pub track_slack: f64,
    pub reg_scale: f64,
    pub reg_denom: f64,
    pub reg_joints: Vec<String>,

    // model.*
    pub torso_mass: f64,
    pub thigh_mass: f64,
    pub shin_mass: f64,
    pub torso_length: f64,
    pub thigh_length: f64,
    pub shin_length: f64,
    pub torso_inertia: Option<f64>,
    pub thigh_inertia: Option<f64>,
    pub shin_inertia: Option<f64>,
    pub gravity: f64,
    /// Scalar PD gains / torque ceiling, applied to all four joints.
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    /// Hip range is symmetric `[-hip_limit, hip_limit]`; knee range is
    /// `[knee_lower, knee_upper]` (both negative: knees bend backwards).
    pub hip_limit: f64,
    pub knee_lower: f64,
    pub knee_upper: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    pub sim_dt: f64,
    pub policy_dt: f64,
    pub nominal_height: f64,

    // obs.*
    pub vel_scale: f64,

    // ppo.*
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
    pub n_envs: usize,
    pub n_steps: usize,
    pub hidden: Vec<usize>,
    /// Initial policy log-stddev for every action dimension.
    pub log_std0: f64,

    // run.*
    pub seed: u64,
    pub total_updates: u32,
    /// Commanded planar velocity `[v_x, v_y]`; `v_y` must be 0.
    pub command: [f64; 2],
    pub out_dir: String,
    pub episode_cap: u32,
    pub checkpoint_every: u32,
    pub eval_episodes: u32,

    // init.*
    /// Optional spawn pose file (7 whitespace-separated coordinates);
    /// empty disables the override. Relative paths resolve against the
    /// config file's directory.
    pub pose_file: String,

    // ablation.*
    pub ablation: AblationMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = BipedModel::default();
        let reward = RewardConfig::default();
        let ppo = PpoConfig::default();
        RunConfig {
            gait_h: 0.15,
            gait_dh: 0.03,
            gait_period_s: 0.84,
            phi0_choices: Phi0Choices::Both,

            w_imit: reward.w_imit,
            w_perf: reward.w_perf,
            w_vel: reward.w_vel,
            w_orient: reward.w_orient,
            sigma_imit: reward.sigma_imit,
            b_lower: reward.b_lower,
            b_upper: reward.b_upper,
            term_penalty: reward.term_penalty,
            pelvis_min_frac: reward.pelvis_min / model.nominal_height,
            pelvis_max_frac: reward.pelvis_max / model.nominal_height,
            track_slack: reward.track_slack,
            reg_scale: reward.reg_scale,
            reg_denom: reward.reg_denom,
            reg_joints: Vec::new(),

            torso_mass: model.torso_mass,
            thigh_mass: model.thigh_mass,
            shin_mass: model.shin_mass,
            torso_length: model.torso_length,
            thigh_length: model.thigh_length,
            shin_length: model.shin_length,
            torso_inertia: None,
            thigh_inertia: None,
            shin_inertia: None,
            gravity: model.gravity,
            kp: model.kp[0],
            kd: model.kd[0],
            torque_limit: model.torque_limit[0],
            hip_limit: model.joint_upper[0],
            knee_lower: model.joint_lower[1],
            knee_upper: model.joint_upper[1],
            contact_stiffness: model.contact_stiffness,
            contact_damping: model.contact_damping,
            friction: model.friction,
            sim_dt: model.sim_dt,
            policy_dt: model.policy_dt,
            nominal_height: model.nominal_height,

            vel_scale: 5.0,

            gamma: ppo.gamma,
            lam: ppo.lam,
            lr: ppo.lr,
            clip: ppo.clip,
            epochs: ppo.epochs,
            minibatch_size: ppo.minibatch_size,
            value_coef: ppo.value_coef,
            entropy_coef: ppo.entropy_coef,
            max_grad_norm: ppo.max_grad_norm,
            normalize_advantages: ppo.normalize_advantages,
            n_envs: ppo.n_envs,
            n_steps: ppo.n_steps,
            hidden: ppo.hidden,
            log_std0: 0.0,

            seed: 1,
            total_updates: ppo.total_updates,
            command: [0.4, 0.0],
            out_dir: String::from("out"),
            episode_cap: 600,
            checkpoint_every: 50,
            eval_episodes: 8,

            pose_file: String::new(),

            ablation: AblationMode::None,
        }
    }
}

fn f64_of(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'"))
}

fn u32_of(v: &str) -> Result<u32, String> {
    v.parse::<u32>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn u64_of(v: &str) -> Result<u64, String> {
    v.parse::<u64>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn usize_of(v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn bool_of(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

/// `auto` or a number.
fn inertia_of(v: &str) -> Result<Option<f64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        f64_of(v).map(Some).map_err(|_| format!("expected a number or 'auto', got '{v}'"))
    }
}

/// Split a `[a, b, c]` list into trimmed element strings; `[]` is empty.
fn list_items(v: &str) -> Result<Vec<&str>, String> {
    let inner = v
        .strip_prefix('[')
        .and_then(|rest| rest.strip_suffix(']'))
        .ok_or_else(|| format!("expected a [bracketed, list], got '{v}'"))?
        .trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    let items: Vec<&str> = inner.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(format!("empty element in list '{v}'"));
    }
    Ok(items)
}

fn vec2_of(v: &str) -> Result<[f64; 2], String> {
    let items = list_items(v)?;
    if items.len() != 2 {
        return Err(format!("expected exactly 2 numbers, got {}", items.len()));
    }
    Ok([f64_of(items[0])?, f64_of(items[1])?])
}

fn usize_list_of(v: &str) -> Result<Vec<usize>, String> {
    list_items(v)?.into_iter().map(usize_of).collect()
}

fn string_list_of(v: &str) -> Result<Vec<String>, String> {
    Ok(list_items(v)?.into_iter().map(String::from).collect())
}

fn fmt_inertia(v: Option<f64>) -> String {
    match v {
        None => String::from("auto"),
        Some(x) => format!("{x}"),
    }
}

fn fmt_f64_list(xs: &[f64]) -> String {
    let body: Vec<String> = xs.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", body.join(", "))
}

fn fmt_usize_list(xs: &[usize]) -> String {
    let body: Vec<String> = xs.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", body.join(", "))
}

fn fmt_string_list(xs: &[String]) -> String {
    format!("[{}]", xs.join(", "))
}

impl RunConfig {
    /// Parse config text. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let uncommented = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = uncommented.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Parse {
                origin: origin.to_string(),
                line: line_no,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'section.key = value', got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Read and parse a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            err: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Set one key. Duplicate keys are allowed; the last occurrence wins.
    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "gait.h" => self.gait_h = f64_of(value)?,
            "gait.dh" => self.gait_dh = f64_of(value)?,
            "gait.period_s" => self.gait_period_s = f64_of(value)?,
            "gait.phi0_choices" => self.phi0_choices = Phi0Choices::parse(value)?,

            "reward.w_imit" => self.w_imit = f64_of(value)?,
            "reward.w_perf" => self.w_perf = f64_of(value)?,
            "reward.w_vel" => self.w_vel = f64_of(value)?,
            "reward.w_orient" => self.w_orient = f64_of(value)?,
            "reward.sigma_imit" => self.sigma_imit = f64_of(value)?,
            "reward.b_lower" => self.b_lower = f64_of(value)?,
            "reward.b_upper" => self.b_upper = f64_of(value)?,
            "reward.term_penalty" => self.term_penalty = f64_of(value)?,
            "reward.pelvis_min_frac" => self.pelvis_min_frac = f64_of(value)?,
            "reward.pelvis_max_frac" => self.pelvis_max_frac = f64_of(value)?,
            "reward.track_slack" => self.track_slack = f64_of(value)?,
            "reward.reg_scale" => self.reg_scale = f64_of(value)?,
            "reward.reg_denom" => self.reg_denom = f64_of(value)?,
            "reward.reg_joints" => self.reg_joints = string_list_of(value)?,

            "model.torso_mass" => self.torso_mass = f64_of(value)?,
            "model.thigh_mass" => self.thigh_mass = f64_of(value)?,
            "model.shin_mass" => self.shin_mass = f64_of(value)?,
            "model.torso_length" => self.torso_length = f64_of(value)?,
            "model.thigh_length" => self.thigh_length = f64_of(value)?,
            "model.shin_length" => self.shin_length = f64_of(value)?,
            "model.torso_inertia" => self.torso_inertia = inertia_of(value)?,
            "model.thigh_inertia" => self.thigh_inertia = inertia_of(value)?,
            "model.shin_inertia" => self.shin_inertia = inertia_of(value)?,
            "model.gravity" => self.gravity = f64_of(value)?,
            "model.kp" => self.kp = f64_of(value)?,
            "model.kd" => self.kd = f64_of(value)?,
            "model.torque_limit" => self.torque_limit = f64_of(value)?,
            "model.hip_limit" => self.hip_limit = f64_of(value)?,
            "model.knee_lower" => self.knee_lower = f64_of(value)?,
            "model.knee_upper" => self.knee_upper = f64_of(value)?,
            "model.contact_stiffness" => self.contact_stiffness = f64_of(value)?,
            "model.contact_damping" => self.contact_damping = f64_of(value)?,
            "model.friction" => self.friction = f64_of(value)?,
            "model.sim_dt" => self.sim_dt = f64_of(value)?,
            "model.policy_dt" => self.policy_dt = f64_of(value)?,
            "model.nominal_height" => self.nominal_height = f64_of(value)?,

            "obs.vel_scale" => self.vel_scale = f64_of(value)?,

            "ppo.gamma" => self.gamma = f64_of(value)?,
            "ppo.lam" => self.lam = f64_of(value)?,
            "ppo.lr" => self.lr = f64_of(value)?,
            "ppo.clip" => self.clip = f64_of(value)?,
            "ppo.epochs" => self.epochs = u32_of(value)?,
            "ppo.minibatch_size" => self.minibatch_size = usize_of(value)?,
            "ppo.value_coef" => self.value_coef = f64_of(value)?,
            "ppo.entropy_coef" => self.entropy_coef = f64_of(value)?,
            "ppo.max_grad_norm" => self.max_grad_norm = f64_of(value)?,
            "ppo.normalize_advantages" => self.normalize_advantages = bool_of(value)?,
            "ppo.n_envs" => self.n_envs = usize_of(value)?,
            "ppo.n_steps" => self.n_steps = usize_of(value)?,
            "ppo.hidden" => self.hidden = usize_list_of(value)?,
            "ppo.log_std0" => self.log_std0 = f64_of(value)?,

            "run.seed" => self.seed = u64_of(value)?,
            "run.total_updates" => self.total_updates = u32_of(value)?,
            "run.command" => self.command = vec2_of(value)?,
            "run.out_dir" => self.out_dir = value.to_string(),
            "run.episode_cap" => self.episode_cap = u32_of(value)?,
            "run.checkpoint_every" => self.checkpoint_every = u32_of(value)?,
            "run.eval_episodes" => self.eval_episodes = u32_of(value)?,

            "init.pose_file" => self.pose_file = value.to_string(),

            "ablation.mode" => self.ablation = ablation_parse(value)?,

            other => return Err(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    /// Canonical dump of every key. Parsing it reproduces `self` exactly.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "# effective run configuration (canonical)");
        let _ = writeln!(w, "gait.h = {}", self.gait_h);
        let _ = writeln!(w, "gait.dh = {}", self.gait_dh);
        let _ = writeln!(w, "gait.period_s = {}", self.gait_period_s);
        let _ = writeln!(w, "gait.phi0_choices = {}", self.phi0_choices.as_str());
        let _ = writeln!(w);
        let _ = writeln!(w, "reward.w_imit = {}", self.w_imit);
        let _ = writeln!(w, "reward.w_perf = {}", self.w_perf);
        let _ = writeln!(w, "reward.w_vel = {}", self.w_vel);
        let _ = writeln!(w, "reward.w_orient = {}", self.w_orient);
        let _ = writeln!(w, "reward.sigma_imit = {}", self.sigma_imit);
        let _ = writeln!(w, "reward.b_lower = {}", self.b_lower);
        let _ = writeln!(w, "reward.b_upper = {}", self.b_upper);
        let _ = writeln!(w, "reward.term_penalty = {}", self.term_penalty);
        let _ = writeln!(w, "reward.pelvis_min_frac = {}", self.pelvis_min_frac);
        let _ = writeln!(w, "reward.pelvis_max_frac = {}", self.pelvis_max_frac);
        let _ = writeln!(w, "reward.track_slack = {}", self.track_slack);
        let _ = writeln!(w, "reward.reg_scale = {}", self.reg_scale);
        let _ = writeln!(w, "reward.reg_denom = {}", self.reg_denom);
        let _ = writeln!(w, "reward.reg_joints = {}", fmt_string_list(&self.reg_joints));
        let _ = writeln!(w);
        let _ = writeln!(w, "model.torso_mass = {}", self.torso_mass);
        let _ = writeln!(w, "model.thigh_mass = {}", self.thigh_mass);
        let _ = writeln!(w, "model.shin_mass = {}", self.shin_mass);
        let _ = writeln!(w, "model.torso_length = {}", self.torso_length);
        let _ = writeln!(w, "model.thigh_length = {}", self.thigh_length);
        let _ = writeln!(w, "model.shin_length = {}", self.shin_length);
        let _ = writeln!(w, "model.torso_inertia = {}", fmt_inertia(self.torso_inertia));
        let _ = writeln!(w, "model.thigh_inertia = {}", fmt_inertia(self.thigh_inertia));
        let _ = writeln!(w, "model.shin_inertia = {}", fmt_inertia(self.shin_inertia));
        let _ = writeln!(w, "model.gravity = {}", self.gravity);
        let _ = writeln!(w, "model.kp = {}", self.kp);
        let _ = writeln!(w, "model.kd = {}", self.kd);
        let _ = writeln!(w, "model.torque_limit = {}", self.torque_limit);
        let _ = writeln!(w, "model.hip_limit = {}", self.hip_limit);
        let _ = writeln!(w, "model.knee_lower = {}", self.knee_lower);
        let _ = writeln!(w, "model.knee_upper = {}", self.knee_upper);
        let _ = writeln!(w, "model.contact_stiffness = {}", self.contact_stiffness);
        let _ = writeln!(w, "model.contact_damping = {}", self.contact_damping);
        let _ = writeln!(w, "model.friction = {}", self.friction);
        let _ = writeln!(w, "model.sim_dt = {}", self.sim_dt);
        let _ = writeln!(w, "model.policy_dt = {}", self.policy_dt);
        let _ = writeln!(w, "model.nominal_height = {}", self.nominal_height);
        let _ = writeln!(w);
        let _ = writeln!(w, "obs.vel_scale = {}", self.vel_scale);
        let _ = writeln!(w);
        let _ = writeln!(w, "ppo.gamma = {}", self.gamma);
        let _ = writeln!(w, "ppo.lam = {}", self.lam);
        let _ = writeln!(w, "ppo.lr = {}", self.lr);
        let _ = writeln!(w, "ppo.clip = {}", self.clip);
        let _ = writeln!(w, "ppo.epochs = {}", self.epochs);
        let _ = writeln!(w, "ppo.minibatch_size = {}", self.minibatch_size);
        let _ = writeln!(w, "ppo.value_coef = {}", self.value_coef);
        let _ = writeln!(w, "ppo.entropy_coef = {}", self.entropy_coef);
        let _ = writeln!(w, "ppo.max_grad_norm = {}", self.max_grad_norm);
        let _ = writeln!(w, "ppo.normalize_advantages = {}", self.normalize_advantages);
        let _ = writeln!(w, "ppo.n_envs = {}", self.n_envs);
        let _ = writeln!(w, "ppo.n_steps = {}", self.n_steps);
        let _ = writeln!(w, "ppo.hidden = {}", fmt_usize_list(&self.hidden));
        let _ = writeln!(w, "ppo.log_std0 = {}", self.log_std0);
        let _ = writeln!(w);
        let _ = writeln!(w, "run.seed = {}", self.seed);
        let _ = writeln!(w, "run.total_updates = {}", self.total_updates);
        let _ = writeln!(w, "run.command = {}", fmt_f64_list(&self.command));
        let _ = writeln!(w, "run.out_dir = {}", self.out_dir);
        let _ = writeln!(w, "run.episode_cap = {}", self.episode_cap);
        let _ = writeln!(w, "run.checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(w, "run.eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(w);
        let _ = writeln!(w, "init.pose_file = {}", self.pose_file);
        let _ = writeln!(w);
        let _ = writeln!(w, "ablation.mode = {}", ablation_as_str(self.ablation));
        s
    }

    /// Physical model with inertias resolved and scalar gains splatted.
    pub fn biped_model(&self) -> BipedModel {
        let rod = |m: f64, l: f64| m * l * l / 12.0;
        BipedModel {
            torso_mass: self.torso_mass,
            thigh_mass: self.thigh_mass,
            shin_mass: self.shin_mass,
            torso_length: self.torso_length,
            thigh_length: self.thigh_length,
            shin_length: self.shin_length,
            torso_inertia: self
                .torso_inertia
                .unwrap_or_else(|| rod(self.torso_mass, self.torso_length)),
            thigh_inertia: self
                .thigh_inertia
                .unwrap_or_else(|| rod(self.thigh_mass, self.thigh_length)),
            shin_inertia: self
                .shin_inertia
                .unwrap_or_else(|| rod(self.shin_mass, self.shin_length)),
            gravity: self.gravity,
            kp: [self.kp; N_JOINTS],
            kd: [self.kd; N_JOINTS],
            torque_limit: [self.torque_limit; N_JOINTS],
            joint_lower: [-self.hip_limit, self.knee_lower, -self.hip_limit, self.knee_lower],
            joint_upper: [self.hip_limit, self.knee_upper, self.hip_limit, self.knee_upper],
            contact_stiffness: self.contact_stiffness,
            contact_damping: self.contact_damping,
            friction: self.friction,
            sim_dt: self.sim_dt,
            policy_dt: self.policy_dt,
            nominal_height: self.nominal_height,
        }
    }

    /// Reward weights with the pelvis band resolved to absolute heights.
    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            w_imit: self.w_imit,
            w_perf: self.w_perf,
            w_vel: self.w_vel,
            w_orient: self.w_orient,
            sigma_imit: self.sigma_imit,
            b_lower: self.b_lower,
            b_upper: self.b_upper,
            term_penalty: self.term_penalty,
            pelvis_min: self.pelvis_min_frac * self.nominal_height,
            pelvis_max: self.pelvis_max_frac * self.nominal_height,
            track_slack: self.track_slack,
            reg_scale: self.reg_scale,
            reg_denom: self.reg_denom,
            reg_joints: self.reg_joints.clone(),
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            lam: self.lam,
            lr: self.lr,
            clip: self.clip,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
            normalize_advantages: self.normalize_advantages,
            n_envs: self.n_envs,
            n_steps: self.n_steps,
            total_updates: self.total_updates,
            hidden: self.hidden.clone(),
        }
    }

    /// Environment description (spawn-pose override not yet loaded; see
    /// [`env_config_with_pose`](Self::env_config_with_pose)).
    pub fn env_config(&self) -> Result<EnvConfig, ConfigError> {
        if self.command[1] != 0.0 {
            return Err(ConfigError::Invalid(format!(
                "run.command v_y must be 0 (the simulator is planar), got {}",
                self.command[1]
            )));
        }
        let phi0 = match self.phi0_choices {
            Phi0Choices::Pi => PI,
            _ => 0.0,
        };
        let gait = GaitSpec::new(self.gait_h, self.gait_dh, self.gait_period_s, phi0)
            .map_err(|e| ConfigError::Invalid(format!("gait: {e}")))?;
        let cfg = EnvConfig {
            model: self.biped_model(),
            gait,
            reward: self.reward_config(),
            ablation: self.ablation,
            command: self.command,
            episode_cap: self.episode_cap,
            randomize_phase: self.phi0_choices == Phi0Choices::Both,
            vel_scale: self.vel_scale,
            initial_q: None,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Environment description with the `init.pose_file` override loaded
    /// (relative paths resolve against `config_dir`).
    pub fn env_config_with_pose(&self, config_dir: &Path) -> Result<EnvConfig, ConfigError> {
        let mut cfg = self.env_config()?;
        cfg.initial_q = self.resolve_pose(config_dir)?;
        if cfg.initial_q.is_some() {
            cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Load the spawn pose named by `init.pose_file`: exactly [`DOF`]
    /// whitespace-separated coordinates, `#` comments allowed.
    pub fn resolve_pose(&self, config_dir: &Path) -> Result<Option<[f64; DOF]>, ConfigError> {
        if self.pose_file.is_empty() {
            return Ok(None);
        }
        let path = config_dir.join(&self.pose_file);
        let text = fs::read_to_string(&path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            err: e.to_string(),
        })?;
        let mut values = Vec::new();
        for raw in text.lines() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    ConfigError::Invalid(format!(
                        "pose file {}: '{tok}' is not a number",
                        path.display()
                    ))
                })?;
                values.push(v);
            }
        }
        if values.len() != DOF {
            return Err(ConfigError::Invalid(format!(
                "pose file {}: expected {DOF} coordinates, found {}",
                path.display(),
                values.len()
            )));
        }
        let mut q = [0.0; DOF];
        q.copy_from_slice(&values);
        Ok(Some(q))
    }

    /// Check every derived component, not just the raw fields.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env_config()?;
        self.ppo_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.hidden.iter().any(|&wdt| wdt == 0) {
            return Err(ConfigError::Invalid(String::from(
                "ppo.hidden widths must be positive",
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(ConfigError::Invalid(String::from(
                "run.checkpoint_every must be at least 1",
            )));
        }
        if !(self.log_std0.is_finite()
            && (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std0))
        {
            return Err(ConfigError::Invalid(format!(
                "ppo.log_std0 must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}], got {}",
                self.log_std0
            )));
        }
        Ok(())
    }
}
