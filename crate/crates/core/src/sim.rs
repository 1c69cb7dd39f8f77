//! Planar five-link biped: torso rod on a free-floating pelvis plus two
//! two-segment legs, all in the sagittal plane (x forward, z up).
//!
//! Generalized coordinates `q = [x, z, pitch, hip_l, knee_l, hip_r, knee_r]`:
//! pelvis position, torso pitch (positive leans forward, toward +x), and
//! hinge angles. Hinge coordinates equal the physical hinge angles — a
//! motor torque on a joint coordinate is exactly an internal actuator pair,
//! so joint torques can never create net momentum. Absolute segment angles:
//! torso leans by `pitch` (clockwise from vertical), the thigh hangs at
//! `hip - pitch` and the shin at `hip + knee - pitch`, both measured
//! counterclockwise from straight down, so positive hip swings the leg
//! forward and negative knee folds the shin back, human-fashion.
//!
//! Dynamics are assembled body-by-body, `M(q) = sum_i m_i Jv_i^T Jv_i +
//! I_i Jw_i^T Jw_i`, with centripetal bias accelerations on the right-hand
//! side, solved by Cholesky each substep, integrated with semi-implicit
//! Euler. Ground contact is a one-sided spring-damper on each point foot
//! with a friction-clamped tangential damper. PD controllers turn absolute
//! joint position targets into torques.
//!
//! The standing pose is a balanced crouch: both feet directly under the
//! total center of mass (not the pelvis — the knees-forward crouch puts the
//! mass several centimetres ahead of it).
//!
//! Everything is deterministic: identical `(model, state, torques)` produce
//! bitwise identical successors.

use alloc::string::String;

use nalgebra::{SMatrix, SVector};

use crate::{POLICY_DT, SIM_DT};

type Mat7 = SMatrix<f64, 7, 7>;
type Vec7 = SVector<f64, 7>;

pub const DOF: usize = 7;
/// Index of the left hip in `q`; knee follows, then the right pair.
pub const JOINT_OFFSET: usize = 3;
pub const N_JOINTS: usize = 4;

/// Any coordinate or rate beyond these bounds is treated as divergence.
const MAX_COORD: f64 = 1.0e6;
const MAX_RATE: f64 = 1.0e7;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    BadModel(String),
    /// The mass matrix lost positive definiteness (state already absurd).
    FactorizationFailed { substep: u64 },
    /// A coordinate went non-finite or beyond plausibility bounds.
    Blowup { substep: u64 },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::BadModel(msg) => write!(f, "bad model: {msg}"),
            SimError::FactorizationFailed { substep } => {
                write!(f, "mass matrix factorization failed at substep {substep}")
            }
            SimError::Blowup { substep } => {
                write!(f, "state diverged at substep {substep}")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// Physical parameters. All fields public so experiments can perturb them;
/// run `validate` after editing.
#[derive(Debug, Clone, PartialEq)]
pub struct BipedModel {
    pub torso_mass: f64,
    pub thigh_mass: f64,
    pub shin_mass: f64,
    pub torso_length: f64,
    pub thigh_length: f64,
    pub shin_length: f64,
    /// Rotational inertias about each segment's center of mass.
    pub torso_inertia: f64,
    pub thigh_inertia: f64,
    pub shin_inertia: f64,
    pub gravity: f64,
    /// PD gains and torque ceiling per joint, ordered hip_l, knee_l, hip_r, knee_r.
    pub kp: [f64; N_JOINTS],
    pub kd: [f64; N_JOINTS],
    pub torque_limit: [f64; N_JOINTS],
    pub joint_lower: [f64; N_JOINTS],
    pub joint_upper: [f64; N_JOINTS],
    /// Ground spring stiffness (N/m), normal damping (N·s/m), and Coulomb
    /// friction ratio for the foot contacts.
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction: f64,
    pub sim_dt: f64,
    pub policy_dt: f64,
    /// Standing pelvis height the initial pose is solved for.
    pub nominal_height: f64,
}

impl Default for BipedModel {
    fn default() -> Self {
        BipedModel {
            torso_mass: 10.0,
            thigh_mass: 2.5,
            shin_mass: 1.5,
            torso_length: 0.4,
            thigh_length: 0.5,
            shin_length: 0.5,
            // Uniform rods: m L^2 / 12.
            torso_inertia: 10.0 * 0.4 * 0.4 / 12.0,
            thigh_inertia: 2.5 * 0.5 * 0.5 / 12.0,
            shin_inertia: 1.5 * 0.5 * 0.5 / 12.0,
            gravity: 9.81,
            kp: [150.0; N_JOINTS],
            kd: [6.0; N_JOINTS],
            torque_limit: [150.0; N_JOINTS],
            joint_lower: [-1.4, -2.4, -1.4, -2.4],
            joint_upper: [1.4, -0.05, 1.4, -0.05],
            contact_stiffness: 1.0e5,
            contact_damping: 1.0e3,
            friction: 1.0,
            sim_dt: SIM_DT,
            policy_dt: POLICY_DT,
            nominal_height: 0.95,
        }
    }
}

impl BipedModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::BadModel(String::from(msg)));
        let masses = [self.torso_mass, self.thigh_mass, self.shin_mass];
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return bad("masses must be positive");
        }
        let lengths = [self.torso_length, self.thigh_length, self.shin_length];
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("segment lengths must be positive");
        }
        let inertias = [self.torso_inertia, self.thigh_inertia, self.shin_inertia];
        if inertias.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
            return bad("inertias must be positive");
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return bad("gravity must be finite and non-negative");
        }
        for j in 0..N_JOINTS {
            if !(self.kp[j] >= 0.0 && self.kd[j] >= 0.0) {
                return bad("pd gains must be non-negative");
            }
            if !(self.torque_limit[j] > 0.0) {
                return bad("torque limits must be positive");
            }
            if !(self.joint_lower[j] < self.joint_upper[j]) {
                return bad("joint limits must satisfy lower < upper");
            }
        }
        if !(self.contact_stiffness > 0.0 && self.contact_damping >= 0.0 && self.friction >= 0.0) {
            return bad("contact parameters out of range");
        }
        if !(self.sim_dt > 0.0 && self.policy_dt > 0.0) {
            return bad("time steps must be positive");
        }
        let ratio = self.policy_dt / self.sim_dt;
        let rounded = libm::round(ratio);
        if rounded < 1.0 || libm::fabs(ratio - rounded) > 1e-9 * rounded {
            return bad("policy_dt must be an integer multiple of sim_dt");
        }
        let leg = self.thigh_length + self.shin_length;
        if !(self.nominal_height > 0.0 && self.nominal_height < leg) {
            return bad("nominal_height must sit inside leg reach");
        }
        // The standing pose must be solvable and respect its own limits.
        let pose = self.standing_joint_angles()?;
        for j in 0..N_JOINTS {
            if pose[j] < self.joint_lower[j] || pose[j] > self.joint_upper[j] {
                return bad("standing pose violates joint limits");
            }
        }
        Ok(())
    }

    /// Integrator substeps per policy step.
    pub fn substeps(&self) -> u32 {
        libm::round(self.policy_dt / self.sim_dt) as u32
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 2.0 * (self.thigh_mass + self.shin_mass)
    }

    /// Balanced symmetric crouch at `nominal_height`: with the torso
    /// vertical, place both feet directly under the whole-body center of
    /// mass. Writing `s1 = sin(thigh angle)`, `s2 = sin(shin angle)`
    /// (absolute, from vertical), the under-COM condition is linear —
    /// `s2 = ratio * s1` — and the height condition is solved by bisection.
    pub fn standing_joint_angles(&self) -> Result<[f64; N_JOINTS], SimError> {
        let lt = self.thigh_length;
        let ls = self.shin_length;
        let m = self.total_mass();
        // COM x per leg: m_th*(lt/2)*s1 + m_sh*(lt*s1 + (ls/2)*s2), doubled;
        // equate to foot x = lt*s1 + ls*s2 and solve for s2/s1.
        let ratio = (lt * (self.thigh_mass + 2.0 * self.shin_mass - m)) / (ls * (m - self.shin_mass));
        let height = |s1: f64| -> f64 {
            let s2 = ratio * s1;
            lt * libm::sqrt(1.0 - s1 * s1) + ls * libm::sqrt(1.0 - s2 * s2)
        };
        let mut lo = 0.0;
        let mut hi = if libm::fabs(ratio) > 1.0 { 1.0 / libm::fabs(ratio) } else { 1.0 };
        hi *= 1.0 - 1e-12;
        if height(hi) > self.nominal_height {
            return Err(SimError::BadModel(String::from(
                "no balanced stance reaches nominal_height",
            )));
        }
        // height(s1) decreases monotonically on [0, hi]; bisect to the ulp.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if height(mid) > self.nominal_height {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s1 = 0.5 * (lo + hi);
        let phi1 = libm::asin(s1);
        let phi2 = libm::asin(ratio * s1);
        let hip = phi1;
        let knee = phi2 - phi1;
        Ok([hip, knee, hip, knee])
    }
}

/// Full mechanical state plus contact flags from the latest substep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub q: [f64; DOF],
    pub qd: [f64; DOF],
    /// Substeps taken since this state was created.
    pub substeps_taken: u64,
    /// Whether each foot (left, right) carried contact force last substep.
    pub contact: [bool; 2],
}

/// Standing start: pelvis at the nominal height, feet exactly on the ground
/// under the center of mass, everything at rest.
pub fn initial_state(model: &BipedModel) -> Result<SimState, SimError> {
    let pose = model.standing_joint_angles()?;
    let mut q = [0.0; DOF];
    q[1] = model.nominal_height;
    q[JOINT_OFFSET..DOF].copy_from_slice(&pose);
    Ok(SimState { q, qd: [0.0; DOF], substeps_taken: 0, contact: [false, false] })
}

/// World positions of every joint and center of mass for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub pelvis: [f64; 2],
    pub torso_com: [f64; 2],
    pub torso_top: [f64; 2],
    /// Per leg (left, right).
    pub knee: [[f64; 2]; 2],
    pub foot: [[f64; 2]; 2],
    pub thigh_com: [[f64; 2]; 2],
    pub shin_com: [[f64; 2]; 2],
}

/// Direction a torso-like segment extends along: `pitch` clockwise from
/// vertical, so positive pitch leans toward +x.
#[inline]
fn up(pitch: f64) -> [f64; 2] {
    [libm::sin(pitch), libm::cos(pitch)]
}

/// Direction a leg segment hangs along: `phi` counterclockwise from
/// straight down, so positive phi swings toward +x.
#[inline]
fn down(phi: f64) -> [f64; 2] {
    [libm::sin(phi), -libm::cos(phi)]
}

/// d[`down`]/dphi.
#[inline]
fn down_d(phi: f64) -> [f64; 2] {
    [libm::cos(phi), libm::sin(phi)]
}

/// Absolute leg segment angles (thigh, shin) for one side.
#[inline]
fn leg_angles(q: &[f64; DOF], side: usize) -> (f64, f64) {
    let hip_idx = JOINT_OFFSET + 2 * side;
    let phi_thigh = q[hip_idx] - q[2];
    (phi_thigh, phi_thigh + q[hip_idx + 1])
}

/// Absolute leg segment angular rates (thigh, shin) for one side.
#[inline]
fn leg_rates(qd: &[f64; DOF], side: usize) -> (f64, f64) {
    let hip_idx = JOINT_OFFSET + 2 * side;
    let w_thigh = qd[hip_idx] - qd[2];
    (w_thigh, w_thigh + qd[hip_idx + 1])
}

pub fn kinematics(model: &BipedModel, q: &[f64; DOF]) -> Kinematics {
    let pelvis = [q[0], q[1]];
    let ht = 0.5 * model.torso_length;
    let u = up(q[2]);
    let torso_com = [pelvis[0] + ht * u[0], pelvis[1] + ht * u[1]];
    let torso_top = [pelvis[0] + model.torso_length * u[0], pelvis[1] + model.torso_length * u[1]];

    let mut knee = [[0.0; 2]; 2];
    let mut foot = [[0.0; 2]; 2];
    let mut thigh_com = [[0.0; 2]; 2];
    let mut shin_com = [[0.0; 2]; 2];
    for side in 0..2 {
        let (phi_thigh, phi_shin) = leg_angles(q, side);
        let d1 = down(phi_thigh);
        let d2 = down(phi_shin);
        let lt = model.thigh_length;
        let ls = model.shin_length;
        knee[side] = [pelvis[0] + lt * d1[0], pelvis[1] + lt * d1[1]];
        thigh_com[side] = [pelvis[0] + 0.5 * lt * d1[0], pelvis[1] + 0.5 * lt * d1[1]];
        foot[side] = [knee[side][0] + ls * d2[0], knee[side][1] + ls * d2[1]];
        shin_com[side] = [knee[side][0] + 0.5 * ls * d2[0], knee[side][1] + 0.5 * ls * d2[1]];
    }
    Kinematics { pelvis, torso_com, torso_top, knee, foot, thigh_com, shin_com }
}

/// Heights of the (left, right) foot points above the ground plane.
pub fn foot_heights(model: &BipedModel, q: &[f64; DOF]) -> (f64, f64) {
    let k = kinematics(model, q);
    (k.foot[0][1], k.foot[1][1])
}

/// Position and velocity of one foot point (`side` 0 = left, 1 = right).
pub fn foot_state(
    model: &BipedModel,
    q: &[f64; DOF],
    qd: &[f64; DOF],
    side: usize,
) -> ([f64; 2], [f64; 2]) {
    let (jac, pos) = foot_jacobian(model, q, side);
    let mut vel = [0.0; 2];
    for k in 0..DOF {
        vel[0] += jac[0][k] * qd[k];
        vel[1] += jac[1][k] * qd[k];
    }
    (pos, vel)
}

/// 2x7 point jacobian of one foot plus its world position.
fn foot_jacobian(model: &BipedModel, q: &[f64; DOF], side: usize) -> ([[f64; DOF]; 2], [f64; 2]) {
    let hip_idx = JOINT_OFFSET + 2 * side;
    let (phi_thigh, phi_shin) = leg_angles(q, side);
    let lt = model.thigh_length;
    let ls = model.shin_length;
    let d1 = down(phi_thigh);
    let d2 = down(phi_shin);
    let d1d = down_d(phi_thigh);
    let d2d = down_d(phi_shin);
    let pos = [q[0] + lt * d1[0] + ls * d2[0], q[1] + lt * d1[1] + ls * d2[1]];
    let mut jac = [[0.0; DOF]; 2];
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    for row in 0..2 {
        let full = lt * d1d[row] + ls * d2d[row];
        // Absolute leg angles carry -pitch, so the pitch column is negated.
        jac[row][2] = -full;
        jac[row][hip_idx] = full;
        jac[row][hip_idx + 1] = ls * d2d[row];
    }
    (jac, pos)
}

/// PD torques for absolute joint position targets, clamped to the limits.
pub fn pd_torques(
    model: &BipedModel,
    q: &[f64; DOF],
    qd: &[f64; DOF],
    targets: &[f64; N_JOINTS],
) -> [f64; N_JOINTS] {
    let mut tau = [0.0; N_JOINTS];
    for j in 0..N_JOINTS {
        let pos = q[JOINT_OFFSET + j];
        let vel = qd[JOINT_OFFSET + j];
        let raw = model.kp[j] * (targets[j] - pos) - model.kd[j] * vel;
        tau[j] = raw.clamp(-model.torque_limit[j], model.torque_limit[j]);
    }
    tau
}

/// Clamp raw action values to the joint limit box.
pub fn clamp_targets(model: &BipedModel, action: &[f64; N_JOINTS]) -> [f64; N_JOINTS] {
    let mut out = [0.0; N_JOINTS];
    for j in 0..N_JOINTS {
        out[j] = action[j].clamp(model.joint_lower[j], model.joint_upper[j]);
    }
    out
}

/// One body's contribution to the assembled dynamics.
struct Body {
    mass: f64,
    inertia: f64,
    /// Point jacobian of the center of mass (2 x DOF).
    jv: [[f64; DOF]; 2],
    /// Angular jacobian: d(absolute CCW angle)/dq, constant entries.
    jw: [f64; DOF],
    /// Centripetal acceleration of the center of mass at the current rates.
    bias: [f64; 2],
}

fn accumulate_body(m: &mut Mat7, rhs: &mut Vec7, body: &Body, gravity: f64) {
    for r in 0..DOF {
        for c in r..DOF {
            let mut acc = body.mass
                * (body.jv[0][r] * body.jv[0][c] + body.jv[1][r] * body.jv[1][c]);
            if body.jw[r] != 0.0 && body.jw[c] != 0.0 {
                acc += body.inertia * body.jw[r] * body.jw[c];
            }
            m[(r, c)] += acc;
            if r != c {
                m[(c, r)] += acc;
            }
        }
    }
    // Gravity enters through the z-row of Jv; the centripetal bias moves to
    // the right-hand side with sign flipped.
    for k in 0..DOF {
        rhs[k] += body.jv[1][k] * (-body.mass * gravity);
        rhs[k] -= body.mass * (body.jv[0][k] * body.bias[0] + body.jv[1][k] * body.bias[1]);
    }
}

/// Contact force on one foot, if active: spring-damper normal (clamped to
/// push only) and a friction-limited tangential damper.
fn contact_force(model: &BipedModel, pos: &[f64; 2], vel: &[f64; 2]) -> Option<[f64; 2]> {
    let pen = -pos[1];
    if pen <= 0.0 {
        return None;
    }
    let normal = (model.contact_stiffness * pen - model.contact_damping * vel[1]).max(0.0);
    let cap = model.friction * normal;
    let tangent = -(model.contact_damping * vel[0]).clamp(-cap, cap);
    Some([tangent, normal])
}

/// Advance one integrator substep under fixed joint torques.
///
/// Returns a blowup error (leaving the state as written) if the new state
/// is non-finite or beyond plausibility bounds.
pub fn step_lowlevel(
    model: &BipedModel,
    state: &mut SimState,
    torques: &[f64; N_JOINTS],
) -> Result<(), SimError> {
    let q = &state.q;
    let qd = &state.qd;

    let mut m = Mat7::zeros();
    let mut rhs = Vec7::zeros();

    // Torso: extends up from the pelvis; CCW orientation angle is -pitch.
    {
        let ht = 0.5 * model.torso_length;
        let u = up(q[2]);
        let mut jv = [[0.0; DOF]; 2];
        jv[0][0] = 1.0;
        jv[1][1] = 1.0;
        // d/d pitch of ht*(sin, cos) = ht*(cos, -sin).
        jv[0][2] = ht * u[1];
        jv[1][2] = -ht * u[0];
        let w2 = qd[2] * qd[2];
        let mut jw = [0.0; DOF];
        jw[2] = -1.0;
        let body = Body {
            mass: model.torso_mass,
            inertia: model.torso_inertia,
            jv,
            jw,
            bias: [-ht * w2 * u[0], -ht * w2 * u[1]],
        };
        accumulate_body(&mut m, &mut rhs, &body, model.gravity);
    }

    // Legs: thigh and shin per side.
    for side in 0..2 {
        let hip_idx = JOINT_OFFSET + 2 * side;
        let knee_idx = hip_idx + 1;
        let (phi_thigh, phi_shin) = leg_angles(q, side);
        let (w_thigh, w_shin) = leg_rates(qd, side);
        let lt = model.thigh_length;
        let ls = model.shin_length;
        let d1 = down(phi_thigh);
        let d2 = down(phi_shin);
        let d1d = down_d(phi_thigh);
        let d2d = down_d(phi_shin);

        {
            let half = 0.5 * lt;
            let mut jv = [[0.0; DOF]; 2];
            jv[0][0] = 1.0;
            jv[1][1] = 1.0;
            for row in 0..2 {
                jv[row][2] = -half * d1d[row];
                jv[row][hip_idx] = half * d1d[row];
            }
            let w2 = w_thigh * w_thigh;
            let mut jw = [0.0; DOF];
            jw[2] = -1.0;
            jw[hip_idx] = 1.0;
            let body = Body {
                mass: model.thigh_mass,
                inertia: model.thigh_inertia,
                jv,
                jw,
                bias: [-half * w2 * d1[0], -half * w2 * d1[1]],
            };
            accumulate_body(&mut m, &mut rhs, &body, model.gravity);
        }
        {
            let half = 0.5 * ls;
            let mut jv = [[0.0; DOF]; 2];
            jv[0][0] = 1.0;
            jv[1][1] = 1.0;
            for row in 0..2 {
                let through_knee = lt * d1d[row] + half * d2d[row];
                jv[row][2] = -through_knee;
                jv[row][hip_idx] = through_knee;
                jv[row][knee_idx] = half * d2d[row];
            }
            let wt2 = w_thigh * w_thigh;
            let ws2 = w_shin * w_shin;
            let mut jw = [0.0; DOF];
            jw[2] = -1.0;
            jw[hip_idx] = 1.0;
            jw[knee_idx] = 1.0;
            let body = Body {
                mass: model.shin_mass,
                inertia: model.shin_inertia,
                jv,
                jw,
                bias: [
                    -(lt * wt2 * d1[0] + half * ws2 * d2[0]),
                    -(lt * wt2 * d1[1] + half * ws2 * d2[1]),
                ],
            };
            accumulate_body(&mut m, &mut rhs, &body, model.gravity);
        }
    }

    // Actuation: hinge coordinates take the motor torques directly.
    for j in 0..N_JOINTS {
        rhs[JOINT_OFFSET + j] += torques[j];
    }

    // Foot contacts.
    let mut contact = [false, false];
    for side in 0..2 {
        let (jac, pos) = foot_jacobian(model, q, side);
        let mut vel = [0.0; 2];
        for k in 0..DOF {
            vel[0] += jac[0][k] * qd[k];
            vel[1] += jac[1][k] * qd[k];
        }
        if let Some(force) = contact_force(model, &pos, &vel) {
            contact[side] = true;
            for k in 0..DOF {
                rhs[k] += jac[0][k] * force[0] + jac[1][k] * force[1];
            }
        }
    }

    let chol = match m.cholesky() {
        Some(c) => c,
        None => return Err(SimError::FactorizationFailed { substep: state.substeps_taken }),
    };
    let qdd = chol.solve(&rhs);

    let dt = model.sim_dt;
    for k in 0..DOF {
        state.qd[k] += dt * qdd[k];
        state.q[k] += dt * state.qd[k];
    }
    // Keep pitch in (-pi, pi] so observations stay bounded.
    if state.q[2] > core::f64::consts::PI || state.q[2] <= -core::f64::consts::PI {
        state.q[2] = wrap_angle(state.q[2]);
    }
    state.contact = contact;
    state.substeps_taken += 1;

    for k in 0..DOF {
        if !state.q[k].is_finite() || !state.qd[k].is_finite() {
            return Err(SimError::Blowup { substep: state.substeps_taken });
        }
    }
    if libm::fabs(state.q[0]) > MAX_COORD
        || libm::fabs(state.q[1]) > MAX_COORD
        || state.qd.iter().any(|v| libm::fabs(*v) > MAX_RATE)
    {
        return Err(SimError::Blowup { substep: state.substeps_taken });
    }
    Ok(())
}

fn wrap_angle(a: f64) -> f64 {
    let tau = core::f64::consts::TAU;
    let mut w = libm::fmod(a, tau);
    if w > core::f64::consts::PI {
        w -= tau;
    } else if w <= -core::f64::consts::PI {
        w += tau;
    }
    w
}

/// Advance one policy step: clamp the action to the joint limit box, then run
/// every substep with PD torques recomputed at each one.
///
/// Equivalent, bitwise, to calling [`clamp_targets`], then alternating
/// [`pd_torques`] / [`step_lowlevel`] for [`BipedModel::substeps`] rounds.
pub fn step_policy(
    model: &BipedModel,
    state: &mut SimState,
    action: &[f64; N_JOINTS],
) -> Result<(), SimError> {
    let targets = clamp_targets(model, action);
    for _ in 0..model.substeps() {
        let tau = pd_torques(model, &state.q, &state.qd, &targets);
        step_lowlevel(model, state, &tau)?;
    }
    Ok(())
}

/// Total linear momentum of the mechanism.
pub fn linear_momentum(model: &BipedModel, state: &SimState) -> [f64; 2] {
    let (_, vels) = body_com_states(model, &state.q, &state.qd);
    let masses = body_masses(model);
    let mut p = [0.0; 2];
    for i in 0..5 {
        p[0] += masses[i] * vels[i][0];
        p[1] += masses[i] * vels[i][1];
    }
    p
}

/// Kinetic plus gravitational potential energy.
pub fn mechanical_energy(model: &BipedModel, state: &SimState) -> f64 {
    let (coms, vels) = body_com_states(model, &state.q, &state.qd);
    let masses = body_masses(model);
    let inertias = body_inertias(model);
    let omegas = body_rates(&state.qd);
    let mut e = 0.0;
    for i in 0..5 {
        let v2 = vels[i][0] * vels[i][0] + vels[i][1] * vels[i][1];
        e += 0.5 * masses[i] * v2 + 0.5 * inertias[i] * omegas[i] * omegas[i];
        e += masses[i] * model.gravity * coms[i][1];
    }
    e
}

/// Angular momentum about the total center of mass (CCW positive).
pub fn angular_momentum_about_com(model: &BipedModel, state: &SimState) -> f64 {
    let (coms, vels) = body_com_states(model, &state.q, &state.qd);
    let masses = body_masses(model);
    let inertias = body_inertias(model);
    let omegas = body_rates(&state.qd);
    let total: f64 = masses.iter().sum();
    let mut com = [0.0; 2];
    let mut com_v = [0.0; 2];
    for i in 0..5 {
        com[0] += masses[i] * coms[i][0];
        com[1] += masses[i] * coms[i][1];
        com_v[0] += masses[i] * vels[i][0];
        com_v[1] += masses[i] * vels[i][1];
    }
    for a in com.iter_mut().chain(com_v.iter_mut()) {
        *a /= total;
    }
    let mut l = 0.0;
    for i in 0..5 {
        let rx = coms[i][0] - com[0];
        let rz = coms[i][1] - com[1];
        let vx = vels[i][0] - com_v[0];
        let vz = vels[i][1] - com_v[1];
        l += masses[i] * (rx * vz - rz * vx) + inertias[i] * omegas[i];
    }
    l
}

fn body_masses(model: &BipedModel) -> [f64; 5] {
    [model.torso_mass, model.thigh_mass, model.shin_mass, model.thigh_mass, model.shin_mass]
}

fn body_inertias(model: &BipedModel) -> [f64; 5] {
    [
        model.torso_inertia,
        model.thigh_inertia,
        model.shin_inertia,
        model.thigh_inertia,
        model.shin_inertia,
    ]
}

/// Absolute CCW angular rates in body order torso, thigh_l, shin_l, thigh_r,
/// shin_r.
fn body_rates(qd: &[f64; DOF]) -> [f64; 5] {
    [
        -qd[2],
        qd[3] - qd[2],
        qd[3] + qd[4] - qd[2],
        qd[5] - qd[2],
        qd[5] + qd[6] - qd[2],
    ]
}

/// Center-of-mass positions and velocities in the same body order.
fn body_com_states(
    model: &BipedModel,
    q: &[f64; DOF],
    qd: &[f64; DOF],
) -> ([[f64; 2]; 5], [[f64; 2]; 5]) {
    let k = kinematics(model, q);
    let coms = [k.torso_com, k.thigh_com[0], k.shin_com[0], k.thigh_com[1], k.shin_com[1]];
    let mut vels = [[0.0; 2]; 5];
    {
        let ht = 0.5 * model.torso_length;
        let u = up(q[2]);
        vels[0] = [qd[0] + ht * qd[2] * u[1], qd[1] - ht * qd[2] * u[0]];
    }
    for side in 0..2 {
        let (phi_thigh, phi_shin) = leg_angles(q, side);
        let (w_thigh, w_shin) = leg_rates(qd, side);
        let d1d = down_d(phi_thigh);
        let d2d = down_d(phi_shin);
        let lt = model.thigh_length;
        let ls = model.shin_length;
        vels[1 + 2 * side] = [
            qd[0] + 0.5 * lt * w_thigh * d1d[0],
            qd[1] + 0.5 * lt * w_thigh * d1d[1],
        ];
        vels[2 + 2 * side] = [
            qd[0] + lt * w_thigh * d1d[0] + 0.5 * ls * w_shin * d2d[0],
            qd[1] + lt * w_thigh * d1d[1] + 0.5 * ls * w_shin * d2d[1],
        ];
    }
    (coms, vels)
}
