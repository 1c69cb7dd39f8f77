//! Open-loop sine-wave foot-height references.
//!
//! A gait is four numbers: swing amplitude `h`, ground-clearance offset `dh`,
//! period `T`, and initial phase `phi0`. Each leg's reference height is the
//! positive part of a shifted sine, with the right leg half a period out of
//! phase with the left:
//!
//! ```text
//! left(t)  = max(0, h * sin(2*pi*t/T + phi0) - dh)
//! right(t) = max(0, h * sin(2*pi*t/T + phi0 + pi) - dh)
//! ```
//!
//! Subtracting `dh` before the clamp carves a double-support window around
//! every zero crossing: both references sit at exactly zero for a fraction
//! `2*asin(dh/h)/pi` of the period, split across the two transitions.

use alloc::format;
use alloc::string::String;
use core::f64::consts::{PI, TAU};

use crate::POLICY_DT;

/// Relative slack when checking that the period lands on the policy-step grid
/// and that a query time lands on a policy step.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum GaitError {
    /// Swing amplitude must be strictly positive.
    NonPositiveAmplitude(f64),
    /// Clearance offset must satisfy `0 <= dh < h`.
    ClearanceOutOfRange { h: f64, dh: f64 },
    /// Period must be a positive integer multiple of the policy step.
    BadPeriod(f64),
    /// Initial phase must be one of the two step-start phases, 0 or pi.
    BadInitialPhase(f64),
}

impl core::fmt::Display for GaitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GaitError::NonPositiveAmplitude(h) => {
                write!(f, "swing amplitude must be > 0, got {h}")
            }
            GaitError::ClearanceOutOfRange { h, dh } => {
                write!(f, "clearance offset must satisfy 0 <= dh < h, got dh={dh} with h={h}")
            }
            GaitError::BadPeriod(t) => {
                write!(f, "period must be a positive integer multiple of {POLICY_DT} s, got {t}")
            }
            GaitError::BadInitialPhase(p) => {
                write!(f, "initial phase must be 0 or pi, got {p}")
            }
        }
    }
}

impl core::error::Error for GaitError {}

/// Sine/cosine pair of the current gait phase angle. Feeding both components
/// to the policy keeps the phase input continuous across the period wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseVector {
    pub sin: f64,
    pub cos: f64,
}

/// Reference foot heights for the two legs, metres above flat ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePair {
    pub left: f64,
    pub right: f64,
}

/// A validated gait description. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSpec {
    h: f64,
    dh: f64,
    period: f64,
    phi0: f64,
    steps_per_period: u32,
}

impl GaitSpec {
    /// Validates and builds a spec. The period must be a positive integer
    /// multiple of the policy step so that phase advances land exactly on
    /// the same grid every period.
    pub fn new(h: f64, dh: f64, period: f64, phi0: f64) -> Result<Self, GaitError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(GaitError::NonPositiveAmplitude(h));
        }
        if !(dh >= 0.0 && dh < h) {
            return Err(GaitError::ClearanceOutOfRange { h, dh });
        }
        let steps = steps_per_period(period).ok_or(GaitError::BadPeriod(period))?;
        if phi0 != 0.0 && phi0 != PI {
            return Err(GaitError::BadInitialPhase(phi0));
        }
        Ok(GaitSpec { h, dh, period, phi0, steps_per_period: steps })
    }

    /// Builds a spec without any validation. Intended for degenerate probe
    /// configurations (e.g. `dh = h`, which pins both references to zero for
    /// reward-floor calibration); everything else should go through `new`.
    pub fn new_unchecked(h: f64, dh: f64, period: f64, phi0: f64) -> Self {
        let steps = steps_per_period(period).unwrap_or(1);
        GaitSpec { h, dh, period, phi0, steps_per_period: steps }
    }

    pub fn amplitude(&self) -> f64 {
        self.h
    }

    pub fn clearance(&self) -> f64 {
        self.dh
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn initial_phase(&self) -> f64 {
        self.phi0
    }

    /// Policy steps per gait period.
    pub fn steps_per_period(&self) -> u32 {
        self.steps_per_period
    }

    /// Peak reference height, `h - dh`.
    pub fn peak(&self) -> f64 {
        self.h - self.dh
    }

    /// Returns a copy with a different initial phase (0 or pi). Episode
    /// resets use this to re-draw which leg swings first.
    pub fn with_initial_phase(&self, phi0: f64) -> Result<Self, GaitError> {
        if phi0 != 0.0 && phi0 != PI {
            return Err(GaitError::BadInitialPhase(phi0));
        }
        let mut spec = self.clone();
        spec.phi0 = phi0;
        Ok(spec)
    }

    /// Phase vector after `k` whole policy steps. Computed from
    /// `k mod steps_per_period`, so it is exactly periodic: step `k + n`
    /// reproduces step `k` bit for bit.
    pub fn phase_at_step(&self, k: u64) -> PhaseVector {
        let idx = (k % self.steps_per_period as u64) as f64;
        let angle = TAU * idx / self.steps_per_period as f64 + self.phi0;
        PhaseVector { sin: libm::sin(angle), cos: libm::cos(angle) }
    }

    /// Phase vector at time `t >= 0` seconds. Times on the policy-step grid
    /// are routed through [`phase_at_step`](Self::phase_at_step) so that the
    /// exact-periodicity guarantee carries over; off-grid times reduce the
    /// angle modulo one period before the trig.
    pub fn phase(&self, t: f64) -> PhaseVector {
        let steps = t / POLICY_DT;
        let k = libm::round(steps);
        if k >= 0.0 && libm::fabs(steps - k) <= GRID_TOL * libm::fabs(steps).max(1.0) {
            return self.phase_at_step(k as u64);
        }
        let cycles = t / self.period;
        let frac = cycles - libm::floor(cycles);
        let angle = TAU * frac + self.phi0;
        PhaseVector { sin: libm::sin(angle), cos: libm::cos(angle) }
    }

    /// Reference heights after `k` whole policy steps.
    pub fn references_at_step(&self, k: u64) -> ReferencePair {
        self.pair_from_sin(self.phase_at_step(k).sin)
    }

    /// Reference heights at time `t >= 0` seconds.
    pub fn reference_heights(&self, t: f64) -> ReferencePair {
        self.pair_from_sin(self.phase(t).sin)
    }

    /// Fraction of the period during which both references are zero,
    /// `2*asin(dh/h)/pi`. Zero clearance gives zero double support.
    pub fn double_support_fraction(&self) -> f64 {
        2.0 * libm::asin(self.dh / self.h) / PI
    }

    fn pair_from_sin(&self, s: f64) -> ReferencePair {
        // sin(angle + pi) == -sin(angle), so the right leg reuses the
        // left leg's sine with flipped sign.
        ReferencePair {
            left: (self.h * s - self.dh).max(0.0),
            right: (self.h * -s - self.dh).max(0.0),
        }
    }
}

/// Human-readable one-line summary, used by config snapshots and reports.
impl core::fmt::Display for GaitSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let phi = if self.phi0 == 0.0 { String::from("0") } else { format!("{}", self.phi0) };
        write!(
            f,
            "h={} dh={} T={} phi0={} ({} steps/period)",
            self.h, self.dh, self.period, phi, self.steps_per_period
        )
    }
}

fn steps_per_period(period: f64) -> Option<u32> {
    if !(period > 0.0) || !period.is_finite() {
        return None;
    }
    let steps = period / POLICY_DT;
    let rounded = libm::round(steps);
    if rounded < 1.0 || rounded > u32::MAX as f64 {
        return None;
    }
    if libm::fabs(steps - rounded) > GRID_TOL * steps.max(1.0) {
        return None;
    }
    Some(rounded as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn baseline() -> GaitSpec {
        GaitSpec::new(0.15, 0.03, 0.84, 0.0).unwrap()
    }

    /// Brute-force reference oracle: straight evaluation of the defining
    /// formula, no reuse of the production sine-flip shortcut.
    fn oracle_pair(h: f64, dh: f64, period: f64, phi0: f64, t: f64) -> ReferencePair {
        let angle = TAU * t / period + phi0;
        ReferencePair {
            left: (h * libm::sin(angle) - dh).max(0.0),
            right: (h * libm::sin(angle + PI) - dh).max(0.0),
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            GaitSpec::new(0.0, 0.0, 0.84, 0.0),
            Err(GaitError::NonPositiveAmplitude(_))
        ));
        assert!(matches!(
            GaitSpec::new(-0.1, 0.0, 0.84, 0.0),
            Err(GaitError::NonPositiveAmplitude(_))
        ));
        assert!(matches!(
            GaitSpec::new(0.15, 0.15, 0.84, 0.0),
            Err(GaitError::ClearanceOutOfRange { .. })
        ));
        assert!(matches!(
            GaitSpec::new(0.15, 0.16, 0.84, 0.0),
            Err(GaitError::ClearanceOutOfRange { .. })
        ));
        assert!(matches!(
            GaitSpec::new(0.15, -0.01, 0.84, 0.0),
            Err(GaitError::ClearanceOutOfRange { .. })
        ));
        // 0.85 s is not a whole number of 0.03 s policy steps.
        assert!(matches!(GaitSpec::new(0.15, 0.03, 0.85, 0.0), Err(GaitError::BadPeriod(_))));
        assert!(matches!(GaitSpec::new(0.15, 0.03, 0.0, 0.0), Err(GaitError::BadPeriod(_))));
        assert!(matches!(GaitSpec::new(0.15, 0.03, -0.84, 0.0), Err(GaitError::BadPeriod(_))));
        assert!(matches!(
            GaitSpec::new(0.15, 0.03, 0.84, 1.0),
            Err(GaitError::BadInitialPhase(_))
        ));
    }

    #[test]
    fn accepts_baseline_and_reports_grid() {
        let spec = baseline();
        assert_eq!(spec.steps_per_period(), 28);
        assert_abs_diff_eq!(spec.peak(), 0.12, epsilon = 1e-15);
        let spec = GaitSpec::new(0.25, 0.05, 0.72, PI).unwrap();
        assert_eq!(spec.steps_per_period(), 24);
    }

    #[test]
    fn phase_has_unit_norm() {
        let spec = baseline();
        for k in 0..200u64 {
            let p = spec.phase_at_step(k);
            assert_abs_diff_eq!(p.sin * p.sin + p.cos * p.cos, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_known_points() {
        let spec = baseline();
        let p0 = spec.phase(0.0);
        assert_abs_diff_eq!(p0.sin, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p0.cos, 1.0, epsilon = 1e-15);
        // Quarter period: 7 steps of the 28-step grid.
        let pq = spec.phase(7.0 * POLICY_DT);
        assert_abs_diff_eq!(pq.sin, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pq.cos, 0.0, epsilon = 1e-12);
        // phi0 = pi flips the sign of the sine.
        let flipped = spec.with_initial_phase(PI).unwrap();
        let pf = flipped.phase(7.0 * POLICY_DT);
        assert_abs_diff_eq!(pf.sin, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn phase_is_exactly_periodic_on_grid() {
        let spec = baseline();
        for k in 0..84u64 {
            let t = k as f64 * POLICY_DT;
            let a = spec.phase(t);
            let b = spec.phase(t + spec.period());
            assert!(a.sin.to_bits() == b.sin.to_bits() && a.cos.to_bits() == b.cos.to_bits());
            let c = spec.phase_at_step(k);
            let d = spec.phase_at_step(k + 28);
            assert!(c.sin.to_bits() == d.sin.to_bits() && c.cos.to_bits() == d.cos.to_bits());
        }
    }

    #[test]
    fn reference_peak_and_double_support_instants() {
        let spec = baseline();
        // Peak of the left swing at a quarter period.
        let peak = spec.reference_heights(0.25 * spec.period());
        assert_abs_diff_eq!(peak.left, 0.12, epsilon = 1e-12);
        assert_eq!(peak.right, 0.0);
        // At t = 0 the sine is zero, below the clearance offset: both legs down.
        let down = spec.reference_heights(0.0);
        assert_eq!(down.left, 0.0);
        assert_eq!(down.right, 0.0);
    }

    #[test]
    fn reference_matches_oracle_at_frozen_point() {
        // Oracle value for h=0.15, dh=0.03, phi0=0 at t = 0.37*T, computed
        // with 30-digit arithmetic: 0.15*sin(2*pi*0.37) - 0.03.
        let spec = baseline();
        let t = 0.37 * spec.period();
        let pair = spec.reference_heights(t);
        assert_abs_diff_eq!(pair.left, 0.079345294113211728, epsilon = 1e-12);
        assert_eq!(pair.right, 0.0);
    }

    #[test]
    fn double_support_fraction_frozen_values() {
        // 2*asin(r)/pi at r = 0.2 and 0.3, computed with 30-digit arithmetic.
        let spec = baseline(); // dh/h = 0.2
        assert_abs_diff_eq!(spec.double_support_fraction(), 0.12818843369794986, epsilon = 1e-12);
        let spec = GaitSpec::new(0.15, 0.045, 0.84, 0.0).unwrap(); // dh/h = 0.3
        assert_abs_diff_eq!(spec.double_support_fraction(), 0.19397336804135658, epsilon = 1e-12);
        let spec = GaitSpec::new(0.15, 0.0, 0.84, 0.0).unwrap();
        assert_eq!(spec.double_support_fraction(), 0.0);
    }

    #[test]
    fn degenerate_probe_spec_pins_references_to_zero() {
        let spec = GaitSpec::new_unchecked(0.15, 0.15, 0.84, 0.0);
        for k in 0..56u64 {
            let pair = spec.references_at_step(k);
            assert_eq!(pair.left, 0.0);
            assert_eq!(pair.right, 0.0);
        }
    }

    prop_compose! {
        fn arb_spec()(
            h in 0.05f64..0.3,
            ratio in 0.0f64..0.9,
            steps in 10u32..50,
            flip in proptest::bool::ANY,
        ) -> GaitSpec {
            let phi0 = if flip { PI } else { 0.0 };
            GaitSpec::new(h, ratio * h, steps as f64 * POLICY_DT, phi0).unwrap()
        }
    }

    proptest! {
        #[test]
        fn references_never_overlap_and_stay_in_range(spec in arb_spec(), t in 0.0f64..20.0) {
            let pair = spec.reference_heights(t);
            prop_assert!(pair.left >= 0.0 && pair.right >= 0.0);
            prop_assert!(pair.left <= spec.peak() + 1e-12);
            prop_assert!(pair.right <= spec.peak() + 1e-12);
            // Swing phases alternate: the legs are never both off the ground.
            prop_assert!(!(pair.left > 0.0 && pair.right > 0.0));
        }

        #[test]
        fn references_match_bruteforce_oracle(spec in arb_spec(), t in 0.0f64..20.0) {
            let got = spec.reference_heights(t);
            let want = oracle_pair(
                spec.amplitude(), spec.clearance(), spec.period(), spec.initial_phase(), t,
            );
            prop_assert!((got.left - want.left).abs() < 1e-9);
            prop_assert!((got.right - want.right).abs() < 1e-9);
        }

        #[test]
        fn half_period_swaps_legs(spec in arb_spec(), k in 0u64..200) {
            let n = spec.steps_per_period() as u64;
            prop_assume!(n % 2 == 0);
            let a = spec.references_at_step(k);
            let b = spec.references_at_step(k + n / 2);
            prop_assert!((a.left - b.right).abs() < 1e-12);
            prop_assert!((a.right - b.left).abs() < 1e-12);
        }

        #[test]
        fn measured_double_support_matches_formula(spec in arb_spec()) {
            // Midpoint-rule occupancy measurement over one period. Each of
            // the two double-support intervals can miscount by one grid
            // cell at its boundary, so the total is good to two cells.
            let n = 10_000usize;
            let mut hits = 0usize;
            for i in 0..n {
                let t = (i as f64 + 0.5) * spec.period() / n as f64;
                let pair = spec.reference_heights(t);
                if pair.left == 0.0 && pair.right == 0.0 {
                    hits += 1;
                }
            }
            let measured = hits as f64 / n as f64;
            let predicted = spec.double_support_fraction();
            prop_assert!((measured - predicted).abs() <= 2.0 / n as f64 + 1e-12);
        }
    }
}
