use serde::{Deserialize, Serialize};

use super::DeviceState;
use crate::phasor::{wrap_angle, Phasor};

/// First-order line-current angle tracker (PLL surrogate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleTrackerSettings {
    pub tau_s: f64,
}

impl Default for AngleTrackerSettings {
    fn default() -> Self {
        AngleTrackerSettings { tau_s: 0.02 }
    }
}

/// Moves the tracked angle toward `angle(i_line)` by `dt / tau` of the wrapped
/// error. Holds below `i_min_ka`; snaps on the first valid sample.
pub fn update_angle_tracker(
    state: &DeviceState,
    i_line: Phasor,
    dt_s: f64,
    settings: &AngleTrackerSettings,
    i_min_ka: f64,
) -> DeviceState {
    let mut next = state.clone();
    if !(i_line.norm() >= i_min_ka) {
        return next;
    }
    let theta = i_line.arg();
    if !state.tracker_locked {
        next.angle_tracker_rad = theta;
        next.tracker_locked = true;
        return next;
    }
    let gain = (dt_s / settings.tau_s).min(1.0);
    next.angle_tracker_rad = wrap_angle(state.angle_tracker_rad + gain * wrap_angle(theta - state.angle_tracker_rad));
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::{polar_deg, Phase};
    use num_complex::Complex64;

    fn locked(theta: f64) -> DeviceState {
        let mut s = DeviceState::new(Phase::A);
        s.tracker_locked = true;
        s.angle_tracker_rad = theta;
        s
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let i = polar_deg(0.8, 40.0);
        let s = locked(i.arg());
        let n = update_angle_tracker(&s, i, 0.001, &AngleTrackerSettings { tau_s: 0.1 }, 0.05);
        assert_eq!(n.angle_tracker_rad, s.angle_tracker_rad);
    }

    #[test]
    fn single_lag_step_hand_value() {
        let i = Complex64::from_polar(1.0, 0.5);
        let n = update_angle_tracker(&locked(0.0), i, 0.001, &AngleTrackerSettings { tau_s: 0.1 }, 0.05);
        assert!((n.angle_tracker_rad - 0.005).abs() < 1e-15);
    }

    #[test]
    fn converges_within_one_percent_after_five_tau() {
        let tau: f64 = 0.1;
        let dt = 0.00025;
        let target = 0.8;
        let i = Complex64::from_polar(1.0, target);
        let mut s = locked(0.0);
        let steps = (5.0 * tau / dt).round() as usize;
        for _ in 0..steps {
            s = update_angle_tracker(&s, i, dt, &AngleTrackerSettings { tau_s: tau }, 0.05);
        }
        // independent oracle: continuous first-order response exp(-5) < 1 %
        assert!(((target - s.angle_tracker_rad) / target).abs() < 0.01);
        assert!((target - s.angle_tracker_rad).abs() <= target * (-5.0f64).exp() * 1.01);
    }

    #[test]
    fn holds_below_minimum_current_and_wraps() {
        let s = locked(3.0);
        let n = update_angle_tracker(&s, polar_deg(0.01, 0.0), 0.001, &AngleTrackerSettings { tau_s: 0.01 }, 0.05);
        assert_eq!(n.angle_tracker_rad, 3.0);
        // target across the +-pi seam takes the short way round
        let n = update_angle_tracker(&s, Complex64::from_polar(1.0, -3.0), 0.001, &AngleTrackerSettings { tau_s: 0.01 }, 0.05);
        assert!(n.angle_tracker_rad > 3.0);
    }

    #[test]
    fn first_valid_sample_locks() {
        let s = DeviceState::new(Phase::C);
        let n = update_angle_tracker(&s, polar_deg(0.3, -70.0), 0.001, &AngleTrackerSettings { tau_s: 0.5 }, 0.05);
        assert!(n.tracker_locked);
        assert!((n.angle_tracker_rad.to_degrees() + 70.0).abs() < 1e-9);
    }
}
