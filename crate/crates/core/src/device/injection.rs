use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DeviceError, DeviceRating, DeviceState, ModeState};
use crate::io::Violations;
use crate::phasor::{wrap_angle, Phasor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    FixedReactance,
    FixedVoltage,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Inductive,
    Capacitive,
}

/// Set-point shared by every device of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionCommand {
    pub mode: InjectionMode,
    /// Ohms per device; positive is inductive. Used in `fixed_reactance` mode.
    #[serde(default)]
    pub x_set_ohm: f64,
    /// kV magnitude per device. Used in `fixed_voltage` mode.
    #[serde(default)]
    pub v_set_kv: f64,
    #[serde(default)]
    pub polarity: Polarity,
}

impl InjectionCommand {
    pub fn fixed_reactance(x_set_ohm: f64) -> Self {
        InjectionCommand {
            mode: InjectionMode::FixedReactance,
            x_set_ohm,
            v_set_kv: 0.0,
            polarity: Polarity::Inductive,
        }
    }

    pub fn fixed_voltage(v_set_kv: f64, polarity: Polarity) -> Self {
        InjectionCommand {
            mode: InjectionMode::FixedVoltage,
            x_set_ohm: 0.0,
            v_set_kv,
            polarity,
        }
    }

    pub fn off() -> Self {
        InjectionCommand {
            mode: InjectionMode::Off,
            x_set_ohm: 0.0,
            v_set_kv: 0.0,
            polarity: Polarity::Inductive,
        }
    }

    /// +1 for inductive (voltage leads current), -1 for capacitive, 0 when
    /// the command injects nothing.
    pub fn quadrature_sign(&self) -> f64 {
        match self.mode {
            InjectionMode::FixedReactance if self.x_set_ohm > 0.0 => 1.0,
            InjectionMode::FixedReactance if self.x_set_ohm < 0.0 => -1.0,
            InjectionMode::FixedVoltage => match self.polarity {
                Polarity::Inductive => 1.0,
                Polarity::Capacitive => -1.0,
            },
            _ => 0.0,
        }
    }

    pub(crate) fn check_into(&self, v: &mut Violations, path: &str) {
        if !self.x_set_ohm.is_finite() {
            v.push(format!("{path}.x_set_ohm"), "must be finite");
        }
        if !(self.v_set_kv.is_finite() && self.v_set_kv >= 0.0) {
            v.push(format!("{path}.v_set_kv"), "must be finite and non-negative");
        }
    }
}

/// Flat-then-hyperbolic operating range: constant voltage up to rated
/// current, constant MVA above it, nothing below the minimum current.
pub fn capability_limit(rating: &DeviceRating, i_mag: f64) -> f64 {
    if !(i_mag >= rating.i_min_inject_ka) {
        0.0
    } else if i_mag <= rating.rated_current_ka {
        rating.v_cap_kv()
    } else {
        rating.total_mvar() / i_mag
    }
}

/// Series voltage (drop convention) for a device in `Injection`.
///
/// Fixed reactance follows the sampled current phasor directly; fixed voltage
/// places `v_set` at +-90 degrees from the tracked angle. Both are clamped to
/// [`capability_limit`] without changing the angle.
pub fn compute_injection(
    cmd: &InjectionCommand,
    i_line: Phasor,
    state: &DeviceState,
    rating: &DeviceRating,
) -> Result<Phasor, DeviceError> {
    if state.mode_state != ModeState::Injection {
        return Err(DeviceError::NotInjecting(state.mode_state));
    }
    let raw = match cmd.mode {
        InjectionMode::Off => return Ok(Complex64::new(0.0, 0.0)),
        InjectionMode::FixedReactance => Complex64::new(0.0, cmd.x_set_ohm) * i_line,
        InjectionMode::FixedVoltage => {
            let shift = match cmd.polarity {
                Polarity::Inductive => FRAC_PI_2,
                Polarity::Capacitive => -FRAC_PI_2,
            };
            Complex64::from_polar(cmd.v_set_kv, state.angle_tracker_rad + shift)
        }
    };
    let limit = capability_limit(rating, i_line.norm());
    let mag = raw.norm();
    if mag > limit {
        if limit == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(raw * (limit / mag))
    } else {
        Ok(raw)
    }
}

/// Deviation (rad, non-negative) of the injection angle from ideal quadrature
/// with the line current, for a command with the given sign.
pub fn quadrature_error(v_inj: Phasor, i_line: Phasor, sign: f64) -> f64 {
    wrap_angle(v_inj.arg() - i_line.arg() - sign * FRAC_PI_2).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::{polar_deg, Phase};

    fn injecting() -> DeviceState {
        let mut s = DeviceState::new(Phase::A);
        s.mode_state = ModeState::Injection;
        s.vsl_closed = false;
        s
    }

    #[test]
    fn fixed_reactance_hand_value() {
        // 12 ohm x 0.7 kA at -30 deg -> 8.4 kV at +60 deg
        let rating = DeviceRating {
            n_converters: 100,
            ..DeviceRating::default()
        };
        let v = compute_injection(
            &InjectionCommand::fixed_reactance(12.0),
            polar_deg(0.7, -30.0),
            &injecting(),
            &rating,
        )
        .unwrap();
        assert!((v.norm() - 8.4).abs() < 1e-12);
        assert!((v.arg().to_degrees() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_reactance_zero_current_gives_zero() {
        let v = compute_injection(
            &InjectionCommand::fixed_reactance(12.0),
            Complex64::new(0.0, 0.0),
            &injecting(),
            &DeviceRating::default(),
        )
        .unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn fixed_voltage_is_in_exact_quadrature_with_tracked_angle() {
        let i = polar_deg(0.6, 25.0);
        let mut s = injecting();
        s.angle_tracker_rad = i.arg();
        let v = compute_injection(
            &InjectionCommand::fixed_voltage(5.0, Polarity::Inductive),
            i,
            &s,
            &DeviceRating::default(),
        )
        .unwrap();
        assert!((v.norm() - 5.0).abs() < 1e-12);
        assert!(quadrature_error(v, i, 1.0) < 1e-12);
        let vc = compute_injection(
            &InjectionCommand::fixed_voltage(5.0, Polarity::Capacitive),
            i,
            &s,
            &DeviceRating::default(),
        )
        .unwrap();
        assert!(quadrature_error(vc, i, -1.0) < 1e-12);
    }

    #[test]
    fn capability_curve_points() {
        let r = DeviceRating::default();
        assert_eq!(capability_limit(&r, 2.0), 5.0);
        assert_eq!(capability_limit(&r, 0.0), 0.0);
        assert_eq!(capability_limit(&r, 1.0), r.v_cap_kv());
        assert_eq!(capability_limit(&r, 0.5), 10.0);
        assert_eq!(capability_limit(&r, 0.049), 0.0);
    }

    #[test]
    fn clamp_keeps_angle() {
        let i = polar_deg(0.9, 10.0);
        let v = compute_injection(
            &InjectionCommand::fixed_reactance(30.0),
            i,
            &injecting(),
            &DeviceRating::default(),
        )
        .unwrap();
        assert!((v.norm() - 10.0).abs() < 1e-12);
        assert!(quadrature_error(v, i, 1.0) < 1e-12);
    }

    #[test]
    fn injection_outside_injection_state_is_an_error() {
        let s = DeviceState::new(Phase::A);
        let err = compute_injection(
            &InjectionCommand::fixed_reactance(1.0),
            polar_deg(0.5, 0.0),
            &s,
            &DeviceRating::default(),
        );
        assert_eq!(err, Err(DeviceError::NotInjecting(ModeState::Monitoring)));
    }
}
