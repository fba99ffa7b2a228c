//! Single-phase series compensator.
//!
//! A device injects a series voltage in quadrature with its line current and
//! protects itself with two bypass paths: a hardware overcurrent (OC) bypass
//! that closes the vacuum switch links and locks out for at least 30 s, and a
//! low-overcurrent ride-through (LOR) bypass that keeps the links open and
//! resumes injection after a short hold.

mod injection;
mod protection;
mod rating;
mod tracker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use injection::{capability_limit, compute_injection, quadrature_error, InjectionCommand, InjectionMode, Polarity};
pub use protection::{step_protection, transition_events, DeviceEvent, DeviceProtectionSettings, ProtectionInput};
pub use rating::DeviceRating;
pub use tracker::{update_angle_tracker, AngleTrackerSettings};

use crate::phasor::{Phase, Phasor};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("time went backwards: {now} after {last}")]
    NonMonotoneTime { last: SimTime, now: SimTime },
    #[error("injection requested while device is in {0:?}")]
    NotInjecting(ModeState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeState {
    Monitoring,
    Injection,
    LorBypass,
    OcBypass,
}

impl ModeState {
    pub const ALL: [ModeState; 4] = [
        ModeState::Monitoring,
        ModeState::Injection,
        ModeState::LorBypass,
        ModeState::OcBypass,
    ];

    /// Numeric code used in traces and on the co-simulation link.
    pub fn code(self) -> u8 {
        match self {
            ModeState::Monitoring => 0,
            ModeState::Injection => 1,
            ModeState::LorBypass => 2,
            ModeState::OcBypass => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<ModeState> {
        ModeState::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn is_bypass(self) -> bool {
        matches!(self, ModeState::LorBypass | ModeState::OcBypass)
    }
}

/// Why a device is bypassed: its own measurement or relay signal, or only
/// an interphase-balancing command from another phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BypassCause {
    #[default]
    Own,
    Interphase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub phase: Phase,
    pub mode_state: ModeState,
    pub vsl_closed: bool,
    pub lockout_deadline: Option<SimTime>,
    pub lor_hold_deadline: Option<SimTime>,
    pub bypass_cause: BypassCause,
    pub angle_tracker_rad: f64,
    /// The tracker snaps to the first valid current angle, then follows with lag.
    pub tracker_locked: bool,
    pub last_injection: Phasor,
    pub low_current_since: Option<SimTime>,
    pub last_step: Option<SimTime>,
}

impl DeviceState {
    /// Devices start bypassed through their normally-closed links, monitoring the line.
    pub fn new(phase: Phase) -> Self {
        DeviceState {
            phase,
            mode_state: ModeState::Monitoring,
            vsl_closed: true,
            lockout_deadline: None,
            lor_hold_deadline: None,
            bypass_cause: BypassCause::Own,
            angle_tracker_rad: 0.0,
            tracker_locked: false,
            last_injection: Phasor::new(0.0, 0.0),
            low_current_since: None,
            last_step: None,
        }
    }

    /// Bypassed on account of its own trigger (not just an interphase command).
    pub fn self_bypassed(&self) -> bool {
        self.mode_state.is_bypass() && self.bypass_cause == BypassCause::Own
    }
}

/// Static parameters of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub rating: DeviceRating,
    pub protection: DeviceProtectionSettings,
    pub tracker: AngleTrackerSettings,
}

/// Inputs for one device step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceInput {
    pub i_line: Phasor,
    pub backup_lor: bool,
    pub ipb_cmd: bool,
}

/// One full device step: tracker, protection state machine, then the
/// injection for the next electrical step. Shared by in-process models and
/// the out-of-process controller so both produce identical results.
pub fn device_step(
    state: &DeviceState,
    params: &DeviceParams,
    cmd: &InjectionCommand,
    input: &DeviceInput,
    t_now: SimTime,
    dt_s: f64,
) -> Result<(DeviceState, Vec<DeviceEvent>), DeviceError> {
    let i_min = params.rating.i_min_inject_ka;
    let tracked = update_angle_tracker(state, input.i_line, dt_s, &params.tracker, i_min);
    let prot_in = ProtectionInput {
        i_mag: input.i_line.norm(),
        backup_lor: input.backup_lor,
        ipb_cmd: input.ipb_cmd,
    };
    let (mut next, events) = step_protection(&tracked, &prot_in, t_now, &params.protection, i_min)?;
    next.last_injection = if next.mode_state == ModeState::Injection {
        compute_injection(cmd, input.i_line, &next, &params.rating)?
    } else {
        Phasor::new(0.0, 0.0)
    };
    Ok((next, events))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_device_is_monitoring_with_links_closed() {
        let s = DeviceState::new(Phase::B);
        assert_eq!(s.mode_state, ModeState::Monitoring);
        assert!(s.vsl_closed);
        assert_eq!(s.last_injection, Phasor::new(0.0, 0.0));
    }

    #[test]
    fn codes_round_trip() {
        for m in ModeState::ALL {
            assert_eq!(ModeState::from_code(m.code()), Some(m));
        }
        assert_eq!(ModeState::from_code(9), None);
    }
}
