use serde::{Deserialize, Serialize};

use super::{BypassCause, DeviceError, DeviceState, ModeState};
use crate::io::Violations;
use crate::phasor::Phasor;
use crate::time::SimTime;

/// Thresholds and timers of the OC and LOR bypass paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceProtectionSettings {
    pub i_oc_ka: f64,
    pub i_lor_ka: f64,
    /// Latency budget from threshold crossing to zero injection.
    pub t_bypass_ms: f64,
    pub t_oc_lockout_s: f64,
    pub t_lor_hold_s: f64,
    pub oc_enabled: bool,
    pub lor_enabled: bool,
    /// Dwell below the minimum injection current before dropping to monitoring.
    pub t_low_current_s: f64,
}

impl Default for DeviceProtectionSettings {
    fn default() -> Self {
        DeviceProtectionSettings {
            i_oc_ka: 3.8,
            i_lor_ka: 1.1414,
            t_bypass_ms: 1.0,
            t_oc_lockout_s: 30.0,
            t_lor_hold_s: 1.0,
            oc_enabled: true,
            lor_enabled: true,
            t_low_current_s: 0.05,
        }
    }
}

impl DeviceProtectionSettings {
    pub(crate) fn check_into(&self, v: &mut Violations, path: &str) {
        if !(self.i_lor_ka.is_finite() && self.i_lor_ka > 0.0) {
            v.push(format!("{path}.i_lor_ka"), "must be positive");
        }
        if !self.i_oc_ka.is_finite() || !(self.i_lor_ka < self.i_oc_ka) {
            v.push(
                format!("{path}.i_lor_ka"),
                format!("i_lor_ka ({}) must be below i_oc_ka ({})", self.i_lor_ka, self.i_oc_ka),
            );
        }
        if !(self.t_bypass_ms > 0.0 && self.t_bypass_ms <= 1.0) {
            v.push(format!("{path}.t_bypass_ms"), "must be in (0, 1]");
        }
        if !(self.t_oc_lockout_s >= 30.0 && self.t_oc_lockout_s.is_finite()) {
            v.push(format!("{path}.t_oc_lockout_s"), "must be at least 30");
        }
        if !(self.t_lor_hold_s > 0.0 && self.t_lor_hold_s.is_finite()) {
            v.push(format!("{path}.t_lor_hold_s"), "must be positive");
        }
        if !(self.t_low_current_s >= 0.0 && self.t_low_current_s.is_finite()) {
            v.push(format!("{path}.t_low_current_s"), "must be non-negative");
        }
    }
}

/// Inputs of one protection step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtectionInput {
    pub i_mag: f64,
    pub backup_lor: bool,
    pub ipb_cmd: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceEvent {
    OcBypassEnter,
    OcBypassExit,
    LorEnter,
    LorExit,
    MonitoringEnter,
    InjectionStart,
}

impl DeviceEvent {
    pub fn name(self) -> &'static str {
        match self {
            DeviceEvent::OcBypassEnter => "oc_bypass_enter",
            DeviceEvent::OcBypassExit => "oc_bypass_exit",
            DeviceEvent::LorEnter => "lor_enter",
            DeviceEvent::LorExit => "lor_exit",
            DeviceEvent::MonitoringEnter => "monitoring_enter",
            DeviceEvent::InjectionStart => "injection_start",
        }
    }
}

/// Events implied by a mode change. Derived from states alone so in-process
/// and remote devices log identically.
pub fn transition_events(old: &DeviceState, new: &DeviceState) -> Vec<DeviceEvent> {
    let (a, b) = (old.mode_state, new.mode_state);
    let mut out = Vec::new();
    if a == b {
        return out;
    }
    match a {
        ModeState::OcBypass => out.push(DeviceEvent::OcBypassExit),
        ModeState::LorBypass => out.push(DeviceEvent::LorExit),
        _ => {}
    }
    out.push(match b {
        ModeState::OcBypass => DeviceEvent::OcBypassEnter,
        ModeState::LorBypass => DeviceEvent::LorEnter,
        ModeState::Monitoring => DeviceEvent::MonitoringEnter,
        ModeState::Injection => DeviceEvent::InjectionStart,
    });
    out
}

fn after(t: SimTime, secs: f64) -> SimTime {
    t + SimTime::from_secs(secs)
}

/// Advances the bypass state machine by one step.
///
/// `ipb_cmd` and `backup_lor` are the commands computed on the previous step.
/// An interphase-only bypass carries no hold timer and ends as soon as the
/// command drops, so the three phases resume together.
pub fn step_protection(
    state: &DeviceState,
    input: &ProtectionInput,
    t_now: SimTime,
    settings: &DeviceProtectionSettings,
    i_min: f64,
) -> Result<(DeviceState, Vec<DeviceEvent>), DeviceError> {
    if let Some(last) = state.last_step {
        if t_now < last {
            return Err(DeviceError::NonMonotoneTime { last, now: t_now });
        }
    }
    let i = input.i_mag;
    let oc_trig = settings.oc_enabled && i > settings.i_oc_ka;
    let own_lor = settings.lor_enabled && (i > settings.i_lor_ka || input.backup_lor);
    let ipb = settings.lor_enabled && input.ipb_cmd;
    let hold_deadline = after(t_now, settings.t_lor_hold_s);

    let mut next = state.clone();
    next.last_step = Some(t_now);

    let enter_lor = |n: &mut DeviceState, own: bool| {
        n.mode_state = ModeState::LorBypass;
        n.vsl_closed = false;
        n.low_current_since = None;
        if own {
            n.bypass_cause = BypassCause::Own;
            n.lor_hold_deadline = Some(hold_deadline);
        } else {
            n.bypass_cause = BypassCause::Interphase;
            n.lor_hold_deadline = None;
        }
    };
    let resume = |n: &mut DeviceState| {
        n.lor_hold_deadline = None;
        n.lockout_deadline = None;
        n.bypass_cause = BypassCause::Own;
        n.low_current_since = None;
        if i >= i_min {
            n.mode_state = ModeState::Injection;
            n.vsl_closed = false;
        } else {
            n.mode_state = ModeState::Monitoring;
            n.vsl_closed = true;
        }
    };

    if oc_trig && state.mode_state != ModeState::OcBypass {
        next.mode_state = ModeState::OcBypass;
        next.vsl_closed = true;
        next.bypass_cause = BypassCause::Own;
        next.lockout_deadline = Some(after(t_now, settings.t_oc_lockout_s));
        next.lor_hold_deadline = None;
        next.low_current_since = None;
    } else {
        match state.mode_state {
            ModeState::OcBypass => {
                if i > settings.i_lor_ka {
                    next.lockout_deadline = Some(after(t_now, settings.t_oc_lockout_s));
                }
                let expired = next.lockout_deadline.is_none_or(|d| t_now >= d);
                if expired {
                    next.lockout_deadline = None;
                    if own_lor {
                        enter_lor(&mut next, true);
                    } else if ipb {
                        enter_lor(&mut next, false);
                    } else {
                        resume(&mut next);
                    }
                }
            }
            ModeState::LorBypass => {
                if own_lor {
                    next.bypass_cause = BypassCause::Own;
                    next.lor_hold_deadline = Some(hold_deadline);
                } else {
                    let held = next.lor_hold_deadline.is_some_and(|d| t_now < d);
                    if !held {
                        if ipb {
                            enter_lor(&mut next, false);
                        } else {
                            resume(&mut next);
                        }
                    }
                }
            }
            ModeState::Injection => {
                if own_lor {
                    enter_lor(&mut next, true);
                } else if ipb {
                    enter_lor(&mut next, false);
                } else if i < i_min {
                    let since = *next.low_current_since.get_or_insert(t_now);
                    if (t_now - since).as_secs() >= settings.t_low_current_s {
                        next.mode_state = ModeState::Monitoring;
                        next.vsl_closed = true;
                        next.low_current_since = None;
                    }
                } else {
                    next.low_current_since = None;
                }
            }
            ModeState::Monitoring => {
                if i >= i_min {
                    if own_lor {
                        enter_lor(&mut next, true);
                    } else if ipb {
                        enter_lor(&mut next, false);
                    } else {
                        resume(&mut next);
                    }
                }
            }
        }
    }
    if next.mode_state != ModeState::Injection {
        next.last_injection = Phasor::new(0.0, 0.0);
    }
    let events = transition_events(state, &next);
    Ok((next, events))
}
