//! Per-line three-phase groups of series devices.
//!
//! A deployment holds `devices_per_phase` modeled devices per phase, each
//! standing for `scale_factor` physical ones. It sums their series voltages,
//! keeps the phases balanced (IPB) and turns relay outputs into a three-phase
//! LOR command (backup LOR).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::device::{
    AngleTrackerSettings, DeviceParams, DeviceProtectionSettings, DeviceRating, DeviceState, InjectionCommand,
};
use crate::io::Violations;
use crate::phasor::{Phase, Phasor, ThreePhaseSet};
use crate::relay::RelaySettings;

/// A relay output by name, e.g. `("smgj_sm", "zone1_pickup")`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalRef {
    pub relay: String,
    pub signal: String,
}

impl SignalRef {
    pub fn new(relay: &str, signal: &str) -> Self {
        SignalRef {
            relay: relay.to_string(),
            signal: signal.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub id: String,
    pub line_id: String,
    pub devices_per_phase: u32,
    #[serde(default = "one")]
    pub scale_factor: f64,
    #[serde(default = "yes")]
    pub ipb_enabled: bool,
    #[serde(default = "yes")]
    pub backup_lor_enabled: bool,
    pub command: InjectionCommand,
    #[serde(default)]
    pub rating: DeviceRating,
    #[serde(default)]
    pub protection: DeviceProtectionSettings,
    #[serde(default)]
    pub tracker: AngleTrackerSettings,
    /// Backup-LOR conditions. Empty selects the default set: any zone pickup,
    /// trip or pole discrepancy on every relay of the line.
    #[serde(default)]
    pub backup_lor_signals: Vec<SignalRef>,
    /// Run the first device of each phase in an external controller process.
    #[serde(default)]
    pub remote: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

impl DeploymentConfig {
    pub fn physical_devices_per_phase(&self) -> f64 {
        self.devices_per_phase as f64 * self.scale_factor
    }

    pub fn device_params(&self) -> DeviceParams {
        DeviceParams {
            rating: self.rating.clone(),
            protection: self.protection.clone(),
            tracker: self.tracker,
        }
    }

    /// Conditions in force, resolving the empty list to the default set.
    pub fn backup_conditions(&self, relays: &[RelaySettings]) -> Vec<SignalRef> {
        if !self.backup_lor_signals.is_empty() {
            return self.backup_lor_signals.clone();
        }
        relays
            .iter()
            .filter(|r| r.line_id == self.line_id)
            .flat_map(|r| {
                ["any_pickup", "trip", "pole_discrepancy"]
                    .into_iter()
                    .map(|s| SignalRef::new(&r.id, s))
            })
            .collect()
    }

    pub(crate) fn check_into(&self, v: &mut Violations, path: &str, relays: &[RelaySettings]) {
        if self.devices_per_phase == 0 {
            v.push(format!("{path}.devices_per_phase"), "must be at least 1");
        }
        if !(self.scale_factor.is_finite() && self.scale_factor >= 1.0) {
            v.push(format!("{path}.scale_factor"), "must be at least 1");
        }
        self.command.check_into(v, &format!("{path}.command"));
        self.rating.check_into(v, &format!("{path}.rating"));
        self.protection.check_into(v, &format!("{path}.protection"));
        if !(self.tracker.tau_s.is_finite() && self.tracker.tau_s > 0.0) {
            v.push(format!("{path}.tracker.tau_s"), "must be positive");
        }
        for (k, s) in self.backup_lor_signals.iter().enumerate() {
            let p = format!("{path}.backup_lor_signals[{k}]");
            match relays.iter().find(|r| r.id == s.relay) {
                None => v.push(format!("{p}.relay"), format!("unknown relay '{}'", s.relay)),
                Some(r) => {
                    if !r.signal_names().contains(&s.signal) {
                        v.push(
                            format!("{p}.signal"),
                            format!("relay '{}' has no signal '{}'", s.relay, s.signal),
                        );
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentState {
    /// Indexed by phase, then device.
    pub devices: [Vec<DeviceState>; 3],
    /// Commands computed on the previous step, applied on this one.
    pub pending_ipb: [bool; 3],
    pub backup_lor_active: bool,
}

impl DeploymentState {
    pub fn new(cfg: &DeploymentConfig) -> Self {
        let n = cfg.devices_per_phase as usize;
        DeploymentState {
            devices: Phase::ALL.map(|p| vec![DeviceState::new(p); n]),
            pending_ipb: [false; 3],
            backup_lor_active: false,
        }
    }

    pub fn phase(&self, p: Phase) -> &[DeviceState] {
        &self.devices[p.index()]
    }
}

/// Sum of equal series voltages `scale` at a time. Runs of identical values
/// are multiplied out, so `n` equal devices at scale 1 give the same bits as
/// one device at scale `n`.
pub fn sum_injections(values: &[Phasor], scale: f64) -> Phasor {
    let mut total = Phasor::new(0.0, 0.0);
    let mut k = 0;
    while k < values.len() {
        let v = values[k];
        let mut run = 1;
        while k + run < values.len() && values[k + run] == v {
            run += 1;
        }
        total += v * (run as f64 * scale);
        k += run;
    }
    total
}

/// Total series voltage per phase (drop convention).
pub fn aggregate_injection(cfg: &DeploymentConfig, state: &DeploymentState) -> ThreePhaseSet {
    ThreePhaseSet::from_fn(|p| {
        let values: Vec<Phasor> = state.phase(p).iter().map(|d| d.last_injection).collect();
        sum_injections(&values, cfg.scale_factor)
    })
}

fn self_bypassed(devices: &[Vec<DeviceState>; 3]) -> [bool; 3] {
    [0, 1, 2].map(|k| devices[k].iter().any(DeviceState::self_bypassed))
}

/// Interphase bypass commands: every phase that is not itself bypassed
/// receives a command while some other phase is.
pub fn ipb_coordinate(states: &[Vec<DeviceState>; 3]) -> [bool; 3] {
    let own = self_bypassed(states);
    let inputs = ipb_inputs(states);
    [0, 1, 2].map(|k| inputs[k] && !own[k])
}

/// Per-phase IPB input as wired to the devices: asserted when any other
/// phase is bypassed on its own account. Unlike [`ipb_coordinate`] it also
/// reaches a bypassed phase, which then stays out until the others resume.
pub fn ipb_inputs(states: &[Vec<DeviceState>; 3]) -> [bool; 3] {
    let own = self_bypassed(states);
    [0, 1, 2].map(|k| (0..3).any(|q| q != k && own[q]))
}

/// OR over the configured conditions.
pub fn backup_lor_evaluate(asserted: &BTreeSet<SignalRef>, conditions: &[SignalRef]) -> bool {
    conditions.iter().any(|c| asserted.contains(c))
}
