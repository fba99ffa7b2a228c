use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::deployment::DeploymentConfig;
use crate::device::InjectionCommand;
use crate::io::{ValidationErrors, Violations};
use crate::net::{FaultShunt, NetworkModel, PhasePairShunt};
use crate::phasor::Phase;
use crate::relay::RelaySettings;
use crate::time::SimTime;

/// Run-wide switches for the compensator features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureFlags {
    pub devices_enabled: bool,
    pub oc_enabled: bool,
    pub lor_enabled: bool,
    pub ipb_enabled: bool,
    pub backup_lor_enabled: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        FeatureFlags {
            devices_enabled: true,
            oc_enabled: true,
            lor_enabled: true,
            ipb_enabled: true,
            backup_lor_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultType {
    ThreePhase,
    PhaseGround { phase: Phase },
    PhasePhase { phases: [Phase; 2] },
    PhasePhaseGround { phases: [Phase; 2] },
    /// A fault that changes type; each stage replaces the previous one.
    Evolving { stages: Vec<FaultStage> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultStage {
    /// Offset from fault inception (s).
    pub after_s: f64,
    #[serde(rename = "type")]
    pub fault_type: FaultType,
}

impl FaultType {
    /// Shunts for a simple (non-evolving) fault type; `None` for `Evolving`.
    pub fn shunt(&self, line: &str, position: f64, r: f64) -> Option<FaultShunt> {
        let z = num_complex::Complex64::new(r, 0.0);
        let mut f = FaultShunt {
            line: line.to_string(),
            position,
            ground: [None; 3],
            phase_pairs: Vec::new(),
        };
        match self {
            FaultType::ThreePhase => f.ground = [Some(z); 3],
            FaultType::PhaseGround { phase } => f.ground[phase.index()] = Some(z),
            FaultType::PhasePhase { phases: [x, y] } => f.phase_pairs.push(PhasePairShunt { x: *x, y: *y, z }),
            FaultType::PhasePhaseGround { phases } => {
                for p in phases {
                    f.ground[p.index()] = Some(z);
                }
            }
            FaultType::Evolving { .. } => return None,
        }
        Some(f)
    }

    /// Stages as `(offset, simple type)`, a single stage at 0 for simple types.
    pub fn stages(&self) -> Vec<(f64, &FaultType)> {
        match self {
            FaultType::Evolving { stages } => stages.iter().map(|s| (s.after_s, &s.fault_type)).collect(),
            simple => vec![(0.0, simple)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub line_id: String,
    /// Fraction of the line from its `from_bus`.
    pub position_p: f64,
    #[serde(rename = "type")]
    pub fault_type: FaultType,
    pub r_fault_ohm: f64,
    /// Time the shunt stays in place, whatever the breakers do.
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventAction {
    ApplyFault(FaultSpec),
    ClearFault {
        line_id: String,
    },
    OpenBreaker {
        breaker: String,
        #[serde(default = "all_phases")]
        phases: Vec<Phase>,
    },
    CloseBreaker {
        breaker: String,
        #[serde(default = "all_phases")]
        phases: Vec<Phase>,
    },
    SetInjectionCommand {
        deployment: String,
        command: InjectionCommand,
    },
    SetFeatureFlags {
        flags: FeatureFlags,
    },
}

fn all_phases() -> Vec<Phase> {
    Phase::ALL.to_vec()
}

impl EventAction {
    pub fn name(&self) -> &'static str {
        match self {
            EventAction::ApplyFault(_) => "apply_fault",
            EventAction::ClearFault { .. } => "clear_fault",
            EventAction::OpenBreaker { .. } => "open_breaker",
            EventAction::CloseBreaker { .. } => "close_breaker",
            EventAction::SetInjectionCommand { .. } => "set_injection_command",
            EventAction::SetFeatureFlags { .. } => "set_feature_flags",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEvent {
    pub t_s: f64,
    pub action: EventAction,
}

/// Declarative description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub t_end_s: f64,
    /// Lines written to the trace; empty means every line.
    #[serde(default)]
    pub monitored_lines: Vec<String>,
    #[serde(default)]
    pub feature_flags: FeatureFlags,
    pub network: NetworkModel,
    #[serde(default)]
    pub deployments: Vec<DeploymentConfig>,
    #[serde(default)]
    pub relays: Vec<RelaySettings>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

fn default_dt() -> f64 {
    250e-6
}

impl ScenarioSpec {
    pub fn dt(&self) -> SimTime {
        SimTime::from_secs(self.dt_s)
    }

    /// Number of steps, `ceil(t_end / dt)`.
    pub fn n_steps(&self) -> u64 {
        let dt = self.dt().as_nanos();
        let end = SimTime::from_secs(self.t_end_s).as_nanos();
        if dt == 0 {
            0
        } else {
            end.div_ceil(dt)
        }
    }

    pub fn monitored(&self) -> Vec<String> {
        if self.monitored_lines.is_empty() {
            self.network.lines.iter().map(|l| l.id.clone()).collect()
        } else {
            self.monitored_lines.clone()
        }
    }

    pub fn deployment(&self, id: &str) -> Option<&DeploymentConfig> {
        self.deployments.iter().find(|d| d.id == id)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut v = Violations::default();
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) || self.dt().as_nanos() == 0 {
            v.push("dt_s", "must be positive");
        }
        if !(self.t_end_s.is_finite() && self.t_end_s >= 0.0) {
            v.push("t_end_s", "must be a non-negative number");
        }
        self.network.check_into(&mut v, "network");
        let line_ok = |id: &str| self.network.line(id).is_some();
        let breakers: HashSet<&str> = self.network.breaker_ids().into_iter().collect();

        for (k, id) in self.monitored_lines.iter().enumerate() {
            if !line_ok(id) {
                v.push(format!("monitored_lines[{k}]"), format!("unknown line '{id}'"));
            }
        }

        let mut relay_ids = HashSet::new();
        for (k, r) in self.relays.iter().enumerate() {
            let p = format!("relays[{k}]");
            if !relay_ids.insert(r.id.as_str()) {
                v.push(format!("{p}.id"), format!("duplicate relay id '{}'", r.id));
            }
            if !line_ok(&r.line_id) {
                v.push(format!("{p}.line_id"), format!("unknown line '{}'", r.line_id));
            }
            r.check_into(&mut v, &p);
        }

        let mut dep_ids = HashSet::new();
        let mut dep_lines = HashSet::new();
        for (k, d) in self.deployments.iter().enumerate() {
            let p = format!("deployments[{k}]");
            if !dep_ids.insert(d.id.as_str()) {
                v.push(format!("{p}.id"), format!("duplicate deployment id '{}'", d.id));
            }
            if !line_ok(&d.line_id) {
                v.push(format!("{p}.line_id"), format!("unknown line '{}'", d.line_id));
            } else if !dep_lines.insert(d.line_id.as_str()) {
                v.push(format!("{p}.line_id"), format!("line '{}' already has a deployment", d.line_id));
            }
            d.check_into(&mut v, &p, &self.relays);
            if d.protection.oc_enabled && self.dt_s * 1e3 > d.protection.t_bypass_ms {
                v.push(
                    format!("{p}.protection.t_bypass_ms"),
                    format!("dt_s ({}) exceeds the bypass latency budget", self.dt_s),
                );
            }
        }

        let mut last_t = f64::NEG_INFINITY;
        for (k, e) in self.events.iter().enumerate() {
            let p = format!("events[{k}]");
            if !(e.t_s.is_finite() && e.t_s >= 0.0) {
                v.push(format!("{p}.t_s"), "must be a non-negative number");
            } else if e.t_s < last_t {
                v.push(format!("{p}.t_s"), "events must be sorted by time");
            }
            last_t = last_t.max(e.t_s);
            let p = format!("{p}.action");
            match &e.action {
                EventAction::ApplyFault(f) => check_fault(&mut v, &p, f, line_ok(&f.line_id)),
                EventAction::ClearFault { line_id } => {
                    if !line_ok(line_id) {
                        v.push(format!("{p}.line_id"), format!("unknown line '{line_id}'"));
                    }
                }
                EventAction::OpenBreaker { breaker, phases } | EventAction::CloseBreaker { breaker, phases } => {
                    if !breakers.contains(breaker.as_str()) {
                        v.push(format!("{p}.breaker"), format!("unknown breaker '{breaker}'"));
                    }
                    if phases.is_empty() {
                        v.push(format!("{p}.phases"), "at least one phase is required");
                    }
                }
                EventAction::SetInjectionCommand { deployment, command } => {
                    if !dep_ids.contains(deployment.as_str()) {
                        v.push(format!("{p}.deployment"), format!("unknown deployment '{deployment}'"));
                    }
                    command.check_into(&mut v, &format!("{p}.command"));
                }
                EventAction::SetFeatureFlags { .. } => {}
            }
        }
        v.into_result()
    }
}

fn check_fault(v: &mut Violations, p: &str, f: &FaultSpec, line_known: bool) {
    if !line_known {
        v.push(format!("{p}.line_id"), format!("unknown line '{}'", f.line_id));
    }
    if !(0.0..=1.0).contains(&f.position_p) {
        v.push(format!("{p}.position_p"), "must lie in [0, 1]");
    }
    if !(f.r_fault_ohm.is_finite() && f.r_fault_ohm >= 0.0) {
        v.push(format!("{p}.r_fault_ohm"), "must be non-negative");
    }
    if !(f.duration_s.is_finite() && f.duration_s > 0.0) {
        v.push(format!("{p}.duration_s"), "must be positive");
    }
    check_phases(v, &format!("{p}.type"), &f.fault_type);
    if let FaultType::Evolving { stages } = &f.fault_type {
        if stages.is_empty() {
            v.push(format!("{p}.type.stages"), "at least one stage is required");
        }
        let mut last = f64::NEG_INFINITY;
        for (k, s) in stages.iter().enumerate() {
            let sp = format!("{p}.type.stages[{k}]");
            if !(s.after_s.is_finite() && s.after_s >= 0.0 && s.after_s < f.duration_s) {
                v.push(format!("{sp}.after_s"), "must lie in [0, duration_s)");
            }
            if s.after_s < last {
                v.push(format!("{sp}.after_s"), "stages must be sorted");
            }
            last = last.max(s.after_s);
            if matches!(s.fault_type, FaultType::Evolving { .. }) {
                v.push(format!("{sp}.type"), "stages cannot nest");
            }
            check_phases(v, &format!("{sp}.type"), &s.fault_type);
        }
    }
}

fn check_phases(v: &mut Violations, p: &str, t: &FaultType) {
    if let FaultType::PhasePhase { phases: [x, y] } | FaultType::PhasePhaseGround { phases: [x, y] } = t {
        if x == y {
            v.push(format!("{p}.phases"), "phases must differ");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_phase_fault_is_three_ground_shunts() {
        let f = FaultType::ThreePhase.shunt("L", 0.5, 5.0).unwrap();
        assert_eq!(f.ground, [Some(num_complex::Complex64::new(5.0, 0.0)); 3]);
        assert!(f.phase_pairs.is_empty());
    }

    #[test]
    fn phase_ground_is_single_shunt() {
        let f = FaultType::PhaseGround { phase: Phase::A }.shunt("L", 0.2, 0.0).unwrap();
        assert_eq!(f.ground[0], Some(num_complex::Complex64::new(0.0, 0.0)));
        assert_eq!(f.ground[1], None);
        assert_eq!(f.ground[2], None);
    }

    #[test]
    fn phase_phase_is_pair_shunt() {
        let f = FaultType::PhasePhase {
            phases: [Phase::B, Phase::C],
        }
        .shunt("L", 0.2, 1.0)
        .unwrap();
        assert_eq!(f.ground, [None; 3]);
        assert_eq!(f.phase_pairs.len(), 1);
    }

    #[test]
    fn n_steps_rounds_up() {
        let toml = r#"
            t_end_s = 0.001
            dt_s = 0.0003
            [network]
            buses = [{ id = "a", nominal_kv = 220.0 }]
        "#;
        let s: ScenarioSpec = toml::from_str(toml).unwrap();
        assert_eq!(s.n_steps(), 4);
    }
}
