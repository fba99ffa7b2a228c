use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::io::Violations;
use crate::phasor::{is_finite, ThreePhaseSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub nominal_kv: f64,
}

/// Three-phase EMF behind a per-phase Thevenin impedance. A zero impedance
/// makes the bus an ideal voltage source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub id: String,
    pub bus: String,
    pub emf: ThreePhaseSet,
    pub thevenin_z: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub series_z: Complex64,
    pub thermal_limit_a: f64,
    pub breaker_from: String,
    pub breaker_to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: String,
    pub shunt_z: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    #[serde(default = "default_frequency")]
    pub system_frequency_hz: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub sources: Vec<Source>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

fn default_frequency() -> f64 {
    60.0
}

impl NetworkModel {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn line(&self, id: &str) -> Option<&Line> {
        self.lines.iter().find(|l| l.id == id)
    }

    /// All breaker ids in line order (`from` before `to`).
    pub fn breaker_ids(&self) -> Vec<&str> {
        self.lines
            .iter()
            .flat_map(|l| [l.breaker_from.as_str(), l.breaker_to.as_str()])
            .collect()
    }

    pub fn validate(&self) -> Result<(), crate::io::ValidationErrors> {
        let mut v = Violations::default();
        self.check_into(&mut v, "network");
        v.into_result()
    }

    pub(crate) fn check_into(&self, v: &mut Violations, path: &str) {
        if !(self.system_frequency_hz.is_finite() && self.system_frequency_hz > 0.0) {
            v.push(format!("{path}.system_frequency_hz"), "must be a positive number");
        }
        if self.buses.is_empty() {
            v.push(format!("{path}.buses"), "at least one bus is required");
        }
        let mut bus_ids = HashSet::new();
        for (i, b) in self.buses.iter().enumerate() {
            let p = format!("{path}.buses[{i}]");
            if !bus_ids.insert(b.id.as_str()) {
                v.push(format!("{p}.id"), format!("duplicate bus id '{}'", b.id));
            }
            if !(b.nominal_kv.is_finite() && b.nominal_kv > 0.0) {
                v.push(format!("{p}.nominal_kv"), "must be positive");
            }
        }
        let mut source_ids = HashSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            let p = format!("{path}.sources[{i}]");
            if !source_ids.insert(s.id.as_str()) {
                v.push(format!("{p}.id"), format!("duplicate source id '{}'", s.id));
            }
            if !bus_ids.contains(s.bus.as_str()) {
                v.push(format!("{p}.bus"), format!("unknown bus '{}'", s.bus));
            }
            if !s.emf.is_finite() {
                v.push(format!("{p}.emf"), "non-finite EMF");
            }
            if !is_finite(s.thevenin_z) {
                v.push(format!("{p}.thevenin_z"), "non-finite impedance");
            }
        }
        let mut ideal_buses = HashSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if s.thevenin_z.norm() == 0.0 && !ideal_buses.insert(s.bus.as_str()) {
                v.push(
                    format!("{path}.sources[{i}].thevenin_z"),
                    format!("bus '{}' already has an ideal source", s.bus),
                );
            }
        }
        let mut line_ids = HashSet::new();
        let mut breaker_ids = HashSet::new();
        for (i, l) in self.lines.iter().enumerate() {
            let p = format!("{path}.lines[{i}]");
            if !line_ids.insert(l.id.as_str()) {
                v.push(format!("{p}.id"), format!("duplicate line id '{}'", l.id));
            }
            if !bus_ids.contains(l.from_bus.as_str()) {
                v.push(format!("{p}.from_bus"), format!("unknown bus '{}'", l.from_bus));
            }
            if !bus_ids.contains(l.to_bus.as_str()) {
                v.push(format!("{p}.to_bus"), format!("unknown bus '{}'", l.to_bus));
            }
            if l.from_bus == l.to_bus {
                v.push(format!("{p}.to_bus"), "line endpoints must differ");
            }
            if !is_finite(l.series_z) || l.series_z.norm() == 0.0 {
                v.push(format!("{p}.series_z"), "must be finite with non-zero magnitude");
            }
            if !(l.thermal_limit_a.is_finite() && l.thermal_limit_a > 0.0) {
                v.push(format!("{p}.thermal_limit_a"), "must be positive");
            }
            for (field, b) in [("breaker_from", &l.breaker_from), ("breaker_to", &l.breaker_to)] {
                if !breaker_ids.insert(b.as_str()) {
                    v.push(format!("{p}.{field}"), format!("duplicate breaker id '{b}'"));
                }
            }
        }
        for (i, ld) in self.loads.iter().enumerate() {
            let p = format!("{path}.loads[{i}]");
            if !bus_ids.contains(ld.bus.as_str()) {
                v.push(format!("{p}.bus"), format!("unknown bus '{}'", ld.bus));
            }
            if !is_finite(ld.shunt_z) || ld.shunt_z.norm() == 0.0 {
                v.push(format!("{p}.shunt_z"), "must be finite with non-zero magnitude");
            }
        }
    }
}
