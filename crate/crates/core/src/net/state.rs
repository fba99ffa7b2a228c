use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::model::NetworkModel;
use crate::phasor::{Phase, ThreePhaseSet};

/// Shunt between two phases at a fault point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePairShunt {
    pub x: Phase,
    pub y: Phase,
    pub z: Complex64,
}

/// Fault shunts attached at fraction `position` along a line measured from
/// its `from_bus`. `ground[p]` is the phase-to-ground impedance, absent when
/// that phase is healthy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultShunt {
    pub line: String,
    pub position: f64,
    pub ground: [Option<Complex64>; 3],
    pub phase_pairs: Vec<PhasePairShunt>,
}

impl FaultShunt {
    pub fn is_empty(&self) -> bool {
        self.ground.iter().all(Option::is_none) && self.phase_pairs.is_empty()
    }
}

/// Switching state and controlled sources applied to a [`NetworkModel`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkState {
    /// Per breaker, per phase: `true` when closed. Breakers missing from the map are closed.
    pub breakers: BTreeMap<String, [bool; 3]>,
    pub faults: Vec<FaultShunt>,
    /// Series voltage per line in drop convention: a positive drop along the
    /// direction of positive current (from_bus towards to_bus). The element sits
    /// on the from-side segment of the line.
    pub series_injections: BTreeMap<String, ThreePhaseSet>,
}

impl NetworkState {
    /// All breakers closed, no faults, no injections.
    pub fn closed(model: &NetworkModel) -> Self {
        NetworkState {
            breakers: model.breaker_ids().into_iter().map(|b| (b.to_string(), [true; 3])).collect(),
            ..Default::default()
        }
    }

    pub fn breaker_closed(&self, id: &str, phase: Phase) -> bool {
        self.breakers.get(id).map(|b| b[phase.index()]).unwrap_or(true)
    }

    pub fn set_breaker(&mut self, id: &str, phases: &[Phase], closed: bool) {
        let entry = self.breakers.entry(id.to_string()).or_insert([true; 3]);
        for p in phases {
            entry[p.index()] = closed;
        }
    }

    pub fn set_injection(&mut self, line: &str, v: ThreePhaseSet) {
        self.series_injections.insert(line.to_string(), v);
    }

    pub fn injection(&self, line: &str) -> ThreePhaseSet {
        self.series_injections.get(line).copied().unwrap_or_default()
    }
}
