//! The four-bus Guajira / Santa Marta / Termocol study network and the three
//! study cases built on it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deployment::DeploymentConfig;
use crate::device::{AngleTrackerSettings, DeviceProtectionSettings, DeviceRating, InjectionCommand, Polarity};
use crate::net::{BranchTerminal, Bus, Line, NetworkModel, Source};
use crate::phasor::{Phasor, ThreePhaseSet};
use crate::relay::RelaySettings;
use crate::scenario::{EventAction, FaultSpec, FaultType, FeatureFlags, ScenarioEvent, ScenarioSpec};

use super::calibrate::Calibration;

pub const SM: &str = "SM";
pub const GJ: &str = "GJ";
pub const TC: &str = "TC";
pub const EQ: &str = "EQ";
pub const SM_GJ: &str = "SM-GJ";
pub const SM_TC: &str = "SM-TC";
pub const GJ_TC: &str = "GJ-TC";
pub const SM_EQ: &str = "SM-EQ";

/// Free parameters of the study network other than the angle spread.
///
/// Source EMFs are `emf_pu * E` at angle `angle_factor * delta`, with the
/// equivalent source at `E` and zero angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcmTopology {
    pub base_kv: f64,
    pub gj_emf_pu: f64,
    pub gj_angle_factor: f64,
    pub tc_emf_pu: f64,
    pub tc_angle_factor: f64,
    pub z_src_gj: Complex64,
    pub z_src_tc: Complex64,
    pub z_src_eq: Complex64,
    pub z_sm_gj: Complex64,
    pub z_sm_tc: Complex64,
    pub z_gj_tc: Complex64,
    pub z_sm_eq: Complex64,
    pub sm_tc_thermal_limit_a: f64,
    pub other_thermal_limit_a: f64,
    /// Upper end of the angle-spread search (deg).
    pub max_angle_spread_deg: f64,
    pub sm_tc_devices_per_phase: u32,
    pub sm_gj_devices_per_phase: u32,
    pub sm_gj_x_per_device_ohm: f64,
}

impl Default for GcmTopology {
    fn default() -> Self {
        GcmTopology {
            base_kv: 220.0,
            gj_emf_pu: 0.96,
            gj_angle_factor: 1.0,
            tc_emf_pu: 1.11,
            tc_angle_factor: 0.33,
            z_src_gj: Complex64::new(0.5, 9.5),
            z_src_tc: Complex64::new(0.2, 3.4),
            z_src_eq: Complex64::new(0.6, 6.2),
            z_sm_gj: Complex64::new(3.4, 34.0),
            z_sm_tc: Complex64::new(1.1, 11.0),
            z_gj_tc: Complex64::new(8.0, 80.0),
            z_sm_eq: Complex64::new(1.1, 11.0),
            sm_tc_thermal_limit_a: 787.0,
            other_thermal_limit_a: 2000.0,
            max_angle_spread_deg: 60.0,
            sm_tc_devices_per_phase: 5,
            sm_gj_devices_per_phase: 3,
            sm_gj_x_per_device_ohm: 0.5,
        }
    }
}

impl GcmTopology {
    /// Phase-to-neutral base voltage (kV).
    pub fn e_ln(&self) -> f64 {
        self.base_kv / 3f64.sqrt()
    }

    pub fn emf_gj(&self, delta_rad: f64) -> Phasor {
        Phasor::from_polar(self.gj_emf_pu * self.e_ln(), self.gj_angle_factor * delta_rad)
    }

    pub fn emf_tc(&self, delta_rad: f64) -> Phasor {
        Phasor::from_polar(self.tc_emf_pu * self.e_ln(), self.tc_angle_factor * delta_rad)
    }

    pub fn emf_eq(&self) -> Phasor {
        Phasor::new(self.e_ln(), 0.0)
    }
}

/// Network model for a given angle spread.
pub fn gcm_network(topo: &GcmTopology, delta_rad: f64) -> NetworkModel {
    let bus = |id: &str, name: &str| Bus {
        id: id.into(),
        name: name.into(),
        nominal_kv: topo.base_kv,
    };
    let line = |id: &str, from: &str, to: &str, z: Complex64, limit: f64| Line {
        id: id.into(),
        from_bus: from.into(),
        to_bus: to.into(),
        series_z: z,
        thermal_limit_a: limit,
        breaker_from: format!("{id}.{}", from.to_lowercase()),
        breaker_to: format!("{id}.{}", to.to_lowercase()),
    };
    let src = |id: &str, bus: &str, e: Phasor, z: Complex64| Source {
        id: id.into(),
        bus: bus.into(),
        emf: ThreePhaseSet::balanced(e),
        thevenin_z: z,
    };
    let other = topo.other_thermal_limit_a;
    NetworkModel {
        system_frequency_hz: 60.0,
        buses: vec![
            bus(SM, "Santa Marta"),
            bus(GJ, "Termoguajira"),
            bus(TC, "Termocol"),
            bus(EQ, "Equivalent"),
        ],
        sources: vec![
            src("G_GJ", GJ, topo.emf_gj(delta_rad), topo.z_src_gj),
            src("G_TC", TC, topo.emf_tc(delta_rad), topo.z_src_tc),
            src("G_EQ", EQ, topo.emf_eq(), topo.z_src_eq),
        ],
        lines: vec![
            line(SM_GJ, SM, GJ, topo.z_sm_gj, other),
            line(SM_TC, SM, TC, topo.z_sm_tc, topo.sm_tc_thermal_limit_a),
            line(GJ_TC, GJ, TC, topo.z_gj_tc, other),
            line(SM_EQ, SM, EQ, topo.z_sm_eq, other),
        ],
        loads: vec![],
    }
}

/// The three study cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcmCase {
    /// Devices disabled.
    Case1,
    /// Devices injecting a fixed voltage with a slow angle tracker and all
    /// bypass functions off.
    Case2,
    /// Devices with OC, LOR, IPB and backup LOR.
    Case3,
}

impl GcmCase {
    pub const ALL: [GcmCase; 3] = [GcmCase::Case1, GcmCase::Case2, GcmCase::Case3];

    pub fn name(self) -> &'static str {
        match self {
            GcmCase::Case1 => "gcm_case1",
            GcmCase::Case2 => "gcm_case2",
            GcmCase::Case3 => "gcm_case3",
        }
    }

    pub const FAULT_T_S: f64 = 1.0;
    pub const FAULT_DURATION_S: f64 = 1.5;
    pub const FAULT_R_OHM: f64 = 5.0;
    pub const T_END_S: f64 = 40.0;
    /// Tracker time constant in the slow-tracker case (s).
    pub const SLOW_TAU_S: f64 = 0.5;

    /// Scenario for this case on a calibrated network.
    pub fn scenario(self, cal: &Calibration) -> ScenarioSpec {
        let topo = &cal.topology;
        let network = gcm_network(topo, cal.delta_deg.to_radians());
        let relays = vec![
            RelaySettings::standard("smgj_sm", SM_GJ, BranchTerminal::From, topo.z_sm_gj),
            RelaySettings::standard("smgj_gj", SM_GJ, BranchTerminal::To, topo.z_sm_gj),
            RelaySettings::standard("smtc_sm", SM_TC, BranchTerminal::From, topo.z_sm_tc),
            RelaySettings::standard("smtc_tc", SM_TC, BranchTerminal::To, topo.z_sm_tc),
        ];
        let mut smtc = deployment("dep_smtc", SM_TC, topo.sm_tc_devices_per_phase, cal.x_set_per_device_ohm);
        let mut smgj = deployment("dep_smgj", SM_GJ, topo.sm_gj_devices_per_phase, topo.sm_gj_x_per_device_ohm);
        let mut flags = FeatureFlags::default();
        match self {
            GcmCase::Case1 => flags.devices_enabled = false,
            GcmCase::Case2 => {
                flags.oc_enabled = false;
                flags.lor_enabled = false;
                flags.ipb_enabled = false;
                flags.backup_lor_enabled = false;
                for (d, i_ref) in [(&mut smtc, cal.post_contingency_on_ka), (&mut smgj, cal.pre_fault_sm_gj_ka)] {
                    d.command = InjectionCommand::fixed_voltage(d.command.x_set_ohm * i_ref, Polarity::Inductive);
                    d.tracker = AngleTrackerSettings { tau_s: Self::SLOW_TAU_S };
                }
            }
            GcmCase::Case3 => {}
        }
        ScenarioSpec {
            name: self.name().into(),
            dt_s: 250e-6,
            t_end_s: Self::T_END_S,
            monitored_lines: vec![SM_GJ.into(), SM_TC.into()],
            feature_flags: flags,
            network,
            deployments: vec![smgj, smtc],
            relays,
            events: vec![ScenarioEvent {
                t_s: Self::FAULT_T_S,
                action: EventAction::ApplyFault(FaultSpec {
                    line_id: SM_GJ.into(),
                    position_p: 0.5,
                    fault_type: FaultType::ThreePhase,
                    r_fault_ohm: Self::FAULT_R_OHM,
                    duration_s: Self::FAULT_DURATION_S,
                }),
            }],
        }
    }
}

fn deployment(id: &str, line: &str, n: u32, x: f64) -> DeploymentConfig {
    DeploymentConfig {
        id: id.into(),
        line_id: line.into(),
        devices_per_phase: n,
        scale_factor: 1.0,
        ipb_enabled: true,
        backup_lor_enabled: true,
        command: InjectionCommand::fixed_reactance(x),
        rating: DeviceRating::default(),
        protection: DeviceProtectionSettings::default(),
        tracker: AngleTrackerSettings::default(),
        backup_lor_signals: vec![],
        remote: false,
    }
}
