//! Distance relay: six impedance loops, self-polarised mho zones with
//! directional supervision, three-pole trip and single-shot auto-reclose.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::Violations;
use crate::net::BranchTerminal;
use crate::phasor::{Phasor, ThreePhaseSet};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelayError {
    #[error("relay time went backwards: {now} after {last}")]
    NonMonotoneTime { last: SimTime, now: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
    NonDirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSettings {
    pub reach_z: Complex64,
    pub delay_s: f64,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaySettings {
    pub id: String,
    pub line_id: String,
    /// Line end the relay measures at; it commands that end's breaker.
    #[serde(default)]
    pub terminal: BranchTerminal,
    #[serde(default)]
    pub k0: Complex64,
    pub zones: Vec<ZoneSettings>,
    #[serde(default = "default_operate_delay")]
    pub breaker_operate_delay_s: f64,
    #[serde(default = "default_dead_time")]
    pub reclose_dead_time_s: f64,
    #[serde(default = "default_reclaim")]
    pub reclaim_time_s: f64,
    #[serde(default = "default_attempts")]
    pub reclose_attempts: u32,
    /// Minimum loop current for a valid measurement (kA).
    #[serde(default = "default_i_min")]
    pub i_min_ka: f64,
}

fn default_operate_delay() -> f64 {
    0.04
}
fn default_dead_time() -> f64 {
    0.9
}
fn default_reclaim() -> f64 {
    5.0
}
fn default_attempts() -> u32 {
    1
}
fn default_i_min() -> f64 {
    0.05
}

impl RelaySettings {
    /// Two forward zones at 80 % / 0 s and 120 % / 0.3 s of the line impedance.
    pub fn standard(id: &str, line_id: &str, terminal: BranchTerminal, z_line: Complex64) -> Self {
        RelaySettings {
            id: id.to_string(),
            line_id: line_id.to_string(),
            terminal,
            k0: Complex64::new(0.0, 0.0),
            zones: vec![
                ZoneSettings {
                    reach_z: z_line * 0.8,
                    delay_s: 0.0,
                    direction: Direction::Forward,
                },
                ZoneSettings {
                    reach_z: z_line * 1.2,
                    delay_s: 0.3,
                    direction: Direction::Forward,
                },
            ],
            breaker_operate_delay_s: default_operate_delay(),
            reclose_dead_time_s: default_dead_time(),
            reclaim_time_s: default_reclaim(),
            reclose_attempts: default_attempts(),
            i_min_ka: default_i_min(),
        }
    }

    /// Names this relay publishes for backup-LOR wiring.
    pub fn signal_names(&self) -> Vec<String> {
        let mut out: Vec<String> = (1..=self.zones.len()).map(|n| format!("zone{n}_pickup")).collect();
        out.extend(
            ["any_pickup", "trip", "pole_open_a", "pole_open_b", "pole_open_c", "pole_discrepancy"]
                .iter()
                .map(|s| s.to_string()),
        );
        out
    }

    pub(crate) fn check_into(&self, v: &mut Violations, path: &str) {
        if self.zones.is_empty() {
            v.push(format!("{path}.zones"), "at least one zone is required");
        }
        for (k, z) in self.zones.iter().enumerate() {
            let p = format!("{path}.zones[{k}]");
            if !(z.reach_z.re.is_finite() && z.reach_z.im.is_finite() && z.reach_z.norm() > 0.0) {
                v.push(format!("{p}.reach_z"), "must be finite and non-zero");
            }
            if !(z.delay_s.is_finite() && z.delay_s >= 0.0) {
                v.push(format!("{p}.delay_s"), "must be non-negative");
            }
            if k > 0 {
                let prev = &self.zones[k - 1];
                if !(z.reach_z.norm() > prev.reach_z.norm()) {
                    v.push(format!("{p}.reach_z"), "zone reaches must increase strictly in magnitude");
                }
                if z.delay_s < prev.delay_s {
                    v.push(format!("{p}.delay_s"), "zone delays must be non-decreasing");
                }
            }
        }
        if !(self.k0.re.is_finite() && self.k0.im.is_finite()) {
            v.push(format!("{path}.k0"), "must be finite");
        }
        for (name, x) in [
            ("breaker_operate_delay_s", self.breaker_operate_delay_s),
            ("reclose_dead_time_s", self.reclose_dead_time_s),
            ("reclaim_time_s", self.reclaim_time_s),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                v.push(format!("{path}.{name}"), "must be non-negative");
            }
        }
        if !(self.i_min_ka.is_finite() && self.i_min_ka > 0.0) {
            v.push(format!("{path}.i_min_ka"), "must be positive");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopId {
    AB,
    BC,
    CA,
    AG,
    BG,
    CG,
}

impl LoopId {
    pub const ALL: [LoopId; 6] = [LoopId::AB, LoopId::BC, LoopId::CA, LoopId::AG, LoopId::BG, LoopId::CG];
}

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopMeasurement {
    pub id: LoopId,
    pub z: Complex64,
    pub valid: bool,
}

/// Apparent impedance of the three phase-phase and three phase-ground loops.
pub fn measure_loops(v: &ThreePhaseSet, i: &ThreePhaseSet, k0: Complex64, i_min_ka: f64) -> [LoopMeasurement; 6] {
    let i_res = i.a + i.b + i.c;
    let pairs = [(v.a - v.b, i.a - i.b), (v.b - v.c, i.b - i.c), (v.c - v.a, i.c - i.a)];
    let grounds = [(v.a, i.a + k0 * i_res), (v.b, i.b + k0 * i_res), (v.c, i.c + k0 * i_res)];
    let mut out = [LoopMeasurement {
        id: LoopId::AB,
        z: Complex64::new(0.0, 0.0),
        valid: false,
    }; 6];
    for (k, (num, den)) in pairs.into_iter().chain(grounds).enumerate() {
        let valid = den.norm() >= i_min_ka && num.is_finite();
        out[k] = LoopMeasurement {
            id: LoopId::ALL[k],
            z: if valid { num / den } else { Complex64::new(0.0, 0.0) },
            valid,
        };
    }
    out
}

/// Self-polarised mho circle through the origin; the origin itself is inside.
pub fn zone_check(z: Complex64, zone: &ZoneSettings) -> bool {
    let half = zone.reach_z / 2.0;
    (z - half).norm() <= half.norm()
}

/// Direction of an apparent impedance: forward for angles in (-30, 150] degrees.
pub fn direction_of(z: Complex64) -> Direction {
    let deg = z.arg().to_degrees();
    if deg > -30.0 && deg <= 150.0 {
        Direction::Forward
    } else {
        Direction::Reverse
    }
}

/// Direction of `V / I`, or `None` below the supervision current (blocking).
pub fn directional(v: Phasor, i: Phasor, i_min_ka: f64) -> Option<Direction> {
    if i.norm() < i_min_ka {
        None
    } else {
        Some(direction_of(v / i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecloseState {
    Idle,
    DeadTime,
    Reclaim,
    LockedOut,
}

impl RecloseState {
    pub fn code(self) -> u8 {
        match self {
            RecloseState::Idle => 0,
            RecloseState::DeadTime => 1,
            RecloseState::Reclaim => 2,
            RecloseState::LockedOut => 3,
        }
    }
}

/// Binary outputs wired to other equipment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelaySignals {
    pub zone_pickup: Vec<bool>,
    pub trip: bool,
    pub pole_open: [bool; 3],
}

impl RelaySignals {
    pub fn any_pickup(&self) -> bool {
        self.zone_pickup.iter().any(|&p| p)
    }

    pub fn pole_discrepancy(&self) -> bool {
        let open = self.pole_open.iter().filter(|&&o| o).count();
        open > 0 && open < 3
    }

    /// Value of a published signal, `None` for an unknown name.
    pub fn get(&self, name: &str) -> Option<bool> {
        match name {
            "any_pickup" => Some(self.any_pickup()),
            "trip" => Some(self.trip),
            "pole_open_a" => Some(self.pole_open[0]),
            "pole_open_b" => Some(self.pole_open[1]),
            "pole_open_c" => Some(self.pole_open[2]),
            "pole_discrepancy" => Some(self.pole_discrepancy()),
            _ => {
                let n: usize = name.strip_prefix("zone")?.strip_suffix("_pickup")?.parse().ok()?;
                self.zone_pickup.get(n.checked_sub(1)?).copied()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayState {
    pub zone_pickup: Vec<bool>,
    pub zone_timer_start: Vec<Option<SimTime>>,
    pub trip_asserted: bool,
    pub reclose_state: RecloseState,
    pub attempt_count: u32,
    /// When the tripped breaker is due to open.
    pub open_due: Option<SimTime>,
    lockout_on_open: bool,
    pub dead_time_until: Option<SimTime>,
    pub reclaim_until: Option<SimTime>,
    pub signals: RelaySignals,
    pub last_step: Option<SimTime>,
}

impl RelayState {
    pub fn new(settings: &RelaySettings) -> Self {
        let n = settings.zones.len();
        RelayState {
            zone_pickup: vec![false; n],
            zone_timer_start: vec![None; n],
            trip_asserted: false,
            reclose_state: RecloseState::Idle,
            attempt_count: 0,
            open_due: None,
            lockout_on_open: false,
            dead_time_until: None,
            reclaim_until: None,
            signals: RelaySignals {
                zone_pickup: vec![false; n],
                ..Default::default()
            },
            last_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakerCommand {
    Open,
    Close,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayEvent {
    pub name: &'static str,
    pub detail: String,
}

fn ev(name: &'static str, detail: impl Into<String>) -> RelayEvent {
    RelayEvent {
        name,
        detail: detail.into(),
    }
}

/// Zones whose characteristic and direction currently see a fault.
pub fn zone_pickups(measurements: &[LoopMeasurement], settings: &RelaySettings) -> Vec<bool> {
    settings
        .zones
        .iter()
        .map(|zone| {
            measurements.iter().any(|m| {
                m.valid
                    && zone_check(m.z, zone)
                    && match zone.direction {
                        Direction::NonDirectional => true,
                        d => direction_of(m.z) == d,
                    }
            })
        })
        .collect()
}

/// One relay step on frozen measurements. `pole_closed` is the actual
/// position of the relay's own breaker.
pub fn step_relay(
    state: &RelayState,
    measurements: &[LoopMeasurement],
    pole_closed: [bool; 3],
    t_now: SimTime,
    settings: &RelaySettings,
) -> Result<(RelayState, Option<BreakerCommand>, Vec<RelayEvent>), RelayError> {
    if let Some(last) = state.last_step {
        if t_now < last {
            return Err(RelayError::NonMonotoneTime { last, now: t_now });
        }
    }
    let mut s = state.clone();
    s.last_step = Some(t_now);
    let mut events = Vec::new();
    let mut command = None;

    let pickups = zone_pickups(measurements, settings);
    for (k, &p) in pickups.iter().enumerate() {
        if p && !s.zone_pickup[k] {
            events.push(ev("pickup", format!("zone{}", k + 1)));
        } else if !p && s.zone_pickup[k] {
            events.push(ev("dropout", format!("zone{}", k + 1)));
        }
        if p {
            s.zone_timer_start[k].get_or_insert(t_now);
        } else {
            s.zone_timer_start[k] = None;
        }
    }
    s.zone_pickup = pickups;

    let expired: Vec<usize> = (0..settings.zones.len())
        .filter(|&k| {
            s.zone_timer_start[k].is_some_and(|t0| (t_now - t0).as_secs() >= settings.zones[k].delay_s)
        })
        .collect();

    let can_trip = matches!(s.reclose_state, RecloseState::Idle | RecloseState::Reclaim);
    if !expired.is_empty() && !s.trip_asserted && can_trip {
        s.trip_asserted = true;
        s.open_due = Some(t_now + SimTime::from_secs(settings.breaker_operate_delay_s));
        let in_reclaim = s.reclose_state == RecloseState::Reclaim;
        let zone1 = s.zone_pickup.first().copied().unwrap_or(false);
        s.lockout_on_open = (in_reclaim && zone1) || s.attempt_count >= settings.reclose_attempts;
        s.reclaim_until = None;
        let zones: Vec<String> = expired.iter().map(|k| format!("zone{}", k + 1)).collect();
        let mut detail = zones.join(",");
        if s.lockout_on_open {
            detail.push_str(" definitive");
        }
        events.push(ev("trip", detail));
    }

    if s.open_due.is_some_and(|d| t_now >= d) {
        s.open_due = None;
        s.trip_asserted = false;
        command = Some(BreakerCommand::Open);
        events.push(ev("open_command", ""));
        if s.lockout_on_open {
            s.reclose_state = RecloseState::LockedOut;
            s.dead_time_until = None;
            events.push(ev("lockout", format!("after {} reclose attempt(s)", s.attempt_count)));
        } else {
            s.reclose_state = RecloseState::DeadTime;
            s.dead_time_until = Some(t_now + SimTime::from_secs(settings.reclose_dead_time_s));
        }
    }

    match s.reclose_state {
        RecloseState::DeadTime if s.dead_time_until.is_some_and(|d| t_now >= d) => {
            s.dead_time_until = None;
            s.attempt_count += 1;
            s.reclose_state = RecloseState::Reclaim;
            s.reclaim_until = Some(t_now + SimTime::from_secs(settings.reclaim_time_s));
            for t in s.zone_timer_start.iter_mut() {
                *t = None;
            }
            command = Some(BreakerCommand::Close);
            events.push(ev("reclose", format!("attempt {}", s.attempt_count)));
        }
        RecloseState::Reclaim if !s.trip_asserted && s.reclaim_until.is_some_and(|d| t_now >= d) => {
            s.reclaim_until = None;
            s.attempt_count = 0;
            s.reclose_state = RecloseState::Idle;
            events.push(ev("reclaim_complete", ""));
        }
        _ => {}
    }

    s.signals = RelaySignals {
        zone_pickup: s.zone_pickup.clone(),
        trip: s.trip_asserted,
        pole_open: pole_closed.map(|c| !c),
    };
    Ok((s, command, events))
}
