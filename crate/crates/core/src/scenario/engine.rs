use std::collections::{BTreeMap, BTreeSet};

use crate::cosim::{DeviceLink, SampleRequest};
use crate::deployment::{
    aggregate_injection, backup_lor_evaluate, ipb_inputs, DeploymentConfig, DeploymentState, SignalRef,
};
use crate::device::{device_step, transition_events, DeviceInput, InjectionCommand, ModeState};
use crate::error::{Error, Result};
use crate::net::{BranchTerminal, FaultShunt, NetworkState, Solution, Solver, SolverOptions};
use crate::phasor::{Phase, ThreePhaseSet};
use crate::relay::{measure_loops, step_relay, BreakerCommand, RelaySettings, RelayState};
use crate::time::SimTime;

use super::record::{DeviceSummary, EventRecord, LineSummary, Summary, TraceSink};
use super::spec::{EventAction, FaultSpec, FeatureFlags, ScenarioSpec};

/// Length of the averaging window at the end of a run.
pub const FINAL_WINDOW_S: f64 = 1.0;

const TIMELINE_EVENTS: [&str; 5] = ["trip", "open_command", "reclose", "lockout", "reclaim_complete"];

#[derive(Debug, Clone)]
enum Action {
    User(EventAction),
    FaultStage { id: u64, stage: usize },
    ClearFaultId { id: u64 },
}

struct ActiveFault {
    spec: FaultSpec,
    shunt: Option<FaultShunt>,
}

struct DeploymentRuntime {
    cfg: DeploymentConfig,
    line: usize,
    state: DeploymentState,
    command: InjectionCommand,
    conditions: Vec<SignalRef>,
    link: Option<Box<dyn DeviceLink>>,
    /// Steps spent in each mode, per phase and device.
    dwell: [Vec<[u64; 4]>; 3],
}

struct RelayRuntime {
    settings: RelaySettings,
    state: RelayState,
    line: usize,
    bus: usize,
    breaker: String,
}

/// A scenario in progress. Each [`Simulation::step`] solves the network with
/// the decisions of the previous step, runs relays and devices on the frozen
/// samples, records the trace row and commits actuation for the next step.
pub struct Simulation {
    spec: ScenarioSpec,
    solver: Solver,
    net: NetworkState,
    flags: FeatureFlags,
    deployments: Vec<DeploymentRuntime>,
    relays: Vec<RelayRuntime>,
    schedule: BTreeMap<(SimTime, u64), Action>,
    next_seq: u64,
    faults: BTreeMap<u64, ActiveFault>,
    next_fault: u64,
    dt: SimTime,
    step: u64,
    n_steps: u64,
    window_start: u64,
    columns: Vec<String>,
    monitored: Vec<usize>,
    row: Vec<f64>,
    last: Option<Solution>,
    max_current: Vec<f64>,
    window_sum: Vec<[f64; 3]>,
    window_count: u64,
    kcl_max: f64,
    timeline: Vec<EventRecord>,
    fingerprint: String,
    header_written: bool,
    abort_reason: Option<String>,
}

impl Simulation {
    /// Validates `spec` and prepares the run. Deployments marked `remote`
    /// must be given a link under their id.
    pub fn new(spec: ScenarioSpec, mut links: BTreeMap<String, Box<dyn DeviceLink>>) -> Result<Self> {
        spec.validate().map_err(Error::Invalid)?;
        let model = spec.network.clone();
        let line_idx = |id: &str| model.line_index(id).expect("validated line id");
        let deployments = spec
            .deployments
            .iter()
            .map(|cfg| {
                let link = links.remove(&cfg.id);
                if cfg.remote && link.is_none() {
                    return Err(Error::Contract(format!("deployment '{}' is remote but has no link", cfg.id)));
                }
                let n = cfg.devices_per_phase as usize;
                Ok(DeploymentRuntime {
                    cfg: cfg.clone(),
                    line: line_idx(&cfg.line_id),
                    state: DeploymentState::new(cfg),
                    command: cfg.command,
                    conditions: cfg.backup_conditions(&spec.relays),
                    link: if cfg.remote { link } else { None },
                    dwell: [vec![[0; 4]; n], vec![[0; 4]; n], vec![[0; 4]; n]],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let relays = spec
            .relays
            .iter()
            .map(|r| {
                let line = &model.lines[line_idx(&r.line_id)];
                let (bus, breaker) = match r.terminal {
                    BranchTerminal::From => (&line.from_bus, &line.breaker_from),
                    BranchTerminal::To => (&line.to_bus, &line.breaker_to),
                };
                RelayRuntime {
                    settings: r.clone(),
                    state: RelayState::new(r),
                    line: line_idx(&r.line_id),
                    bus: model.bus_index(bus).expect("validated bus id"),
                    breaker: breaker.clone(),
                }
            })
            .collect();
        let monitored: Vec<usize> = spec.monitored().iter().map(|id| line_idx(id)).collect();
        let dt = spec.dt();
        let n_steps = spec.n_steps();
        let window_steps = SimTime::from_secs(FINAL_WINDOW_S).as_nanos().div_ceil(dt.as_nanos());
        let n_lines = model.lines.len();
        let net = NetworkState::closed(&model);
        let mut sim = Simulation {
            solver: Solver::new(model, SolverOptions::default()),
            net,
            flags: spec.feature_flags,
            deployments,
            relays,
            schedule: BTreeMap::new(),
            next_seq: 0,
            faults: BTreeMap::new(),
            next_fault: 0,
            dt,
            step: 0,
            n_steps,
            window_start: n_steps.saturating_sub(window_steps),
            columns: Vec::new(),
            monitored,
            row: Vec::new(),
            last: None,
            max_current: vec![0.0; n_lines],
            window_sum: vec![[0.0; 3]; n_lines],
            window_count: 0,
            kcl_max: 0.0,
            timeline: Vec::new(),
            fingerprint: crate::io::fingerprint_spec(&spec),
            header_written: false,
            abort_reason: None,
            spec,
        };
        sim.columns = sim.build_columns();
        for e in sim.spec.events.clone() {
            sim.schedule(SimTime::from_secs(e.t_s), Action::User(e.action));
        }
        Ok(sim)
    }

    /// Replaces the fingerprint recorded in the summary (e.g. a hash of the
    /// original file bytes).
    pub fn set_fingerprint(&mut self, fingerprint: impl Into<String>) {
        self.fingerprint = fingerprint.into();
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.n_steps || self.abort_reason.is_some()
    }

    pub fn network_state(&self) -> &NetworkState {
        &self.net
    }

    pub fn flags(&self) -> FeatureFlags {
        self.flags
    }

    pub fn deployment_state(&self, id: &str) -> Option<&DeploymentState> {
        self.deployments.iter().find(|d| d.cfg.id == id).map(|d| &d.state)
    }

    pub fn relay_state(&self, id: &str) -> Option<&RelayState> {
        self.relays.iter().find(|r| r.settings.id == id).map(|r| &r.state)
    }

    /// Network solution of the last completed step.
    pub fn last_solution(&self) -> Option<&Solution> {
        self.last.as_ref()
    }

    /// From-side current of a line at the last solved step.
    pub fn line_current(&self, id: &str) -> Option<ThreePhaseSet> {
        let i = self.spec.network.line_index(id)?;
        self.last.as_ref().map(|s| s.branch_currents[i])
    }

    fn schedule(&mut self, t: SimTime, action: Action) {
        self.schedule.insert((t, self.next_seq), action);
        self.next_seq += 1;
    }

    fn build_columns(&self) -> Vec<String> {
        let mut c = Vec::new();
        for &l in &self.monitored {
            let id = &self.spec.network.lines[l].id;
            for p in Phase::ALL {
                for q in ["i_mag_kA", "i_ang_rad", "vinj_mag_kV", "vinj_ang_rad", "device_state_code"] {
                    c.push(format!("{id}.{p}.{q}", p = p.lower()));
                }
            }
        }
        for r in &self.relays {
            let id = &r.settings.id;
            for n in 1..=r.settings.zones.len() {
                c.push(format!("{id}.zone{n}_pickup"));
            }
            c.push(format!("{id}.trip"));
            c.push(format!("{id}.reclose_state"));
        }
        for b in self.spec.network.breaker_ids() {
            c.push(format!("{b}.closed"));
        }
        c
    }

    fn emit(&mut self, sink: &mut dyn TraceSink, t: SimTime, source: &str, name: &str, detail: String) -> Result<()> {
        let e = EventRecord {
            t_s: t.as_secs(),
            source: source.to_string(),
            name: name.to_string(),
            detail,
        };
        if source != "scenario" && TIMELINE_EVENTS.contains(&name) && self.relays.iter().any(|r| r.settings.id == source) {
            self.timeline.push(e.clone());
        }
        sink.event(&e)
    }

    /// Advances one step. Returns `false` once the run is complete.
    pub fn step(&mut self, sink: &mut dyn TraceSink) -> Result<bool> {
        if !self.header_written {
            sink.header(&self.columns)?;
            self.header_written = true;
        }
        if self.is_finished() {
            return Ok(false);
        }
        let k = self.step;
        let t = SimTime(k * self.dt.as_nanos());
        let dt_s = self.spec.dt_s;
        let sol = self.solver.solve(&self.net).map_err(|source| Error::Solver {
            t_s: t.as_secs(),
            step: k,
            source,
        })?;
        self.kcl_max = self.kcl_max.max(sol.kcl_residual_max);
        let in_window = k >= self.window_start;
        for (i, cur) in sol.branch_currents.iter().enumerate() {
            let m = cur.magnitudes();
            for (p, &x) in m.iter().enumerate() {
                self.max_current[i] = self.max_current[i].max(x);
                if in_window {
                    self.window_sum[i][p] += x;
                }
            }
        }
        if in_window {
            self.window_count += 1;
        }

        // relays
        let mut asserted = BTreeSet::new();
        let mut breaker_cmds = Vec::new();
        for r in 0..self.relays.len() {
            let (events, cmd) = {
                let rr = &mut self.relays[r];
                let v = sol.bus_voltages[rr.bus];
                let i = match rr.settings.terminal {
                    BranchTerminal::From => sol.branch_currents[rr.line],
                    BranchTerminal::To => sol.receiving_currents[rr.line].map(|z| -z),
                };
                let meas = measure_loops(&v, &i, rr.settings.k0, rr.settings.i_min_ka);
                let poles = Phase::ALL.map(|p| self.net.breaker_closed(&rr.breaker, p));
                let (st, cmd, events) = step_relay(&rr.state, &meas, poles, t, &rr.settings)
                    .map_err(|e| Error::Contract(e.to_string()))?;
                rr.state = st;
                for name in rr.settings.signal_names() {
                    if rr.state.signals.get(&name) == Some(true) {
                        asserted.insert(SignalRef::new(&rr.settings.id, &name));
                    }
                }
                (events, cmd.map(|c| (rr.breaker.clone(), c)))
            };
            let id = self.relays[r].settings.id.clone();
            for e in events {
                self.emit(sink, t, &id, e.name, e.detail)?;
            }
            breaker_cmds.extend(cmd);
        }

        // devices and deployment coordination
        let mut new_injections = Vec::with_capacity(self.deployments.len());
        for d in 0..self.deployments.len() {
            let mut dev_events = Vec::new();
            {
                let flags = self.flags;
                let dep = &mut self.deployments[d];
                if !flags.devices_enabled {
                    new_injections.push((dep.line, ThreePhaseSet::ZERO));
                } else {
                    let i_line = sol.branch_currents[dep.line];
                    let mut params = dep.cfg.device_params();
                    params.protection.oc_enabled &= flags.oc_enabled;
                    params.protection.lor_enabled &= flags.lor_enabled;
                    let ipb_on = dep.cfg.ipb_enabled && flags.ipb_enabled;
                    let backup_on = dep.cfg.backup_lor_enabled && flags.backup_lor_enabled;
                    let backup_in = backup_on && dep.state.backup_lor_active;
                    let ipb_in = dep.state.pending_ipb.map(|x| x && ipb_on);

                    if let Some(link) = dep.link.as_mut() {
                        let req = SampleRequest {
                            currents: [i_line.a, i_line.b, i_line.c],
                            backup_lor: [backup_in; 3],
                            ipb: ipb_in,
                            command: dep.command,
                            oc_enabled: params.protection.oc_enabled,
                            lor_enabled: params.protection.lor_enabled,
                        };
                        let reply = link.exchange(t, &req).map_err(|source| Error::Link {
                            t_s: t.as_secs(),
                            source,
                        })?;
                        for p in Phase::ALL {
                            let dev = &mut dep.state.devices[p.index()][0];
                            let old = dev.clone();
                            let r = reply.devices[p.index()];
                            dev.mode_state = r.mode;
                            dev.vsl_closed = r.vsl_closed;
                            dev.bypass_cause = r.cause;
                            dev.last_injection = r.injection;
                            dev.last_step = Some(t);
                            for e in transition_events(&old, dev) {
                                dev_events.push((p, 0, e));
                            }
                        }
                    }
                    let skip = usize::from(dep.link.is_some());
                    for p in Phase::ALL {
                        let input = DeviceInput {
                            i_line: i_line[p],
                            backup_lor: backup_in,
                            ipb_cmd: ipb_in[p.index()],
                        };
                        for j in skip..dep.state.devices[p.index()].len() {
                            let dev = &mut dep.state.devices[p.index()][j];
                            let (next, events) = device_step(dev, &params, &dep.command, &input, t, dt_s)
                                .map_err(|e| Error::Contract(e.to_string()))?;
                            *dev = next;
                            for e in events {
                                dev_events.push((p, j, e));
                            }
                        }
                    }
                    dep.state.pending_ipb = if ipb_on {
                        ipb_inputs(&dep.state.devices)
                    } else {
                        [false; 3]
                    };
                    dep.state.backup_lor_active = backup_on && backup_lor_evaluate(&asserted, &dep.conditions);
                    new_injections.push((dep.line, aggregate_injection(&dep.cfg, &dep.state)));
                }
                for p in Phase::ALL {
                    for (j, dev) in dep.state.devices[p.index()].iter().enumerate() {
                        dep.dwell[p.index()][j][dev.mode_state.code() as usize] += 1;
                    }
                }
            }
            let id = self.deployments[d].cfg.id.clone();
            for (p, j, e) in dev_events {
                self.emit(sink, t, &format!("{id}.{}{}", p.lower(), j), e.name(), String::new())?;
            }
        }

        // trace row
        self.last = Some(sol);
        self.fill_row();
        sink.record(t.as_secs(), &self.row)?;

        // actuation for the next step
        for (breaker, cmd) in breaker_cmds {
            self.net.set_breaker(&breaker, &Phase::ALL, cmd == BreakerCommand::Close);
        }
        for (line, v) in new_injections {
            let id = self.spec.network.lines[line].id.clone();
            self.net.set_injection(&id, v);
        }
        while let Some(entry) = self.schedule.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ((due, _), action) = entry.remove_entry();
            self.apply(action, due, t, sink)?;
        }
        self.step += 1;
        Ok(!self.is_finished())
    }

    fn fill_row(&mut self) {
        self.row.clear();
        for &l in &self.monitored {
            let line = &self.spec.network.lines[l];
            let cur = self.last.as_ref().map_or(ThreePhaseSet::ZERO, |s| s.branch_currents[l]);
            let vinj = self.net.injection(&line.id);
            let dep = self.deployments.iter().find(|d| d.line == l);
            for p in Phase::ALL {
                let i = cur[p];
                let v = vinj[p];
                let im = i.norm();
                let vm = v.norm();
                self.row.push(im);
                self.row.push(if im == 0.0 { 0.0 } else { i.arg() });
                self.row.push(vm);
                self.row.push(if vm == 0.0 { 0.0 } else { v.arg() });
                self.row.push(match dep {
                    Some(d) => d.state.devices[p.index()][0].mode_state.code() as f64,
                    None => -1.0,
                });
            }
        }
        for r in &self.relays {
            for &z in &r.state.zone_pickup {
                self.row.push(f64::from(u8::from(z)));
            }
            self.row.push(f64::from(u8::from(r.state.trip_asserted)));
            self.row.push(r.state.reclose_state.code() as f64);
        }
        for b in self.spec.network.breaker_ids() {
            let mask = Phase::ALL
                .iter()
                .filter(|&&p| self.net.breaker_closed(b, p))
                .map(|&p| 1u8 << p.index())
                .sum::<u8>();
            self.row.push(mask as f64);
        }
    }

    fn rebuild_faults(&mut self) {
        self.net.faults = self.faults.values().filter_map(|f| f.shunt.clone()).collect();
    }

    fn apply(&mut self, action: Action, due: SimTime, t: SimTime, sink: &mut dyn TraceSink) -> Result<()> {
        match action {
            Action::User(a) => {
                let detail = match &a {
                    EventAction::ApplyFault(f) => {
                        let id = self.next_fault;
                        self.next_fault += 1;
                        let stages = f.fault_type.stages();
                        let first = stages
                            .first()
                            .filter(|(after, _)| *after == 0.0)
                            .and_then(|(_, ty)| ty.shunt(&f.line_id, f.position_p, f.r_fault_ohm));
                        for (k, (after, _)) in stages.iter().enumerate() {
                            if *after > 0.0 {
                                self.schedule(due + SimTime::from_secs(*after), Action::FaultStage { id, stage: k });
                            }
                        }
                        self.schedule(due + SimTime::from_secs(f.duration_s), Action::ClearFaultId { id });
                        self.faults.insert(
                            id,
                            ActiveFault {
                                spec: f.clone(),
                                shunt: first,
                            },
                        );
                        self.rebuild_faults();
                        format!(
                            "{} p={} r={} duration={} {}",
                            f.line_id,
                            f.position_p,
                            f.r_fault_ohm,
                            f.duration_s,
                            fault_label(&f.fault_type)
                        )
                    }
                    EventAction::ClearFault { line_id } => {
                        self.faults.retain(|_, f| &f.spec.line_id != line_id);
                        self.rebuild_faults();
                        line_id.clone()
                    }
                    EventAction::OpenBreaker { breaker, phases } => {
                        self.net.set_breaker(breaker, phases, false);
                        breaker.clone()
                    }
                    EventAction::CloseBreaker { breaker, phases } => {
                        self.net.set_breaker(breaker, phases, true);
                        breaker.clone()
                    }
                    EventAction::SetInjectionCommand { deployment, command } => {
                        if let Some(d) = self.deployments.iter_mut().find(|d| &d.cfg.id == deployment) {
                            d.command = *command;
                        }
                        deployment.clone()
                    }
                    EventAction::SetFeatureFlags { flags } => {
                        self.flags = *flags;
                        if !flags.devices_enabled {
                            for d in &self.deployments {
                                let id = self.spec.network.lines[d.line].id.clone();
                                self.net.set_injection(&id, ThreePhaseSet::ZERO);
                            }
                        }
                        serde_json::to_string(flags).unwrap_or_default()
                    }
                };
                self.emit(sink, t, "scenario", a.name(), detail)
            }
            Action::FaultStage { id, stage } => {
                let Some(f) = self.faults.get_mut(&id) else {
                    return Ok(());
                };
                let stages = f.spec.fault_type.stages();
                let (_, ty) = stages[stage];
                let label = fault_label(ty);
                f.shunt = ty.shunt(&f.spec.line_id, f.spec.position_p, f.spec.r_fault_ohm);
                let line = f.spec.line_id.clone();
                self.rebuild_faults();
                self.emit(sink, t, "scenario", "fault_evolve", format!("{line} {label}"))
            }
            Action::ClearFaultId { id } => {
                if let Some(f) = self.faults.remove(&id) {
                    self.rebuild_faults();
                    self.emit(sink, t, "scenario", "clear_fault", f.spec.line_id)?;
                }
                Ok(())
            }
        }
    }

    /// Runs the remaining steps. A link failure ends the run early with an
    /// `abort` event and `completed = false` instead of an error.
    pub fn run_with(&mut self, sink: &mut dyn TraceSink) -> Result<Summary> {
        loop {
            match self.step(sink) {
                Ok(true) => {}
                Ok(false) => break,
                Err(Error::Link { t_s, source }) => {
                    let reason = format!("co-simulation link: {source}");
                    let e = EventRecord {
                        t_s,
                        source: "cosim".into(),
                        name: match source {
                            crate::cosim::LinkError::Closed => "link_closed".into(),
                            _ => "link_fault".into(),
                        },
                        detail: source.to_string(),
                    };
                    sink.event(&e)?;
                    self.abort_reason = Some(reason);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        for d in &mut self.deployments {
            if let Some(link) = d.link.as_mut() {
                link.close();
            }
        }
        Ok(self.summary())
    }

    /// Summary of the steps taken so far.
    pub fn summary(&self) -> Summary {
        let dt_s = self.dt.as_secs();
        let lines: Vec<LineSummary> = self
            .spec
            .network
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mean = if self.window_count == 0 {
                    [0.0; 3]
                } else {
                    self.window_sum[i].map(|s| s / self.window_count as f64)
                };
                let limit = l.thermal_limit_a / 1000.0;
                LineSummary {
                    line_id: l.id.clone(),
                    max_current_ka: self.max_current[i],
                    final_window_mean_ka: mean,
                    thermal_limit_ka: limit,
                    overloaded: mean.iter().any(|&m| m > limit),
                }
            })
            .collect();
        let mut devices = Vec::new();
        for d in &self.deployments {
            for p in Phase::ALL {
                for (j, counts) in d.dwell[p.index()].iter().enumerate() {
                    let time_in_state_s = ModeState::ALL
                        .iter()
                        .map(|m| (format!("{m:?}"), counts[m.code() as usize] as f64 * dt_s))
                        .collect();
                    devices.push(DeviceSummary {
                        deployment: d.cfg.id.clone(),
                        phase: p.lower().to_string(),
                        index: j,
                        time_in_state_s,
                    });
                }
            }
        }
        Summary {
            scenario: self.spec.name.clone(),
            fingerprint: self.fingerprint.clone(),
            completed: self.abort_reason.is_none() && self.step >= self.n_steps,
            abort_reason: self.abort_reason.clone(),
            steps: self.step,
            dt_s: self.spec.dt_s,
            t_end_s: self.spec.t_end_s,
            overload: lines.iter().any(|l| l.overloaded),
            lines,
            devices,
            relay_timeline: self.timeline.clone(),
            kcl_residual_max: self.kcl_max,
        }
    }
}

fn fault_label(t: &super::spec::FaultType) -> String {
    use super::spec::FaultType::*;
    match t {
        ThreePhase => "three_phase".into(),
        PhaseGround { phase } => format!("{}g", phase.lower()),
        PhasePhase { phases: [x, y] } => format!("{}{}", x.lower(), y.lower()),
        PhasePhaseGround { phases: [x, y] } => format!("{}{}g", x.lower(), y.lower()),
        Evolving { stages } => {
            let parts: Vec<String> = stages.iter().map(|s| fault_label(&s.fault_type)).collect();
            format!("evolving {}", parts.join("->"))
        }
    }
}

/// Validates and runs a scenario entirely in process.
pub fn run(spec: &ScenarioSpec, sink: &mut dyn TraceSink) -> Result<Summary> {
    Simulation::new(spec.clone(), BTreeMap::new())?.run_with(sink)
}
