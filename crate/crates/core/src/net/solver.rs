use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use super::lu::{norm1, ComplexLu, LuError};
use super::model::NetworkModel;
use super::state::{FaultShunt, NetworkState};
use crate::phasor::{is_finite, Phase, Phasor, ThreePhaseSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("unknown line '{0}'")]
    UnknownLine(String),
    #[error("unknown breaker '{0}'")]
    UnknownBreaker(String),
    #[error("fault position {position} on line '{line}' outside [0, 1]")]
    FaultPosition { line: String, position: f64 },
    #[error("non-finite parameter: {0}")]
    NonFinite(String),
    #[error("island [{island}] is singular: {source}")]
    Singular {
        island: String,
        #[source]
        source: LuError,
    },
    #[error("island [{island}] is ill-conditioned (condition estimate {condition:.3e} > {bound:.3e})")]
    IllConditioned { island: String, condition: f64, bound: f64 },
    #[error("KCL residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest accepted 1-norm condition estimate per island.
    pub max_condition: f64,
    /// Largest accepted relative KCL residual.
    pub kcl_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_condition: 1e12,
            kcl_tolerance: 1e-9,
        }
    }
}

/// Which end of a line a measurement refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchTerminal {
    #[default]
    From,
    To,
}

#[derive(Debug)]
struct Ids {
    buses: Vec<String>,
    lines: Vec<String>,
}

/// Result of one network solve.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Per bus, in model order (kV).
    pub bus_voltages: Vec<ThreePhaseSet>,
    /// Per line, current on the from-side segment, positive towards `to_bus` (kA).
    pub branch_currents: Vec<ThreePhaseSet>,
    /// Per line, current on the to-side segment, positive towards `to_bus` (kA).
    pub receiving_currents: Vec<ThreePhaseSet>,
    /// Per bus and phase: `false` when the node belongs to a dead island.
    pub energized: Vec<[bool; 3]>,
    /// Largest nodal current mismatch relative to the largest nodal current sum.
    pub kcl_residual_max: f64,
    ids: Arc<Ids>,
}

impl Solution {
    pub fn branch_current(&self, line_id: &str) -> Result<ThreePhaseSet, SolveError> {
        self.branch_current_at(line_id, BranchTerminal::From)
    }

    /// Current at one terminal of a line, positive into the line from that
    /// terminal's bus.
    pub fn branch_current_at(&self, line_id: &str, terminal: BranchTerminal) -> Result<ThreePhaseSet, SolveError> {
        let i = self.line_index(line_id).ok_or_else(|| SolveError::UnknownLine(line_id.to_string()))?;
        Ok(match terminal {
            BranchTerminal::From => self.branch_currents[i],
            BranchTerminal::To => self.receiving_currents[i].map(|z| -z),
        })
    }

    pub fn bus_voltage(&self, bus_id: &str) -> Option<ThreePhaseSet> {
        let i = self.ids.buses.iter().position(|b| b == bus_id)?;
        Some(self.bus_voltages[i])
    }

    pub fn line_index(&self, line_id: &str) -> Option<usize> {
        self.ids.lines.iter().position(|l| l == line_id)
    }
}

/// Injection pair for a series source `v_s` (source convention, aiding
/// current from sending to receiving node) on a branch of impedance `z`:
/// returns `(sending, receiving)` node current injections.
pub fn norton_pair(v_s: Phasor, z: Complex64) -> (Phasor, Phasor) {
    let i = v_s / z;
    (-i, i)
}

/// One energized island assembled in modified-nodal form.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// Human-readable node list, e.g. `SM.a, F(SM-GJ@0.5).a`.
    pub label: String,
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub matrix: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
    /// Number of node-voltage unknowns; the rest are zero-impedance element currents.
    pub n_nodes: usize,
}

/// Assembles the per-island linear systems for the current state. Dead
/// islands are not part of the output.
pub fn build_system(model: &NetworkModel, state: &NetworkState) -> Result<Vec<LinearSystem>, SolveError> {
    let base = Base::new(model);
    let topo = Topology::compile(&base, model, state)?;
    let rhs = topo.rhs(&base, model, state)?;
    Ok(topo
        .islands
        .iter()
        .map(|isl| LinearSystem {
            label: isl.label.clone(),
            dim: isl.dim,
            matrix: isl.matrix.clone(),
            rhs: isl.gather(&rhs),
            n_nodes: isl.nodes.len(),
        })
        .collect())
}

/// Convenience wrapper: compile, factor and solve once.
pub fn solve_step(model: &NetworkModel, state: &NetworkState) -> Result<Solution, SolveError> {
    Solver::new(model.clone(), SolverOptions::default()).solve(state)
}

/// Reusable solver that caches the factorisation while breakers and faults
/// stay unchanged; only the right-hand side is rebuilt per step.
#[derive(Debug)]
pub struct Solver {
    model: NetworkModel,
    base: Base,
    options: SolverOptions,
    cache: Option<Topology>,
}

impl Solver {
    pub fn new(model: NetworkModel, options: SolverOptions) -> Self {
        let base = Base::new(&model);
        Solver {
            model,
            base,
            options,
            cache: None,
        }
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn solve(&mut self, state: &NetworkState) -> Result<Solution, SolveError> {
        let reuse = matches!(&self.cache, Some(t) if t.matches(&self.base, state));
        if !reuse {
            let mut topo = Topology::compile(&self.base, &self.model, state)?;
            topo.factor(&self.options)?;
            self.cache = Some(topo);
        }
        let topo = self.cache.as_ref().expect("topology compiled above");
        let sol = topo.solve(&self.base, &self.model, state)?;
        if sol.kcl_residual_max > self.options.kcl_tolerance {
            return Err(SolveError::Residual {
                residual: sol.kcl_residual_max,
                tolerance: self.options.kcl_tolerance,
            });
        }
        Ok(sol)
    }
}

#[derive(Debug)]
struct Base {
    ids: Arc<Ids>,
    line_ends: Vec<(usize, usize)>,
    source_bus: Vec<usize>,
    load_bus: Vec<usize>,
    /// (from breaker, to breaker) id per line.
    line_breakers: Vec<(String, String)>,
}

impl Base {
    fn new(model: &NetworkModel) -> Self {
        let idx = |id: &str| model.bus_index(id).unwrap_or(usize::MAX);
        Base {
            ids: Arc::new(Ids {
                buses: model.buses.iter().map(|b| b.id.clone()).collect(),
                lines: model.lines.iter().map(|l| l.id.clone()).collect(),
            }),
            line_ends: model.lines.iter().map(|l| (idx(&l.from_bus), idx(&l.to_bus))).collect(),
            source_bus: model.sources.iter().map(|s| idx(&s.bus)).collect(),
            load_bus: model.loads.iter().map(|l| idx(&l.bus)).collect(),
            line_breakers: model
                .lines
                .iter()
                .map(|l| (l.breaker_from.clone(), l.breaker_to.clone()))
                .collect(),
        }
    }
}

/// Node reference: `node * 3 + phase`.
type Np = usize;

fn np(node: usize, phase: Phase) -> Np {
    node * 3 + phase.index()
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Admittance(Complex64),
    ZeroImpedance,
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    /// Line segment; `seg` 0 is the from-side segment.
    Segment { line: usize, seg: usize, phase: Phase, last: bool },
    SourceImpedance { source: usize, phase: Phase },
    IdealSource { source: usize, phase: Phase },
    Load,
    FaultGround,
    FaultPair,
}

#[derive(Debug, Clone, Copy)]
struct Element {
    a: Np,
    /// `None` is ground.
    b: Option<Np>,
    kind: Kind,
    origin: Origin,
}

#[derive(Debug)]
struct Island {
    label: String,
    /// Global node refs in this island, in unknown order.
    nodes: Vec<Np>,
    /// Element indices of zero-impedance elements, in unknown order after the nodes.
    zero_elems: Vec<usize>,
    dim: usize,
    matrix: Vec<Complex64>,
    lu: Option<ComplexLu>,
}

impl Island {
    fn gather(&self, rhs: &Rhs) -> Vec<Complex64> {
        let mut b = Vec::with_capacity(self.dim);
        b.extend(self.nodes.iter().map(|&n| rhs.node[n]));
        b.extend(self.zero_elems.iter().map(|&e| rhs.elem[e]));
        b
    }
}

struct Rhs {
    /// Current injection per node ref.
    node: Vec<Complex64>,
    /// Constraint value per element (only used for zero-impedance ones).
    elem: Vec<Complex64>,
}

#[derive(Debug)]
struct Topology {
    breakers: Vec<[bool; 3]>,
    faults: Vec<FaultShunt>,
    n_nodes: usize,
    elements: Vec<Element>,
    /// Per node ref: (island index, position in island) or None when dead.
    slot: Vec<Option<(usize, usize)>>,
    islands: Vec<Island>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Topology {
    fn matches(&self, base: &Base, state: &NetworkState) -> bool {
        if self.faults != state.faults {
            return false;
        }
        base.line_breakers
            .iter()
            .flat_map(|(f, t)| [f, t])
            .zip(&self.breakers)
            .all(|(id, cached)| state.breakers.get(id).copied().unwrap_or([true; 3]) == *cached)
    }

    fn compile(base: &Base, model: &NetworkModel, state: &NetworkState) -> Result<Topology, SolveError> {
        for id in state.breakers.keys() {
            if !base.line_breakers.iter().any(|(f, t)| f == id || t == id) {
                return Err(SolveError::UnknownBreaker(id.clone()));
            }
        }
        for line in state.series_injections.keys() {
            if model.line_index(line).is_none() {
                return Err(SolveError::UnknownLine(line.clone()));
            }
        }
        for (i, s) in model.sources.iter().enumerate() {
            if !s.emf.is_finite() || !is_finite(s.thevenin_z) || base.source_bus[i] == usize::MAX {
                return Err(SolveError::NonFinite(format!("source '{}'", s.id)));
            }
        }

        let mut node_names: Vec<String> = model.buses.iter().map(|b| b.id.clone()).collect();
        let mut elements = Vec::new();

        let breakers: Vec<[bool; 3]> = base
            .line_breakers
            .iter()
            .flat_map(|(f, t)| [f, t])
            .map(|id| state.breakers.get(id).copied().unwrap_or([true; 3]))
            .collect();

        // Fault points grouped per line, merged when positions coincide.
        let mut points: Vec<Vec<(f64, Vec<&FaultShunt>)>> = vec![Vec::new(); model.lines.len()];
        for f in &state.faults {
            let li = model.line_index(&f.line).ok_or_else(|| SolveError::UnknownLine(f.line.clone()))?;
            if !(0.0..=1.0).contains(&f.position) || !f.position.is_finite() {
                return Err(SolveError::FaultPosition {
                    line: f.line.clone(),
                    position: f.position,
                });
            }
            let all_finite = f.ground.iter().flatten().all(|z| is_finite(*z))
                && f.phase_pairs.iter().all(|pp| is_finite(pp.z));
            if !all_finite {
                return Err(SolveError::NonFinite(format!("fault shunt on '{}'", f.line)));
            }
            match points[li].iter_mut().find(|(p, _)| *p == f.position) {
                Some((_, list)) => list.push(f),
                None => points[li].push((f.position, vec![f])),
            }
        }

        for (li, line) in model.lines.iter().enumerate() {
            if !is_finite(line.series_z) {
                return Err(SolveError::NonFinite(format!("line '{}'", line.id)));
            }
            let (from, to) = base.line_ends[li];
            let pts = &mut points[li];
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut chain = vec![(0.0, from)];
            for (pos, shunts) in pts.iter() {
                let node = node_names.len();
                node_names.push(format!("F({}@{})", line.id, pos));
                chain.push((*pos, node));
                for f in shunts {
                    for p in Phase::ALL {
                        if let Some(z) = f.ground[p.index()] {
                            elements.push(shunt_element(np(node, p), None, z, Origin::FaultGround));
                        }
                    }
                    for pp in &f.phase_pairs {
                        elements.push(shunt_element(np(node, pp.x), Some(np(node, pp.y)), pp.z, Origin::FaultPair));
                    }
                }
            }
            chain.push((1.0, to));
            let n_seg = chain.len() - 1;
            let brk_from = breakers[2 * li];
            let brk_to = breakers[2 * li + 1];
            for s in 0..n_seg {
                let (p0, a) = chain[s];
                let (p1, b) = chain[s + 1];
                let z = line.series_z * (p1 - p0);
                for p in Phase::ALL {
                    let mut closed = true;
                    if s == 0 {
                        closed &= brk_from[p.index()];
                    }
                    if s == n_seg - 1 {
                        closed &= brk_to[p.index()];
                    }
                    if !closed {
                        continue;
                    }
                    let kind = if z.norm() == 0.0 {
                        Kind::ZeroImpedance
                    } else {
                        Kind::Admittance(z.inv())
                    };
                    elements.push(Element {
                        a: np(a, p),
                        b: Some(np(b, p)),
                        kind,
                        origin: Origin::Segment {
                            line: li,
                            seg: s,
                            phase: p,
                            last: s == n_seg - 1,
                        },
                    });
                }
            }
        }

        for (si, s) in model.sources.iter().enumerate() {
            let bus = base.source_bus[si];
            for p in Phase::ALL {
                if s.thevenin_z.norm() == 0.0 {
                    elements.push(Element {
                        a: np(bus, p),
                        b: None,
                        kind: Kind::ZeroImpedance,
                        origin: Origin::IdealSource { source: si, phase: p },
                    });
                } else {
                    elements.push(Element {
                        a: np(bus, p),
                        b: None,
                        kind: Kind::Admittance(s.thevenin_z.inv()),
                        origin: Origin::SourceImpedance { source: si, phase: p },
                    });
                }
            }
        }
        for (i, ld) in model.loads.iter().enumerate() {
            if !is_finite(ld.shunt_z) || ld.shunt_z.norm() == 0.0 {
                return Err(SolveError::NonFinite(format!("load {i} impedance")));
            }
            let bus = base.load_bus[i];
            for p in Phase::ALL {
                elements.push(shunt_element(np(bus, p), None, ld.shunt_z, Origin::Load));
            }
        }

        let n_nodes = node_names.len();
        let n_refs = n_nodes * 3;

        // Islands: union over series-connecting elements; ground does not connect.
        let mut parent: Vec<usize> = (0..n_refs).collect();
        for e in &elements {
            if let Some(b) = e.b {
                let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut live_root = vec![false; n_refs];
        for (si, _) in model.sources.iter().enumerate() {
            for p in Phase::ALL {
                let r = find(&mut parent, np(base.source_bus[si], p));
                live_root[r] = true;
            }
        }

        let mut island_of_root: Vec<Option<usize>> = vec![None; n_refs];
        let mut slot = vec![None; n_refs];
        let mut islands: Vec<Island> = Vec::new();
        for r in 0..n_refs {
            let root = find(&mut parent, r);
            if !live_root[root] {
                continue;
            }
            let isl = *island_of_root[root].get_or_insert_with(|| {
                islands.push(Island {
                    label: String::new(),
                    nodes: Vec::new(),
                    zero_elems: Vec::new(),
                    dim: 0,
                    matrix: Vec::new(),
                    lu: None,
                });
                islands.len() - 1
            });
            slot[r] = Some((isl, islands[isl].nodes.len()));
            islands[isl].nodes.push(r);
        }
        let mut zero_slot = vec![None; elements.len()];
        for (ei, e) in elements.iter().enumerate() {
            if let (Kind::ZeroImpedance, Some((isl, _))) = (e.kind, slot[e.a]) {
                let island = &mut islands[isl];
                zero_slot[ei] = Some((isl, island.nodes.len() + island.zero_elems.len()));
                island.zero_elems.push(ei);
            }
        }

        for island in &mut islands {
            island.label = island
                .nodes
                .iter()
                .map(|&r| format!("{}.{}", node_names[r / 3], Phase::from_index(r % 3).lower()))
                .collect::<Vec<_>>()
                .join(", ");
            island.dim = island.nodes.len() + island.zero_elems.len();
            island.matrix = vec![ZERO; island.dim * island.dim];
        }

        for (ei, e) in elements.iter().enumerate() {
            let Some((isl, ia)) = slot[e.a] else { continue };
            let ib = e.b.map(|b| slot[b].expect("connected node shares island").1);
            let island = &mut islands[isl];
            let n = island.dim;
            let m = &mut island.matrix;
            match e.kind {
                Kind::Admittance(y) => {
                    m[ia * n + ia] += y;
                    if let Some(ib) = ib {
                        m[ib * n + ib] += y;
                        m[ia * n + ib] -= y;
                        m[ib * n + ia] -= y;
                    }
                }
                Kind::ZeroImpedance => {
                    let (_, k) = zero_slot[ei].expect("zero element in live island");
                    let one = Complex64::new(1.0, 0.0);
                    // current variable leaves a, enters b
                    m[ia * n + k] += one;
                    m[k * n + ia] += one;
                    if let Some(ib) = ib {
                        m[ib * n + k] -= one;
                        m[k * n + ib] -= one;
                    }
                }
            }
        }

        Ok(Topology {
            breakers,
            faults: state.faults.clone(),
            n_nodes,
            elements,
            slot,
            islands,
        })
    }

    fn factor(&mut self, options: &SolverOptions) -> Result<(), SolveError> {
        for island in &mut self.islands {
            let lu = ComplexLu::factor(island.dim, island.matrix.clone()).map_err(|source| SolveError::Singular {
                island: island.label.clone(),
                source,
            })?;
            let cond = lu.condition_1(norm1(island.dim, &island.matrix));
            if !(cond <= options.max_condition) {
                return Err(SolveError::IllConditioned {
                    island: island.label.clone(),
                    condition: cond,
                    bound: options.max_condition,
                });
            }
            island.lu = Some(lu);
        }
        Ok(())
    }

    fn rhs(&self, base: &Base, model: &NetworkModel, state: &NetworkState) -> Result<Rhs, SolveError> {
        let mut node = vec![ZERO; self.n_nodes * 3];
        let mut elem = vec![ZERO; self.elements.len()];
        for (ei, e) in self.elements.iter().enumerate() {
            match (e.origin, e.kind) {
                (Origin::SourceImpedance { source, phase }, Kind::Admittance(y)) => {
                    node[e.a] += model.sources[source].emf[phase] * y;
                }
                (Origin::IdealSource { source, phase }, _) => {
                    elem[ei] = model.sources[source].emf[phase];
                }
                (Origin::Segment { line, seg: 0, phase, .. }, kind) => {
                    let drop = series_drop(base, state, line, phase)?;
                    if drop == ZERO {
                        continue;
                    }
                    match kind {
                        Kind::Admittance(y) => {
                            // source-convention voltage is the negated drop
                            let (at_send, at_recv) = norton_pair(-drop, y.inv());
                            node[e.a] += at_send;
                            node[e.b.expect("segment has two ends")] += at_recv;
                        }
                        Kind::ZeroImpedance => elem[ei] = drop,
                    }
                }
                _ => {}
            }
        }
        Ok(Rhs { node, elem })
    }

    fn solve(&self, base: &Base, model: &NetworkModel, state: &NetworkState) -> Result<Solution, SolveError> {
        let rhs = self.rhs(base, model, state)?;
        let mut v = vec![ZERO; self.n_nodes * 3];
        let mut zero_current = vec![ZERO; self.elements.len()];
        for island in &self.islands {
            let x = island.lu.as_ref().expect("factored before solve").solve(&island.gather(&rhs));
            for (k, &r) in island.nodes.iter().enumerate() {
                v[r] = x[k];
            }
            for (k, &ei) in island.zero_elems.iter().enumerate() {
                zero_current[ei] = x[island.nodes.len() + k];
            }
        }

        let nl = model.lines.len();
        let mut branch = vec![ThreePhaseSet::ZERO; nl];
        let mut receiving = vec![ThreePhaseSet::ZERO; nl];
        // KCL bookkeeping per node ref: (signed sum leaving, sum of magnitudes)
        let mut kcl_sum = vec![ZERO; self.n_nodes * 3];
        let mut kcl_mag = vec![0.0f64; self.n_nodes * 3];
        let mut add = |r: Np, i: Complex64| {
            kcl_sum[r] += i;
            kcl_mag[r] += i.norm();
        };

        for (ei, e) in self.elements.iter().enumerate() {
            if self.slot[e.a].is_none() {
                continue;
            }
            let vb = e.b.map(|b| v[b]).unwrap_or(ZERO);
            let mut i_ab = match e.kind {
                Kind::ZeroImpedance => zero_current[ei],
                Kind::Admittance(y) => (v[e.a] - vb) * y,
            };
            match e.origin {
                Origin::Segment { line, seg, phase, last } => {
                    if let (0, Kind::Admittance(y)) = (seg, e.kind) {
                        let drop = series_drop(base, state, line, phase)?;
                        i_ab -= drop * y;
                    }
                    if seg == 0 {
                        branch[line][phase] = i_ab;
                    }
                    if last {
                        receiving[line][phase] = i_ab;
                    }
                }
                Origin::SourceImpedance { source, phase } => {
                    if let Kind::Admittance(y) = e.kind {
                        // current leaving the node through the source branch
                        i_ab = (v[e.a] - model.sources[source].emf[phase]) * y;
                    }
                }
                _ => {}
            }
            add(e.a, i_ab);
            if let Some(b) = e.b {
                add(b, -i_ab);
            }
        }

        // Normalised by the largest nodal current sum, or by the sources'
        // short-circuit current when flows are tiny, so nodes that carry no
        // current in theory do not turn rounding noise into a large ratio.
        let short_circuit = model
            .sources
            .iter()
            .filter(|s| s.thevenin_z.norm() > 0.0)
            .flat_map(|s| s.emf.magnitudes().map(|e| e / s.thevenin_z.norm()))
            .fold(0.0, f64::max);
        let scale = kcl_mag.iter().copied().fold(short_circuit, f64::max);
        let kcl_residual_max = if scale > 0.0 {
            kcl_sum.iter().map(|s| s.norm()).fold(0.0, f64::max) / scale
        } else {
            0.0
        };

        let bus_voltages = (0..model.buses.len())
            .map(|b| ThreePhaseSet::from_fn(|p| v[np(b, p)]))
            .collect();
        let energized = (0..model.buses.len())
            .map(|b| [0, 1, 2].map(|k| self.slot[b * 3 + k].is_some()))
            .collect();

        Ok(Solution {
            bus_voltages,
            branch_currents: branch,
            receiving_currents: receiving,
            energized,
            kcl_residual_max,
            ids: base.ids.clone(),
        })
    }
}

fn shunt_element(a: Np, b: Option<Np>, z: Complex64, origin: Origin) -> Element {
    let kind = if z.norm() == 0.0 {
        Kind::ZeroImpedance
    } else {
        Kind::Admittance(z.inv())
    };
    Element { a, b, kind, origin }
}

fn series_drop(base: &Base, state: &NetworkState, line: usize, phase: Phase) -> Result<Phasor, SolveError> {
    if state.series_injections.is_empty() {
        return Ok(ZERO);
    }
    let id = &base.ids.lines[line];
    match state.series_injections.get(id) {
        Some(set) if !is_finite(set[phase]) => Err(SolveError::NonFinite(format!("series injection on '{id}'"))),
        Some(set) => Ok(set[phase]),
        None => Ok(ZERO),
    }
}
