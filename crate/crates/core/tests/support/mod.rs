//! Random small networks and an independent dense nodal solve to check the
//! simulator's solver against.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seriescomp_core::net::{Bus, FaultShunt, Line, Load, NetworkModel, NetworkState, PhasePairShunt, Source};
use seriescomp_core::{Phase, ThreePhaseSet};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A random connected network of 2 to 4 buses with an optional fault and
/// optional series injection, all breakers closed.
pub fn random_case(seed: u64) -> (NetworkModel, NetworkState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4usize);
    let buses: Vec<Bus> = (0..n)
        .map(|i| Bus {
            id: format!("B{i}"),
            name: String::new(),
            nominal_kv: 220.0,
        })
        .collect();
    let mut sources = Vec::new();
    for i in 0..n {
        if i == 0 || rng.random_bool(0.5) {
            let emf = ThreePhaseSet::from_fn(|_| {
                Complex64::from_polar(rng.random_range(50.0..150.0), rng.random_range(-3.1..3.1))
            });
            sources.push(Source {
                id: format!("S{i}"),
                bus: format!("B{i}"),
                emf,
                thevenin_z: c(rng.random_range(0.1..2.0), rng.random_range(1.0..20.0)),
            });
        }
    }
    let mut pairs = Vec::new();
    for i in 1..n {
        pairs.push((rng.random_range(0..i), i));
    }
    for _ in 0..rng.random_range(0..=2) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            pairs.push((a, b));
        }
    }
    let lines: Vec<Line> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| Line {
            id: format!("L{k}"),
            from_bus: format!("B{a}"),
            to_bus: format!("B{b}"),
            series_z: c(rng.random_range(0.5..5.0), rng.random_range(5.0..50.0)),
            thermal_limit_a: 1000.0,
            breaker_from: format!("L{k}.from"),
            breaker_to: format!("L{k}.to"),
        })
        .collect();
    let mut loads = Vec::new();
    for i in 0..n {
        if i + 1 == n || rng.random_bool(0.5) {
            loads.push(Load {
                bus: format!("B{i}"),
                shunt_z: c(rng.random_range(50.0..300.0), rng.random_range(0.0..100.0)),
            });
        }
    }
    let model = NetworkModel {
        system_frequency_hz: 60.0,
        buses,
        sources,
        lines,
        loads,
    };
    let mut state = NetworkState::closed(&model);
    if rng.random_bool(0.6) {
        let line = rng.random_range(0..model.lines.len());
        let mut f = FaultShunt {
            line: model.lines[line].id.clone(),
            position: rng.random_range(0.05..0.95),
            ground: [None; 3],
            phase_pairs: vec![],
        };
        for p in 0..3 {
            if rng.random_bool(0.5) {
                f.ground[p] = Some(c(rng.random_range(0.5..20.0), 0.0));
            }
        }
        if rng.random_bool(0.4) {
            f.phase_pairs.push(PhasePairShunt {
                x: Phase::A,
                y: Phase::B,
                z: c(rng.random_range(0.5..10.0), 0.0),
            });
        }
        state.faults.push(f);
    }
    if rng.random_bool(0.5) {
        let line = rng.random_range(0..model.lines.len());
        let v = ThreePhaseSet::from_fn(|_| Complex64::from_polar(rng.random_range(0.0..10.0), rng.random_range(-3.1..3.1)));
        state.set_injection(&model.lines[line].id, v);
    }
    (model, state)
}

/// Bus voltages and from-side line currents by plain nodal analysis.
pub struct Reference {
    pub bus_voltages: Vec<ThreePhaseSet>,
    pub branch_currents: Vec<ThreePhaseSet>,
}

/// Dense 3n x 3n nodal solve. Fault points become extra nodes; a series
/// injection is a voltage drop on the from-side segment.
pub fn reference_solve(model: &NetworkModel, state: &NetworkState) -> Reference {
    let nb = model.buses.len();
    let bus = |id: &str| model.buses.iter().position(|b| b.id == id).unwrap();
    let fault_of = |line: &str| state.faults.iter().position(|f| f.line == line);
    let n_nodes = nb + state.faults.len();
    let dim = 3 * n_nodes;
    let mut y = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let idx = |node: usize, p: usize| 3 * node + p;

    let stamp = |y: &mut DMatrix<Complex64>, a: usize, b: Option<usize>, adm: Complex64| {
        y[(a, a)] += adm;
        if let Some(b) = b {
            y[(b, b)] += adm;
            y[(a, b)] -= adm;
            y[(b, a)] -= adm;
        }
    };
    for s in &model.sources {
        let b = bus(&s.bus);
        for p in 0..3 {
            let adm = s.thevenin_z.inv();
            stamp(&mut y, idx(b, p), None, adm);
            rhs[idx(b, p)] += s.emf[Phase::from_index(p)] * adm;
        }
    }
    for l in &model.loads {
        let b = bus(&l.bus);
        for p in 0..3 {
            stamp(&mut y, idx(b, p), None, l.shunt_z.inv());
        }
    }
    // (first node, second node, impedance) of the from-side segment per line
    let mut first_seg = Vec::new();
    for l in &model.lines {
        let a = bus(&l.from_bus);
        let b = bus(&l.to_bus);
        let vd = state.injection(&l.id);
        let segs: Vec<(usize, usize, Complex64)> = match fault_of(&l.id) {
            Some(k) => {
                let f = &state.faults[k];
                let node = nb + k;
                vec![(a, node, l.series_z * f.position), (node, b, l.series_z * (1.0 - f.position))]
            }
            None => vec![(a, b, l.series_z)],
        };
        for (s, &(u, v, z)) in segs.iter().enumerate() {
            for p in 0..3 {
                let adm = z.inv();
                stamp(&mut y, idx(u, p), Some(idx(v, p)), adm);
                if s == 0 {
                    let d = vd[Phase::from_index(p)] * adm;
                    rhs[idx(u, p)] += d;
                    rhs[idx(v, p)] -= d;
                }
            }
        }
        first_seg.push(segs[0]);
    }
    for (k, f) in state.faults.iter().enumerate() {
        let node = nb + k;
        for p in 0..3 {
            if let Some(z) = f.ground[p] {
                stamp(&mut y, idx(node, p), None, z.inv());
            }
        }
        for pp in &f.phase_pairs {
            stamp(&mut y, idx(node, pp.x.index()), Some(idx(node, pp.y.index())), pp.z.inv());
        }
    }
    let v = y.lu().solve(&rhs).expect("reference system is nonsingular");
    let bus_voltages = (0..nb)
        .map(|b| ThreePhaseSet::from_fn(|p| v[idx(b, p.index())]))
        .collect();
    let branch_currents = model
        .lines
        .iter()
        .zip(&first_seg)
        .map(|(l, &(u, w, z))| {
            let vd = state.injection(&l.id);
            ThreePhaseSet::from_fn(|p| (v[idx(u, p.index())] - v[idx(w, p.index())] - vd[p]) / z)
        })
        .collect();
    Reference {
        bus_voltages,
        branch_currents,
    }
}

/// Largest difference relative to the largest reference magnitude.
pub fn max_rel_error(got: &[ThreePhaseSet], want: &[ThreePhaseSet]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want
        .iter()
        .flat_map(|s| s.magnitudes())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    got.iter()
        .zip(want)
        .flat_map(|(g, w)| Phase::ALL.map(|p| (g[p] - w[p]).norm()))
        .fold(0.0f64, f64::max)
        / scale
}
