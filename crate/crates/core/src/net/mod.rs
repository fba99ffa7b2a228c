//! Three-phase quasi-static phasor network.
//!
//! Phases are electrically decoupled except through phase-to-phase fault
//! shunts. Each step the network is reduced to one dense complex system in
//! modified-nodal form (node voltages plus currents of zero-impedance
//! elements) and solved by LU with partial pivoting.

mod lu;
mod model;
mod solver;
mod state;

pub use lu::{ComplexLu, LuError};
pub use model::{Bus, Line, Load, NetworkModel, Source};
pub use solver::{
    build_system, norton_pair, solve_step, BranchTerminal, LinearSystem, Solution, SolveError, Solver,
    SolverOptions,
};
pub use state::{FaultShunt, NetworkState, PhasePairShunt};
