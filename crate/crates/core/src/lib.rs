//! Deterministic three-phase phasor simulator for studying how modular series
//! compensators (M-SSSC) interact with line distance protection.
//!
//! The crate is organised bottom-up:
//!
//! - [`net`] solves the quasi-static three-phase network every step.
//! - [`device`] models one single-phase compensator: injection law, capability
//!   curve, angle tracker and the OC / LOR bypass state machine.
//! - [`deployment`] groups devices into per-line three-phase deployments with
//!   interphase balancing and the relay-driven backup LOR.
//! - [`relay`] is a distance relay with mho zones and single-shot auto-reclose.
//! - [`scenario`] runs the fixed-step loop and produces traces and events.
//! - [`cosim`] moves device controllers behind a lock-step byte-stream link.
//! - [`io`] covers scenario files, run artifacts and fixture calibration.

pub mod cosim;
pub mod deployment;
pub mod device;
pub mod error;
pub mod io;
pub mod net;
pub mod phasor;
pub mod relay;
pub mod scenario;
pub mod time;

pub use error::{Error, Result};
pub use phasor::{Phase, Phasor, ThreePhaseSet};
pub use time::SimTime;
