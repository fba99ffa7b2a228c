//! Scenario description and the fixed-step simulation loop.

mod engine;
mod record;
mod spec;

pub use engine::{run, Simulation, FINAL_WINDOW_S};
pub use record::{DeviceSummary, EventRecord, LineSummary, MemorySink, NullSink, Summary, TraceSink};
pub use spec::{EventAction, FaultSpec, FaultStage, FaultType, FeatureFlags, ScenarioEvent, ScenarioSpec};
