//! Scenario files, run artifacts, the calibrated study fixture.

mod artifacts;
mod calibrate;
mod fixtures;
mod violations;

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::ScenarioSpec;

pub use artifacts::{
    csv_header, csv_row, event_line, render_plot, write_outputs, ArtifactSink, RunArtifacts, EVENTS_FILE,
    SUMMARY_FILE, TRACE_FILE,
};
pub use calibrate::{
    calibrate, calibrate_static, post_contingency_oracle, simulate_contingency, Calibration, CalibrationTargets, FlowBand,
};
pub use fixtures::{gcm_network, GcmCase, GcmTopology, EQ, GJ, GJ_TC, SM, SM_EQ, SM_GJ, SM_TC, TC};
pub use violations::{ValidationErrors, Violation, Violations};

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(text, s.start))
            .unwrap_or((0, 0));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    spec.validate().map_err(Error::Invalid)?;
    Ok(spec)
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Canonical text form; `parse_scenario(&to_toml(s))` gives back `s`.
pub fn scenario_to_toml(spec: &ScenarioSpec) -> String {
    toml::to_string(spec).expect("scenario serializes to TOML")
}

pub fn save_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_toml(spec)).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of raw bytes.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fingerprint of the canonical form of a scenario.
pub fn fingerprint_spec(spec: &ScenarioSpec) -> String {
    fingerprint_bytes(scenario_to_toml(spec).as_bytes())
}
