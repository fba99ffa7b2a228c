use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::Result;

/// One logged state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_s: f64,
    pub source: String,
    pub name: String,
    pub detail: String,
}

/// Receives the trace and events as the run progresses.
pub trait TraceSink {
    fn header(&mut self, columns: &[String]) -> Result<()>;
    fn record(&mut self, t_s: f64, values: &[f64]) -> Result<()>;
    fn event(&mut self, event: &EventRecord) -> Result<()>;
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn header(&mut self, _: &[String]) -> Result<()> {
        Ok(())
    }
    fn record(&mut self, _: f64, _: &[f64]) -> Result<()> {
        Ok(())
    }
    fn event(&mut self, _: &EventRecord) -> Result<()> {
        Ok(())
    }
}

/// Keeps the whole run in memory. Fine for short runs and tests.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<f64>)>,
    pub events: Vec<EventRecord>,
}

impl MemorySink {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column (by name, excluding `t_s`).
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column(name)?;
        Some(self.rows.iter().map(|(_, v)| v[k]).collect())
    }
}

impl TraceSink for MemorySink {
    fn header(&mut self, columns: &[String]) -> Result<()> {
        self.columns = columns.to_vec();
        Ok(())
    }
    fn record(&mut self, t_s: f64, values: &[f64]) -> Result<()> {
        self.rows.push((t_s, values.to_vec()));
        Ok(())
    }
    fn event(&mut self, event: &EventRecord) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

impl<T: TraceSink + ?Sized> TraceSink for &mut T {
    fn header(&mut self, columns: &[String]) -> Result<()> {
        (**self).header(columns)
    }
    fn record(&mut self, t_s: f64, values: &[f64]) -> Result<()> {
        (**self).record(t_s, values)
    }
    fn event(&mut self, event: &EventRecord) -> Result<()> {
        (**self).event(event)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub line_id: String,
    pub max_current_ka: f64,
    /// Mean |I| over the last second, per phase.
    pub final_window_mean_ka: [f64; 3],
    pub thermal_limit_ka: f64,
    pub overloaded: bool,
}

impl LineSummary {
    pub fn final_window_max_ka(&self) -> f64 {
        self.final_window_mean_ka.iter().fold(0.0, |a, &b| a.max(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub deployment: String,
    pub phase: String,
    pub index: usize,
    pub time_in_state_s: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    /// Hash of the scenario content the run was started from.
    pub fingerprint: String,
    pub completed: bool,
    pub abort_reason: Option<String>,
    pub steps: u64,
    pub dt_s: f64,
    pub t_end_s: f64,
    pub lines: Vec<LineSummary>,
    pub overload: bool,
    pub devices: Vec<DeviceSummary>,
    pub relay_timeline: Vec<EventRecord>,
    pub kcl_residual_max: f64,
}

impl Summary {
    pub fn line(&self, id: &str) -> Option<&LineSummary> {
        self.lines.iter().find(|l| l.line_id == id)
    }
}
