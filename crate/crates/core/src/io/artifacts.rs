use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{EventRecord, MemorySink, Summary, TraceSink};

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

const MAG_SUFFIX: &str = ".i_mag_kA";
/// Plots keep one point per this many trace rows.
const PLOT_DECIMATION: usize = 20;
const COLUMNS_PER_PHASE: usize = 5;

/// Where a run's outputs ended up.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunArtifacts {
    pub trace: PathBuf,
    pub events: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
    pub fingerprint: String,
}

pub fn csv_header(columns: &[String]) -> String {
    let mut s = String::from("t_s");
    for c in columns {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    s
}

pub fn csv_row(t_s: f64, values: &[f64]) -> String {
    let mut s = String::with_capacity(16 * (values.len() + 1));
    let _ = write!(s, "{t_s}");
    for v in values {
        let _ = write!(s, ",{v}");
    }
    s.push('\n');
    s
}

pub fn event_line(e: &EventRecord) -> String {
    let mut s = serde_json::to_string(e).expect("event serializes");
    s.push('\n');
    s
}

/// Streams the trace and events to files in `dir` while the run progresses.
pub struct ArtifactSink {
    dir: PathBuf,
    trace: BufWriter<File>,
    events: BufWriter<File>,
    plots: bool,
    /// Column of phase a |I| per monitored line.
    plot_cols: BTreeMap<String, usize>,
    /// Decimated |I| rows, three values per plotted line.
    plot_data: Vec<(f64, Vec<f64>)>,
    rows: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

impl ArtifactSink {
    pub fn create(dir: impl AsRef<Path>, plots: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ArtifactSink {
            trace: create(&dir.join(TRACE_FILE))?,
            events: create(&dir.join(EVENTS_FILE))?,
            dir,
            plots,
            plot_cols: BTreeMap::new(),
            plot_data: Vec::new(),
            rows: 0,
        })
    }

    /// Flushes the streams and writes the summary and plots.
    pub fn finish(mut self, summary: &Summary) -> Result<RunArtifacts> {
        let trace = self.dir.join(TRACE_FILE);
        let events = self.dir.join(EVENTS_FILE);
        self.trace.flush().map_err(|e| Error::io(&trace, e))?;
        self.events.flush().map_err(|e| Error::io(&events, e))?;
        let summary_path = write_summary(&self.dir, summary)?;
        let mut plots = Vec::new();
        if self.plots {
            for (j, line) in self.plot_cols.keys().enumerate() {
                let series: Vec<(String, Vec<(f64, f64)>)> = ["a", "b", "c"]
                    .iter()
                    .enumerate()
                    .map(|(p, name)| {
                        let pts = self.plot_data.iter().map(|(t, v)| (*t, v[3 * j + p])).collect();
                        (format!("phase {name}"), pts)
                    })
                    .collect();
                plots.push(write_plot(&self.dir, line, &series)?);
            }
        }
        Ok(RunArtifacts {
            trace,
            events,
            summary: summary_path,
            plots,
            fingerprint: summary.fingerprint.clone(),
        })
    }
}

impl TraceSink for ArtifactSink {
    fn header(&mut self, columns: &[String]) -> Result<()> {
        self.plot_cols.clear();
        for (k, c) in columns.iter().enumerate() {
            if let Some(line) = c.strip_suffix(&format!(".a{MAG_SUFFIX}")) {
                self.plot_cols.insert(line.to_string(), k);
            }
        }
        let path = self.dir.join(TRACE_FILE);
        self.trace
            .write_all(csv_header(columns).as_bytes())
            .map_err(|e| Error::io(&path, e))
    }

    fn record(&mut self, t_s: f64, values: &[f64]) -> Result<()> {
        if self.plots && self.rows % PLOT_DECIMATION == 0 {
            let mut v = Vec::with_capacity(self.plot_cols.len() * 3);
            for &col in self.plot_cols.values() {
                for p in 0..3 {
                    v.push(values[col + COLUMNS_PER_PHASE * p]);
                }
            }
            self.plot_data.push((t_s, v));
        }
        self.rows += 1;
        let path = self.dir.join(TRACE_FILE);
        self.trace
            .write_all(csv_row(t_s, values).as_bytes())
            .map_err(|e| Error::io(&path, e))
    }

    fn event(&mut self, event: &EventRecord) -> Result<()> {
        let path = self.dir.join(EVENTS_FILE);
        self.events
            .write_all(event_line(event).as_bytes())
            .map_err(|e| Error::io(&path, e))
    }
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<PathBuf> {
    let path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_plot(dir: &Path, line: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<PathBuf> {
    let safe: String = line
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let path = dir.join(format!("current_{safe}.svg"));
    let svg = render_plot(&format!("|I| on {line} (kA)"), series);
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes a run held in memory to `dir`.
pub fn write_outputs(trace: &MemorySink, summary: &Summary, dir: impl AsRef<Path>, plots: bool) -> Result<RunArtifacts> {
    let mut sink = ArtifactSink::create(dir, plots)?;
    sink.header(&trace.columns)?;
    for (t, v) in &trace.rows {
        sink.record(*t, v)?;
    }
    for e in &trace.events {
        sink.event(e)?;
    }
    sink.finish(summary)
}

/// A static line chart. Series share the axes.
pub fn render_plot(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 30.0;
    const B: f64 = 40.0;
    const COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b"];

    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        if y.is_finite() {
            y1 = y1.max(y);
        }
    }
    if !(x0.is_finite() && x1 > x0) {
        x0 = 0.0;
        x1 = 1.0;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    y1 *= 1.05;
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - y / y1 * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for k in 0..=4 {
        let y = y1 * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#,
            L - 6.0,
            sy(y) + 4.0,
            y
        );
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{:.1}</text>"#,
            sx(x),
            H - B + 16.0,
            x
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t (s)</text>"#, W / 2.0, H - 6.0);
    for (k, (name, p)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (j, &(x, y)) in p.iter().enumerate() {
            let y = if y.is_finite() { y } else { 0.0 };
            let _ = write!(d, "{}{:.2} {:.2}", if j == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - R - 70.0,
            T + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_shortest_float_form() {
        assert_eq!(csv_header(&["x".into(), "y".into()]), "t_s,x,y\n");
        assert_eq!(csv_row(0.00025, &[1.0, -0.1]), "0.00025,1,-0.1\n");
    }

    #[test]
    fn event_line_field_order() {
        let e = EventRecord {
            t_s: 1.5,
            source: "r1".into(),
            name: "trip".into(),
            detail: "zone1".into(),
        };
        assert_eq!(event_line(&e), "{\"t_s\":1.5,\"source\":\"r1\",\"name\":\"trip\",\"detail\":\"zone1\"}\n");
    }

    #[test]
    fn plot_is_well_formed_svg() {
        let svg = render_plot("a<b", &[("s".into(), vec![(0.0, 0.0), (1.0, 2.0)])]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
    }
}
