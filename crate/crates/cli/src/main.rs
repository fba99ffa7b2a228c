use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use seriescomp_core::cosim::{self, DeviceLink, DEFAULT_TIMEOUT_MS};
use seriescomp_core::io::{self, ArtifactSink, CalibrationTargets, GcmCase, GcmTopology, RunArtifacts};
use seriescomp_core::scenario::{ScenarioSpec, Simulation, Summary};
use seriescomp_core::Error;

const EXIT_INVALID: u8 = 1;
const EXIT_RUN_FAILED: u8 = 2;
const EXIT_TARGET_MISSED: u8 = 3;
const EXIT_DIFFERENT: u8 = 4;

#[derive(Parser)]
#[command(name = "seriescomp", version, about = "Series compensator and distance protection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, events.jsonl, summary.json and plots.
    Run {
        spec: PathBuf,
        /// Output directory (default: $SERIESCOMP_OUT_DIR/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SERIESCOMP_OUT_DIR", default_value = "out", hide_env_values = true)]
        out_root: PathBuf,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
        /// Reply timeout for remote controllers (ms).
        #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
        link_timeout_ms: u64,
    },
    /// Fit the study network to the current targets and write the result.
    Calibrate {
        /// Targets file (TOML); defaults are used when omitted.
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Topology file (TOML); the built-in one is used when omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the three study-case scenarios into this directory.
        #[arg(long)]
        emit_cases: Option<PathBuf>,
    },
    /// Field-wise comparison of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        abs_tol: f64,
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
        /// Differences to print before stopping.
        #[arg(long, default_value_t = 20)]
        max_report: usize,
    },
    /// Run a scenario once per value of one parameter, in parallel.
    Sweep {
        spec: PathBuf,
        /// Dotted path into the scenario document, e.g. `deployments.1.command.x_set_ohm`.
        #[arg(long)]
        param: String,
        /// Comma-separated values (TOML literals).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SERIESCOMP_OUT_DIR", default_value = "out", hide_env_values = true)]
        out_root: PathBuf,
    },
    /// Serve one deployment's devices over stdin/stdout (started by `run`).
    Controller {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        deployment: String,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Invalid(_) | Error::Parse { .. }) => EXIT_INVALID,
        Some(Error::Calibration(_)) => EXIT_TARGET_MISSED,
        _ => EXIT_RUN_FAILED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            spec,
            out,
            out_root,
            no_plots,
            link_timeout_ms,
        } => cmd_run(&spec, out, &out_root, !no_plots, link_timeout_ms),
        Command::Calibrate {
            targets,
            topology,
            out,
            emit_cases,
        } => cmd_calibrate(targets.as_deref(), topology.as_deref(), &out, emit_cases.as_deref()),
        Command::Compare {
            run_a,
            run_b,
            abs_tol,
            rel_tol,
            max_report,
        } => cmd_compare(&run_a, &run_b, abs_tol, rel_tol, max_report),
        Command::Sweep {
            spec,
            param,
            values,
            out,
            out_root,
        } => cmd_sweep(&spec, &param, &values, out, &out_root),
        Command::Controller { spec, deployment } => cmd_controller(&spec, &deployment),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_spec(path: &Path) -> anyhow::Result<(ScenarioSpec, String)> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let spec = io::parse_scenario(&text)?;
    Ok((spec, io::fingerprint_bytes(text.as_bytes())))
}

/// Runs a loaded scenario into `dir`. Remote deployments get a controller
/// process started from this executable.
fn execute(
    spec: ScenarioSpec,
    fingerprint: String,
    spec_path: &Path,
    dir: &Path,
    plots: bool,
    timeout_ms: u64,
) -> anyhow::Result<(RunArtifacts, Summary)> {
    let mut links: BTreeMap<String, Box<dyn DeviceLink>> = BTreeMap::new();
    let remote: Vec<String> = spec.deployments.iter().filter(|d| d.remote).map(|d| d.id.clone()).collect();
    if !remote.is_empty() {
        let exe = std::env::current_exe().context("locating the executable for controller processes")?;
        for id in remote {
            let link = cosim::spawn_controller(&exe, spec_path, &id, timeout_ms).map_err(|source| Error::Link {
                t_s: 0.0,
                source,
            })?;
            links.insert(id, Box::new(link));
        }
    }
    let mut sim = Simulation::new(spec, links)?;
    sim.set_fingerprint(fingerprint);
    let mut sink = ArtifactSink::create(dir, plots)?;
    let summary = sim.run_with(&mut sink)?;
    let artifacts = sink.finish(&summary)?;
    Ok((artifacts, summary))
}

fn cmd_run(spec_path: &Path, out: Option<PathBuf>, out_root: &Path, plots: bool, timeout_ms: u64) -> anyhow::Result<u8> {
    let (spec, fingerprint) = read_spec(spec_path)?;
    let dir = out.unwrap_or_else(|| out_root.join(run_dir_name(&spec, spec_path)));
    let started = std::time::Instant::now();
    let (artifacts, summary) = execute(spec, fingerprint, spec_path, &dir, plots, timeout_ms)?;
    println!("scenario   {}", summary.scenario);
    println!("steps      {} ({:.3} s wall)", summary.steps, started.elapsed().as_secs_f64());
    for l in &summary.lines {
        println!(
            "line       {:<8} max {:.4} kA, final window {:.4} kA, limit {:.4} kA{}",
            l.line_id,
            l.max_current_ka,
            l.final_window_max_ka(),
            l.thermal_limit_ka,
            if l.overloaded { "  OVERLOAD" } else { "" }
        );
    }
    println!("trace      {}", artifacts.trace.display());
    println!("events     {}", artifacts.events.display());
    println!("summary    {}", artifacts.summary.display());
    for p in &artifacts.plots {
        println!("plot       {}", p.display());
    }
    if !summary.completed {
        eprintln!(
            "run aborted: {}",
            summary.abort_reason.as_deref().unwrap_or("unknown reason")
        );
        return Ok(EXIT_RUN_FAILED);
    }
    Ok(0)
}

fn run_dir_name(spec: &ScenarioSpec, path: &Path) -> String {
    if spec.name.is_empty() {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    } else {
        spec.name.clone()
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| {
        anyhow!(Error::Parse {
            line: 0,
            column: 0,
            message: format!("{}: {}", path.display(), e),
        })
    })
}

fn cmd_calibrate(
    targets: Option<&Path>,
    topology: Option<&Path>,
    out: &Path,
    emit_cases: Option<&Path>,
) -> anyhow::Result<u8> {
    let targets: CalibrationTargets = match targets {
        Some(p) => read_toml(p)?,
        None => CalibrationTargets::default(),
    };
    let topology: GcmTopology = match topology {
        Some(p) => read_toml(p)?,
        None => GcmTopology::default(),
    };
    let cal = io::calibrate(&topology, &targets)?;
    let text = toml::to_string(&cal).context("serializing calibration")?;
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("angle spread        {:.6} deg", cal.delta_deg);
    println!("deployment X        {:.6} ohm/phase ({:.6} per device)", cal.x_total_ohm, cal.x_set_per_device_ohm);
    println!(
        "post-contingency    {:.4} kA off, {:.4} kA on",
        cal.post_contingency_off_ka, cal.post_contingency_on_ka
    );
    if let (Some(off), Some(on)) = (cal.simulated_off_ka, cal.simulated_on_ka) {
        println!("simulated           {off:.4} kA off, {on:.4} kA on");
    }
    println!("written             {}", out.display());
    if let Some(dir) = emit_cases {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for case in GcmCase::ALL {
            let path = dir.join(format!("{}.toml", case.name()));
            io::save_scenario(&case.scenario(&cal), &path)?;
            println!("case                {}", path.display());
        }
    }
    Ok(0)
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .collect::<Result<_, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn cmd_compare(a: &Path, b: &Path, abs_tol: f64, rel_tol: f64, max_report: usize) -> anyhow::Result<u8> {
    let ta = read_lines(&a.join(io::TRACE_FILE))?;
    let tb = read_lines(&b.join(io::TRACE_FILE))?;
    let (Some(ha), Some(hb)) = (ta.first(), tb.first()) else {
        bail!("empty trace file");
    };
    if ha != hb {
        println!("trace columns differ");
        return Ok(EXIT_DIFFERENT);
    }
    let cols: Vec<&str> = ha.split(',').collect();
    let mut diffs = 0usize;
    let mut worst = 0.0f64;
    if ta.len() != tb.len() {
        println!("trace lengths differ: {} vs {} rows", ta.len() - 1, tb.len() - 1);
        diffs += 1;
    }
    for (row, (ra, rb)) in ta.iter().zip(&tb).enumerate().skip(1) {
        for (k, (x, y)) in ra.split(',').zip(rb.split(',')).enumerate() {
            if x == y {
                continue;
            }
            let (xv, yv): (f64, f64) = (x.parse()?, y.parse()?);
            let d = (xv - yv).abs();
            if d <= abs_tol.max(rel_tol * xv.abs().max(yv.abs())) {
                continue;
            }
            worst = worst.max(d);
            if diffs < max_report {
                println!("row {row} {}: {x} vs {y}", cols.get(k).unwrap_or(&"?"));
            }
            diffs += 1;
        }
    }
    let ea = read_lines(&a.join(io::EVENTS_FILE))?;
    let eb = read_lines(&b.join(io::EVENTS_FILE))?;
    let event_diffs = ea.iter().zip(&eb).filter(|(x, y)| x != y).count() + ea.len().abs_diff(eb.len());
    if event_diffs > 0 {
        println!("events differ on {event_diffs} lines");
    }
    if diffs == 0 && event_diffs == 0 {
        println!("traces match ({} rows)", ta.len() - 1);
        Ok(0)
    } else {
        println!("{diffs} trace differences, largest {worst}");
        Ok(EXIT_DIFFERENT)
    }
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*part).ok_or_else(|| anyhow!("no key '{part}' in '{path}'"))?
            }
            toml::Value::Array(a) => {
                let i: usize = part.parse().with_context(|| format!("'{part}' is not an index in '{path}'"))?;
                let len = a.len();
                let slot = a.get_mut(i).ok_or_else(|| anyhow!("index {i} out of range ({len}) in '{path}'"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("'{part}' in '{path}' is not inside a table or array"),
        };
    }
    Ok(())
}

fn parse_literal(s: &str) -> toml::Value {
    let s = s.trim();
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

fn cmd_sweep(spec_path: &Path, param: &str, values: &[String], out: Option<PathBuf>, out_root: &Path) -> anyhow::Result<u8> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let (base, _) = read_spec(spec_path)?;
    let root = out.unwrap_or_else(|| out_root.join(format!("{}_sweep", run_dir_name(&base, spec_path))));
    let doc: toml::Value = toml::from_str(&text).context("parsing scenario")?;
    let mut variants = Vec::new();
    for v in values {
        let mut d = doc.clone();
        set_path(&mut d, param, parse_literal(v))?;
        let variant_text = toml::to_string(&d).context("serializing variant")?;
        let spec = io::parse_scenario(&variant_text)?;
        let dir = root.join(format!("{param}={}", v.trim()));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("scenario.toml");
        fs::write(&path, &variant_text).with_context(|| format!("writing {}", path.display()))?;
        variants.push((v.trim().to_string(), spec, io::fingerprint_bytes(variant_text.as_bytes()), path, dir));
    }
    let results: Vec<_> = variants
        .into_par_iter()
        .map(|(v, spec, fp, path, dir)| (v, execute(spec, fp, &path, &dir, false, DEFAULT_TIMEOUT_MS)))
        .collect();
    let mut failed = false;
    for (v, r) in results {
        match r {
            Ok((artifacts, summary)) => {
                let lines: Vec<String> = summary
                    .lines
                    .iter()
                    .map(|l| format!("{} {:.4}", l.line_id, l.final_window_max_ka()))
                    .collect();
                println!(
                    "{param}={v}: {} overload={} [{}] -> {}",
                    if summary.completed { "completed" } else { "aborted" },
                    summary.overload,
                    lines.join(", "),
                    artifacts.summary.parent().unwrap_or(Path::new(".")).display()
                );
                failed |= !summary.completed;
            }
            Err(e) => {
                println!("{param}={v}: failed: {e:#}");
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_RUN_FAILED } else { 0 })
}

fn cmd_controller(spec_path: &Path, deployment: &str) -> anyhow::Result<u8> {
    let (spec, _) = read_spec(spec_path)?;
    let cfg = spec
        .deployment(deployment)
        .ok_or_else(|| anyhow!("no deployment '{deployment}' in {}", spec_path.display()))?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    cosim::serve_controller(stdin, stdout, cfg, spec.dt_s).map_err(|source| Error::Link { t_s: 0.0, source })?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_path_walks_tables_and_arrays() {
        let mut doc: toml::Value = toml::from_str("a = [{ b = 1 }, { b = 2 }]").unwrap();
        set_path(&mut doc, "a.1.b", toml::Value::Float(2.5)).unwrap();
        assert_eq!(doc["a"][1]["b"].as_float(), Some(2.5));
        assert!(set_path(&mut doc, "a.5.b", toml::Value::Integer(0)).is_err());
        assert!(set_path(&mut doc, "x.y", toml::Value::Integer(0)).is_err());
    }

    #[test]
    fn literals_fall_back_to_strings() {
        assert_eq!(parse_literal("1.5"), toml::Value::Float(1.5));
        assert_eq!(parse_literal("true"), toml::Value::Boolean(true));
        assert_eq!(parse_literal("fixed_voltage"), toml::Value::String("fixed_voltage".into()));
    }
}
