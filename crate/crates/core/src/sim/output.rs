use super::events::EventKind;
use super::world::RunOutput;
use crate::error::{Error, Result};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub volume: f64,
    pub seed: u64,
    pub controller: String,
    pub tau_bar: f64,
    pub sigma_tau: f64,
    pub rho: f64,
    pub eta: f64,
    pub tau_bar_e: f64,
}

impl MetricsRow {
    pub fn from_run(out: &RunOutput) -> MetricsRow {
        let m = &out.metrics;
        MetricsRow {
            volume: out.config.volume,
            seed: out.config.seed,
            controller: out.config.controller.name().to_string(),
            tau_bar: m.tau_bar,
            sigma_tau: m.sigma_tau,
            rho: m.rho,
            eta: m.eta,
            tau_bar_e: m.tau_bar_e,
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PerfRow<'a> {
    request_id: u64,
    vin: u64,
    algorithm: &'a str,
    n: usize,
    n_filtered: usize,
    n_occ: usize,
    n_restricted: usize,
    comparisons: u64,
    oti_evals: u64,
}

#[derive(Serialize)]
struct SignalRow {
    t: f64,
    approach: char,
    movement: char,
    color: &'static str,
}

#[derive(Serialize)]
struct WallRow {
    request_id: u64,
    wall_seconds: f64,
}

/// Writes every artefact of a run into `dir` and returns the paths.
/// Wall-clock timings go to their own file so the rest is reproducible.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let p = |name: &str| dir.join(name);
    write_csv(&p("metrics.csv"), &[MetricsRow::from_run(out)])?;
    write_jsonl(&p("events.jsonl"), &out.log)?;
    write_csv(&p("min_distance.csv"), &out.min_distance)?;
    write_csv(&p("flow.csv"), &out.flow)?;
    let perf: Vec<PerfRow> = out
        .perf
        .iter()
        .map(|c| PerfRow {
            request_id: c.request_id,
            vin: c.vin,
            algorithm: &c.algorithm,
            n: c.n,
            n_filtered: c.n_filtered,
            n_occ: c.n_occ,
            n_restricted: c.n_restricted,
            comparisons: c.comparisons,
            oti_evals: c.oti_evals,
        })
        .collect();
    write_csv(&p("perf.csv"), &perf)?;
    let wall: Vec<WallRow> =
        out.perf.iter().map(|c| WallRow { request_id: c.request_id, wall_seconds: c.wall_seconds }).collect();
    write_csv(&p("perf_wall.csv"), &wall)?;
    let signals: Vec<SignalRow> = out
        .log
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Signal { approach, movement, color } => {
                Some(SignalRow { t: e.t, approach: approach.code(), movement: movement.code(), color: color.name() })
            }
            _ => None,
        })
        .collect();
    let mut names = vec!["metrics.csv", "events.jsonl", "min_distance.csv", "flow.csv", "perf.csv", "perf_wall.csv"];
    if !signals.is_empty() {
        write_csv(&p("signals.csv"), &signals)?;
        names.push("signals.csv");
    }
    let summary = serde_json::json!({
        "config": &out.config,
        "metrics": &out.metrics,
        "summary": &out.summary,
    });
    std::fs::write(p("summary.json"), serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?)?;
    std::fs::write(p("config.toml"), out.config.to_toml())?;
    names.extend(["summary.json", "config.toml"]);
    Ok(names.into_iter().map(p).collect())
}
