//! Command-line front end: single runs, benchmark matrices and the
//! optimizer study.

use crate::error::Error;
use crate::geometry::{Intersection, Preset};
use crate::rdica::{exhaustive_optimize, ga_optimize, random_instance, GaParams, SeparationPolicy, DEFAULT_EXHAUSTIVE_CAP};
use crate::sim::output::{write_csv, write_run, MetricsRow};
use crate::sim::{run_scenario, Controller, RunOutput, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dtot", version, about = "Intersection coordination simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its artefacts.
    Run(RunArgs),
    /// Run a volume x seed x controller matrix and emit comparison tables.
    Bench(BenchArgs),
    /// Compare the GA with exhaustive search on random ordering instances.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "DTOT_OUT_DIR", default_value = "dtot-out")]
    pub out_dir: PathBuf,
    /// Overwrite existing artefacts.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected vehicles per 10 minutes.
    #[arg(long)]
    pub volume: Option<f64>,
    #[arg(long)]
    pub controller: Option<Controller>,
    /// Spawning period in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Keep stepping after the spawning period until the intersection is empty.
    #[arg(long)]
    pub drain: bool,
    /// Enable only one enhancement technique (enhanced controller).
    #[arg(long, value_parser = ["imp1", "imp2", "imp3", "imp4"])]
    pub ablate: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Suite {
    Complexity,
    Controllers,
    Optimizer,
    Ev,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Base scenario file (TOML); matrix axes override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![100.0, 200.0, 300.0, 400.0, 500.0])]
    pub volumes: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![12, 21, 66])]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Volume used by the complexity suite.
    #[arg(long, default_value_t = 300.0)]
    pub complexity_volume: f64,
    /// EV probability for the EV suite.
    #[arg(long, default_value_t = 0.02)]
    pub p_ev: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![Suite::All])]
    pub suite: Vec<Suite>,
    /// Instances for the optimizer suite.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Largest instance size; sizes are drawn from 2..=max_n.
    #[arg(long, default_value_t = 8)]
    pub max_n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the per-generation GA trace of every instance.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Runtime(_) | Error::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let res = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Optimize(a) => cmd_optimize(&a),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_base(path: Option<&Path>) -> CliResult<ScenarioConfig> {
    match path {
        Some(p) => Ok(ScenarioConfig::load(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

/// Refuses to reuse a directory that already holds `marker` unless forced.
fn prepare_out(out: &OutArgs, marker: &str) -> CliResult<()> {
    let m = out.out_dir.join(marker);
    if m.exists() && !out.force {
        return Err(CliError::Validation(format!("{} already exists; pass --force to overwrite", m.display())));
    }
    std::fs::create_dir_all(&out.out_dir).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn scenario_from_args(a: &RunArgs) -> CliResult<ScenarioConfig> {
    let mut cfg = load_base(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.volume {
        cfg.volume = v;
    }
    if let Some(c) = a.controller {
        cfg.controller = c;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    if a.drain {
        cfg.drain = true;
    }
    if a.ablate.is_some() {
        cfg.ablate = a.ablate.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let cfg = scenario_from_args(a)?;
    prepare_out(&a.out, "metrics.csv")?;
    let out = run_scenario(&cfg)?;
    write_run(&out, &a.out.out_dir)?;
    let m = &out.metrics;
    println!(
        "{} volume={} seed={} tau_bar={:.3} rho={:.4} tau_bar_e={:.3} generated={} crossed={}",
        cfg.controller, cfg.volume, cfg.seed, m.tau_bar, m.rho, m.tau_bar_e, m.generated, m.crossed
    );
    Ok(())
}

#[derive(Debug, Clone)]
struct Cell {
    run_id: String,
    cfg: ScenarioConfig,
}

fn run_id(cfg: &ScenarioConfig) -> String {
    let mut id = format!("{}-v{}-s{}", cfg.controller, cfg.volume, cfg.seed);
    if let Some(t) = &cfg.ablate {
        id = format!("{}_{t}-v{}-s{}", cfg.controller, cfg.volume, cfg.seed);
    }
    if cfg.p_ev > 0.0 {
        id.push_str(&format!("-ev{}", cfg.p_ev));
    }
    id
}

fn cell(base: &ScenarioConfig, controller: Controller, volume: f64, seed: u64, p_ev: f64, ablate: Option<&str>) -> Cell {
    let cfg = ScenarioConfig { controller, volume, seed, p_ev, ablate: ablate.map(str::to_string), ..base.clone() };
    Cell { run_id: run_id(&cfg), cfg }
}

#[derive(Serialize)]
struct ComplexityRow {
    volume: f64,
    seed: u64,
    variant: String,
    comparisons: u64,
    oti_evals: u64,
    comparisons_vs_dica: f64,
    run_id: String,
}

#[derive(Serialize)]
struct ComplexityWallRow {
    volume: f64,
    seed: u64,
    variant: String,
    coordinator_seconds: f64,
    wall_vs_dica: f64,
    run_id: String,
}

#[derive(Serialize)]
struct ControllerRow {
    volume: f64,
    controller: String,
    runs: usize,
    tau_bar: f64,
    sigma_tau: f64,
    rho: f64,
    eta: f64,
    tau_bar_e: f64,
    run_ids: String,
}

#[derive(Serialize)]
struct EvRow {
    volume: f64,
    controller: String,
    evs: usize,
    ev_tau_bar: f64,
    ev_tau_max: f64,
    normal_rho: f64,
    normal_tau_bar_e: f64,
    normal_tau_max: f64,
    run_ids: String,
}

#[derive(Serialize)]
struct FailureRow {
    run_id: String,
    error: String,
}

#[derive(Serialize, Clone)]
pub struct OptimizerRow {
    pub instance_id: usize,
    pub n: usize,
    pub n_ev: usize,
    pub ga_value: f64,
    pub es_value: f64,
    pub gap: f64,
    pub generations: usize,
    pub enumerated: u64,
}

#[derive(Serialize)]
struct OptimizerWallRow {
    instance_id: usize,
    ga_seconds: f64,
    es_seconds: f64,
}

#[derive(Serialize)]
struct TraceRow {
    instance_id: usize,
    generation: usize,
    best_te_ev: f64,
    mean_fitness: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn print_table(title: &str, path: &Path) {
    println!("== {title} ({})", path.display());
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let mut base = load_base(a.config.as_deref())?;
    if let Some(d) = a.duration {
        base.duration = d;
    }
    if a.volumes.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Validation("volumes and seeds must be non-empty".into()));
    }
    let all = a.suite.contains(&Suite::All);
    let want = |s: Suite| all || a.suite.contains(&s);
    prepare_out(&a.out, "bench_runs.csv")?;
    let dir = &a.out.out_dir;

    let mut cells: Vec<Cell> = Vec::new();
    if want(Suite::Complexity) {
        for &seed in &a.seeds {
            let v = a.complexity_volume;
            cells.push(cell(&base, Controller::Dica, v, seed, 0.0, None));
            cells.push(cell(&base, Controller::Enhanced, v, seed, 0.0, None));
            for t in ["imp1", "imp2", "imp3", "imp4"] {
                cells.push(cell(&base, Controller::Enhanced, v, seed, 0.0, Some(t)));
            }
        }
    }
    if want(Suite::Controllers) {
        for &v in &a.volumes {
            for &seed in &a.seeds {
                for c in [Controller::Enhanced, Controller::FixedTl] {
                    cells.push(cell(&base, c, v, seed, 0.0, None));
                }
            }
        }
    }
    if want(Suite::Ev) {
        for &v in &a.volumes {
            for &seed in &a.seeds {
                for c in [Controller::Dica, Controller::Rdica, Controller::ReactiveTl] {
                    cells.push(cell(&base, c, v, seed, a.p_ev, None));
                }
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    cells.retain(|c| seen.insert(c.run_id.clone()));
    for c in &cells {
        c.cfg.validate().map_err(|e| CliError::Validation(format!("{}: {e}", c.run_id)))?;
    }

    let results: Vec<(Cell, Result<RunOutput, Error>)> = cells
        .into_par_iter()
        .map(|c| {
            let r = run_scenario(&c.cfg).and_then(|out| {
                write_run(&out, &dir.join("runs").join(&c.run_id))?;
                Ok(out)
            });
            (c, r)
        })
        .collect();
    let mut ok: BTreeMap<String, RunOutput> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (c, r) in results {
        match r {
            Ok(out) => {
                rows.push(MetricsRow::from_run(&out));
                ok.insert(c.run_id, out);
            }
            Err(e) => failures.push(FailureRow { run_id: c.run_id, error: e.to_string() }),
        }
    }
    write_csv(&dir.join("bench_runs.csv"), &rows)?;
    let get = |c: Controller, v: f64, s: u64, p_ev: f64, abl: Option<&str>| ok.get(&cell(&base, c, v, s, p_ev, abl).run_id);

    if want(Suite::Complexity) {
        let v = a.complexity_volume;
        let mut table = Vec::new();
        let mut wall = Vec::new();
        for &seed in &a.seeds {
            let Some(d) = get(Controller::Dica, v, seed, 0.0, None) else { continue };
            let variants = [None, Some("imp1"), Some("imp2"), Some("imp3"), Some("imp4")];
            let mut entries = vec![("dica".to_string(), d, run_id(&d.config))];
            for abl in variants {
                if let Some(e) = get(Controller::Enhanced, v, seed, 0.0, abl) {
                    entries.push((abl.map_or("enhanced".into(), |t| format!("only_{t}")), e, run_id(&e.config)));
                }
            }
            for (variant, o, id) in entries {
                table.push(ComplexityRow {
                    volume: v,
                    seed,
                    variant: variant.clone(),
                    comparisons: o.summary.comparisons,
                    oti_evals: o.summary.oti_evals,
                    comparisons_vs_dica: o.summary.comparisons as f64 / d.summary.comparisons.max(1) as f64,
                    run_id: id.clone(),
                });
                wall.push(ComplexityWallRow {
                    volume: v,
                    seed,
                    variant,
                    coordinator_seconds: o.coordinator_wall,
                    wall_vs_dica: o.coordinator_wall / d.coordinator_wall.max(1e-12),
                    run_id: id,
                });
            }
        }
        write_csv(&dir.join("complexity.csv"), &table)?;
        write_csv(&dir.join("complexity_wall.csv"), &wall)?;
        print_table("comparison counts, dica vs enhanced and single techniques", &dir.join("complexity.csv"));
        print_table("coordinator wall time", &dir.join("complexity_wall.csv"));
    }

    let aggregate = |controllers: &[Controller], p_ev: f64| {
        let mut out = Vec::new();
        for &v in &a.volumes {
            for &c in controllers {
                let runs: Vec<&RunOutput> = a.seeds.iter().filter_map(|&s| get(c, v, s, p_ev, None)).collect();
                if !runs.is_empty() {
                    out.push((v, c, runs));
                }
            }
        }
        out
    };

    if want(Suite::Controllers) {
        let table: Vec<ControllerRow> = aggregate(&[Controller::Enhanced, Controller::FixedTl], 0.0)
            .into_iter()
            .map(|(v, c, runs)| ControllerRow {
                volume: v,
                controller: c.to_string(),
                runs: runs.len(),
                tau_bar: mean(runs.iter().map(|r| r.metrics.tau_bar)),
                sigma_tau: mean(runs.iter().map(|r| r.metrics.sigma_tau)),
                rho: mean(runs.iter().map(|r| r.metrics.rho)),
                eta: mean(runs.iter().map(|r| r.metrics.eta)),
                tau_bar_e: mean(runs.iter().map(|r| r.metrics.tau_bar_e)),
                run_ids: runs.iter().map(|r| run_id(&r.config)).collect::<Vec<_>>().join(";"),
            })
            .collect();
        write_csv(&dir.join("controllers.csv"), &table)?;
        print_table("controller performance", &dir.join("controllers.csv"));
    }

    if want(Suite::Ev) {
        let table: Vec<EvRow> = aggregate(&[Controller::Dica, Controller::Rdica, Controller::ReactiveTl], a.p_ev)
            .into_iter()
            .map(|(v, c, runs)| {
                let evs: usize = runs.iter().map(|r| r.metrics.ev.count).sum();
                let ev_sum: f64 = runs.iter().map(|r| r.metrics.ev.tau_bar * r.metrics.ev.count as f64).sum();
                EvRow {
                    volume: v,
                    controller: c.to_string(),
                    evs,
                    ev_tau_bar: if evs > 0 { ev_sum / evs as f64 } else { 0.0 },
                    ev_tau_max: runs.iter().map(|r| r.metrics.ev.tau_max).fold(0.0, f64::max),
                    normal_rho: mean(runs.iter().map(|r| r.metrics.rho_normal)),
                    normal_tau_bar_e: mean(runs.iter().map(|r| r.metrics.normal.tau_bar / r.metrics.rho_normal.max(1e-12))),
                    normal_tau_max: mean(runs.iter().map(|r| r.metrics.normal.tau_max)),
                    run_ids: runs.iter().map(|r| run_id(&r.config)).collect::<Vec<_>>().join(";"),
                }
            })
            .collect();
        write_csv(&dir.join("ev.csv"), &table)?;
        print_table("emergency and normal vehicles", &dir.join("ev.csv"));
    }

    if want(Suite::Optimizer) {
        let seed = a.seeds[0];
        let (rows, walls, _) = optimizer_study(a.instances, 8, seed)?;
        write_csv(&dir.join("optimizer.csv"), &rows)?;
        write_csv(&dir.join("optimizer_wall.csv"), &walls)?;
        print_table("GA vs exhaustive search", &dir.join("optimizer.csv"));
    }

    write_csv(&dir.join("failures.csv"), &failures)?;
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("run {} failed: {}", f.run_id, f.error);
        }
        return Err(CliError::Runtime(format!("{} of the matrix cells failed", failures.len())));
    }
    Ok(())
}

type Study = (Vec<OptimizerRow>, Vec<OptimizerWallRow>, Vec<TraceRow>);

fn optimizer_study(instances: usize, max_n: usize, seed: u64) -> CliResult<Study> {
    if max_n < 2 {
        return Err(CliError::Validation("max-n must be at least 2".into()));
    }
    let ix = Intersection::standard(Preset::ThreeInTwoOut);
    let policy = SeparationPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut walls = Vec::new();
    let mut traces = Vec::new();
    for id in 0..instances {
        let n = rng.gen_range(2..=max_n);
        let n_ev = rng.gen_range(1..=n.min(4));
        let set = random_instance(&mut rng, &ix, n, n_ev)?;
        let params = GaParams { seed: seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), ..GaParams::default() };
        let t0 = Instant::now();
        let ga = ga_optimize(&set, &params, &policy)?;
        let t1 = Instant::now();
        let es = exhaustive_optimize(&set, &policy, DEFAULT_EXHAUSTIVE_CAP)?;
        let t2 = Instant::now();
        rows.push(OptimizerRow {
            instance_id: id,
            n,
            n_ev,
            ga_value: ga.te_ev,
            es_value: es.te_ev,
            gap: ga.te_ev - es.te_ev,
            generations: ga.generations,
            enumerated: es.enumerated,
        });
        walls.push(OptimizerWallRow {
            instance_id: id,
            ga_seconds: (t1 - t0).as_secs_f64(),
            es_seconds: (t2 - t1).as_secs_f64(),
        });
        traces.extend(ga.trace.iter().map(|g| TraceRow {
            instance_id: id,
            generation: g.generation,
            best_te_ev: g.best_te_ev,
            mean_fitness: g.mean_fitness,
        }));
    }
    Ok((rows, walls, traces))
}

pub fn cmd_optimize(a: &OptimizeArgs) -> CliResult<()> {
    prepare_out(&a.out, "optimizer.csv")?;
    let (rows, walls, traces) = optimizer_study(a.instances, a.max_n, a.seed)?;
    let dir = &a.out.out_dir;
    write_csv(&dir.join("optimizer.csv"), &rows)?;
    write_csv(&dir.join("optimizer_wall.csv"), &walls)?;
    if a.trace {
        write_csv(&dir.join("ga_trace.csv"), &traces)?;
    }
    let optimal = rows.iter().filter(|r| r.gap.abs() <= 1e-9).count();
    println!("{optimal}/{} instances solved optimally by the GA", rows.len());
    Ok(())
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}
