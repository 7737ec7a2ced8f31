use std::path::Path;
use std::process::{Command, Output};

fn dtot(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtot")).args(args).env("DTOT_OUT_DIR", out).output().expect("spawn dtot")
}

#[test]
fn run_writes_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtot(&["run", "--volume", "200", "--duration", "60", "--controller", "enhanced"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("tau_bar=") && line.contains("rho=") && line.contains("tau_bar_e="), "{line}");
    for f in ["metrics.csv", "events.jsonl", "min_distance.csv", "flow.csv", "perf.csv", "summary.json", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn run_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--volume", "100", "--duration", "20"];
    assert_eq!(dtot(&args, dir.path()).status.code(), Some(0));
    let before = std::fs::read(dir.path().join("events.jsonl")).unwrap();
    assert_eq!(dtot(&args, dir.path()).status.code(), Some(1));
    assert_eq!(std::fs::read(dir.path().join("events.jsonl")).unwrap(), before);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(dtot(&forced, dir.path()).status.code(), Some(0));
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--controller", "nope"],
        vec!["run", "--volume", "-5"],
        vec!["run", "--ablate", "imp9"],
        vec!["frobnicate"],
    ] {
        let o = dtot(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "volume = 100\nwarp_drive = true\n").unwrap();
    let o = dtot(&["run", "--config", cfg.to_str().unwrap()], &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "volume = 300\nseed = 5\nduration = 30\ncontroller = \"fixed_tl\"\n").unwrap();
    let out = dir.path().join("o");
    let o = dtot(&["run", "--config", cfg.to_str().unwrap(), "--seed", "9"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let back: dtot::sim::ScenarioConfig = toml::from_str(&echoed).unwrap();
    assert_eq!((back.seed, back.volume, back.controller), (9, 300.0, dtot::sim::Controller::FixedTl));
}

#[test]
fn bench_emits_tables_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "bench", "--volumes", "100,200", "--seeds", "3,4", "--duration", "40", "--complexity-volume", "200",
        "--instances", "5",
    ];
    let o = dtot(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let tables = ["complexity.csv", "controllers.csv", "ev.csv", "optimizer.csv", "bench_runs.csv"];
    let first: Vec<String> = tables.iter().map(|t| std::fs::read_to_string(dir.path().join(t)).unwrap()).collect();
    let controllers = &first[1];
    assert_eq!(controllers.lines().count(), 1 + 2 * 2);
    for id in controllers.lines().skip(1).flat_map(|l| l.rsplit(',').next().unwrap().split(';')) {
        assert!(dir.path().join("runs").join(id).join("metrics.csv").exists(), "{id}");
    }
    let opt = &first[3];
    assert!(opt.starts_with("instance_id,n,n_ev,ga_value,es_value,gap"));

    assert_eq!(dtot(&args, dir.path()).status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(dtot(&forced, dir.path()).status.code(), Some(0));
    for (t, before) in tables.iter().zip(&first) {
        assert_eq!(&std::fs::read_to_string(dir.path().join(t)).unwrap(), before, "{t}");
    }
}

#[test]
fn bench_single_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtot(&["bench", "--suite", "optimizer", "--instances", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("optimizer.csv").exists());
    assert!(!dir.path().join("controllers.csv").exists());
}

#[test]
fn optimize_reports_ga_against_exhaustive() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtot(&["optimize", "--instances", "15", "--max-n", "6", "--trace"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(dir.path().join("optimizer.csv")).unwrap();
    let mut rows = 0;
    for r in rd.records() {
        let r = r.unwrap();
        let (ga, es, gap): (f64, f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap());
        assert!(gap >= -1e-9 && (ga - es - gap).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 15);
    assert!(dir.path().join("ga_trace.csv").exists());
}
