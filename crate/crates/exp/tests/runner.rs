use std::path::{Path, PathBuf};
use std::process::Command;

use mdsbl_exp::config::ScenarioConfig;
use mdsbl_exp::plot::{read_aggregate, Figure, PlotRow};
use mdsbl_exp::runner::{read_csv, AGGREGATE_FILE, ROWS_FILE, TIMING_FILE};
use mdsbl_exp::{run_experiment, write_outputs, Algorithm, ExperimentConfig, ResultRow};

const SMALL: &str = r#"
schema_version = 1
name = "small"
algorithms = ["sbl", "nomp"]
thresholds_db = [10.0]
runs = 10
seed = 7

[scenario]
kind = "crossing_tracks"
time_steps = [-30, 0, 30]
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL, "small").unwrap()
}

fn run_into(cfg: &ExperimentConfig, workers: usize, dir: &Path) {
    let out = run_experiment(cfg, workers).unwrap();
    write_outputs(&out, cfg, dir).unwrap();
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn row_counts_order_and_round_trip() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_into(&cfg, 2, dir.path());
    let rows: Vec<ResultRow> = read_csv(&dir.path().join(ROWS_FILE)).unwrap();
    assert_eq!(rows.len(), 60);
    assert_eq!(rows.iter().filter(|r| r.algorithm == Algorithm::Sbl).count(), 30);
    assert_eq!(rows.iter().filter(|r| r.algorithm == Algorithm::Nomp).count(), 30);
    assert!(rows.iter().all(ResultRow::is_ok));
    // algorithm, threshold, variant, run
    assert_eq!((rows[0].algorithm, rows[0].t, rows[0].run), (Algorithm::Sbl, Some(-30), 0));
    assert_eq!((rows[9].t, rows[9].run), (Some(-30), 9));
    assert_eq!((rows[10].t, rows[10].run), (Some(0), 0));
    assert_eq!(rows[30].algorithm, Algorithm::Nomp);

    let fresh = run_experiment(&cfg, 1).unwrap();
    assert_eq!(rows, fresh.rows);
    for r in &rows {
        let comps = r.component_estimates().unwrap();
        assert_eq!(comps.len(), r.k_hat);
        match r.algorithm {
            Algorithm::Sbl => {
                assert!(comps.iter().all(|c| c.gamma.is_some_and(|g| g > 0.0)));
                assert_eq!(r.noise_precisions.split(';').count(), 1);
            }
            Algorithm::Nomp => assert!(comps.iter().all(|c| c.gamma.is_none())),
        }
    }
    let timing = std::fs::read_to_string(dir.path().join(TIMING_FILE)).unwrap();
    assert_eq!(timing.lines().count(), 61);
    assert!(timing.lines().next().unwrap().ends_with("wall_ms"));
}

#[test]
fn aggregate_matches_rows() {
    let out = run_experiment(&small(), 1).unwrap();
    assert_eq!(out.aggregate.len(), 6);
    for a in &out.aggregate {
        let group: Vec<&ResultRow> = out
            .rows
            .iter()
            .filter(|r| r.algorithm == a.algorithm && r.threshold_db == a.threshold_db && r.t == a.t)
            .collect();
        assert_eq!(group.len(), a.runs);
        let mean = group.iter().map(|r| r.ospa.unwrap()).sum::<f64>() / group.len() as f64;
        assert!((mean - a.mean_ospa).abs() <= 1e-12);
        let k = group.iter().map(|r| r.k_hat as f64).sum::<f64>() / group.len() as f64;
        assert!((k - a.mean_k_hat).abs() <= 1e-12);
    }
}

#[test]
fn bytes_do_not_depend_on_workers_or_repetition() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_into(&cfg, 1, a.path());
    run_into(&cfg, 3, b.path());
    run_into(&cfg, 1, c.path());
    for f in [ROWS_FILE, AGGREGATE_FILE, "config.toml"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs across worker counts");
        assert_eq!(x, std::fs::read(c.path().join(f)).unwrap(), "{f} differs across repetitions");
    }
    // a different seed changes the draws
    let mut other = cfg.clone();
    other.seed = 8;
    assert_ne!(run_experiment(&other, 1).unwrap().rows, run_experiment(&cfg, 1).unwrap().rows);
}

#[test]
fn shipped_configs_validate() {
    let mut names: Vec<_> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for p in names {
        let cfg = mdsbl_exp::load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!cfg.variants().unwrap().is_empty());
        if let ScenarioConfig::CrossingTracks { time_steps, .. } = &cfg.scenario {
            assert!(time_steps.iter().all(|t| t.abs() <= 30));
        }
    }
}

#[test]
fn cli_run_and_plotdata() {
    let exe = env!("CARGO_BIN_EXE_mdsbl");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    std::fs::write(&cfg_path, SMALL.replace("runs = 10", "runs = 2")).unwrap();

    let status = Command::new(exe).args(["validate", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(status.status.success());
    let normalized = String::from_utf8(status.stdout).unwrap();
    assert!(normalized.contains("[engine]") && normalized.contains("k_max = 20"));

    let out_dir = dir.path().join("out");
    let status = Command::new(exe)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--output")
        .arg(&out_dir)
        .args(["--algorithm", "sbl"])
        .env("MDSBL_WORKERS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    let rows: Vec<ResultRow> = read_csv(&out_dir.join(ROWS_FILE)).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.algorithm == Algorithm::Sbl));

    let plot = dir.path().join("fig3.csv");
    let status = Command::new(exe)
        .args(["plotdata", "--figure", "fig3", "--aggregate"])
        .arg(out_dir.join(AGGREGATE_FILE))
        .arg("--output")
        .arg(&plot)
        .status()
        .unwrap();
    assert!(status.success());
    let plot_rows: Vec<PlotRow> = read_csv(&plot).unwrap();
    assert_eq!(plot_rows.len(), 6);
    assert!(plot_rows.iter().all(|r| r.series == "SBL 10 dB"));

    let sim = dir.path().join("sim");
    let status = Command::new(exe)
        .args(["simulate", "--runs", "1", "--config"])
        .arg(&cfg_path)
        .arg("--output")
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());
    let samples = std::fs::read_to_string(sim.join("observations.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 3 * 135);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("runs = 10", "runs = 0")).unwrap();
    let out = Command::new(exe).args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("runs must be >= 1"));
}

#[test]
fn plot_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "algorithm,threshold_db,t,sensors,runs,failed,mean_ospa,mean_k_hat,p_miss,mean_false_alarms,mean_missed_objects\n").unwrap();
    assert!(read_aggregate(&empty).unwrap_err().to_string().contains("no rows"));
    let missing = dir.path().join("missing.csv");
    std::fs::write(&missing, "algorithm,threshold_db\nsbl,10\n").unwrap();
    let err = read_aggregate(&missing).unwrap_err().to_string();
    assert!(err.contains("mean_ospa"), "{err}");
    assert!(mdsbl_exp::emit_plot_data(&missing, Figure::Fig4, &dir.path().join("x.csv")).is_err());
}
