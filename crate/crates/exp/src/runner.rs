//! Seeded Monte-Carlo batches and their CSV artifacts.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use mdsbl::metrics::{detection_stats, ospa};
use mdsbl::nomp::nomp_run;
use mdsbl::sbl::{run as sbl_run, MultiSensorObservation};
use mdsbl::Position;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ExperimentConfig, Variant};

/// One Monte-Carlo run of one algorithm at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub threshold_db: f64,
    pub t: Option<i64>,
    pub sensors: usize,
    pub run: u64,
    /// `ok`, or the solver error.
    pub status: String,
    pub k_hat: usize,
    pub ospa: Option<f64>,
    pub miss: Option<bool>,
    pub missed_objects: Option<usize>,
    pub false_alarms: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// `;`-separated noise precision estimate per sensor (SBL only).
    pub noise_precisions: String,
    /// JSON list of [`ComponentEstimate`].
    pub components: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn component_estimates(&self) -> serde_json::Result<Vec<ComponentEstimate>> {
        serde_json::from_str(&self.components)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub x: f64,
    pub y: f64,
    /// Hyperparameter γ̂ (SBL only).
    pub gamma: Option<f64>,
    /// Posterior mean (SBL) or least-squares (NOMP) amplitude per sensor, `[re, im]`.
    pub amplitude: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: Algorithm,
    pub threshold_db: f64,
    pub t: Option<i64>,
    pub sensors: usize,
    pub run: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub threshold_db: f64,
    pub t: Option<i64>,
    pub sensors: usize,
    pub runs: usize,
    pub failed: usize,
    pub mean_ospa: f64,
    pub mean_k_hat: f64,
    pub p_miss: f64,
    pub mean_false_alarms: f64,
    pub mean_missed_objects: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub aggregate: Vec<AggregateRow>,
}

struct Job {
    algorithm: Algorithm,
    algorithm_index: usize,
    threshold_index: usize,
    threshold_db: f64,
}

fn complex_pair(c: mdsbl::Complex64) -> [f64; 2] {
    [c.re, c.im]
}

fn run_one(
    cfg: &ExperimentConfig,
    variant: &Variant,
    obs: &MultiSensorObservation,
    grid: &[Position],
    job: &Job,
) -> std::result::Result<(Vec<ComponentEstimate>, Option<(usize, bool)>, String), String> {
    let bounds = variant.scenario.region;
    match job.algorithm {
        Algorithm::Sbl => {
            let engine = cfg.engine.build(job.threshold_db, grid.to_vec(), bounds);
            let est = sbl_run(obs, &engine).map_err(|e| e.to_string())?;
            let comps = est
                .components
                .iter()
                .enumerate()
                .map(|(k, c)| ComponentEstimate {
                    x: c.location.x,
                    y: c.location.y,
                    gamma: Some(c.gamma),
                    amplitude: est.amp_mean.iter().map(|m| complex_pair(m[k])).collect(),
                })
                .collect();
            let lambdas = est.noise_precisions.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
            Ok((comps, Some((est.iterations, est.converged)), lambdas))
        }
        Algorithm::Nomp => {
            let nomp = cfg.nomp.build(job.threshold_db, grid.to_vec(), bounds);
            let sensor = &obs.sensors[0];
            // NOMP is given the true noise level
            let weight = sensor.envelope.weight(variant.scenario.noise_precision[0], sensor.len());
            let est = nomp_run(&sensor.snapshot, sensor.dictionary.as_ref(), &nomp, &weight).map_err(|e| e.to_string())?;
            let comps = est
                .locations
                .iter()
                .zip(&est.amplitudes)
                .map(|(p, a)| ComponentEstimate {
                    x: p.x,
                    y: p.y,
                    gamma: None,
                    amplitude: vec![complex_pair(*a)],
                })
                .collect();
            Ok((comps, None, String::new()))
        }
    }
}

/// Runs every algorithm and threshold on every `(variant, run)` pair.
///
/// Each pair synthesizes its observation once from its own RNG stream, so
/// the rows do not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let variants = cfg.variants()?;
    let grids = variants
        .iter()
        .map(|v| v.scenario.grid_points())
        .collect::<mdsbl::Result<Vec<_>>>()?;
    let jobs: Vec<Job> = cfg
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(ai, a)| {
            cfg.thresholds_for(*a).iter().enumerate().map(move |(ti, t)| Job {
                algorithm: *a,
                algorithm_index: ai,
                threshold_index: ti,
                threshold_db: *t,
            })
        })
        .collect();
    let items: Vec<(usize, u64)> = (0..variants.len())
        .flat_map(|v| (0..cfg.runs).map(move |r| (v, r)))
        .collect();
    info!(
        "{}: {} variants x {} runs x {} algorithm/threshold pairs",
        cfg.name,
        variants.len(),
        cfg.runs,
        jobs.len()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    let metrics = cfg.metrics;
    let per_item: Vec<Vec<((usize, usize, usize, u64), ResultRow, TimingRow)>> = pool.install(|| {
        items
            .par_iter()
            .map(|&(vi, run)| {
                let variant = &variants[vi];
                let truth = variant.scenario.object_positions();
                let obs = mdsbl::scenario::synthesize(&variant.scenario, run);
                jobs.iter()
                    .map(|job| {
                        let start = Instant::now();
                        let outcome = match &obs {
                            Ok(obs) => run_one(cfg, variant, obs, &grids[vi], job),
                            Err(e) => Err(format!("synthesis failed: {e}")),
                        };
                        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                        let mut row = ResultRow {
                            algorithm: job.algorithm,
                            threshold_db: job.threshold_db,
                            t: variant.t,
                            sensors: variant.sensors,
                            run,
                            status: "ok".into(),
                            k_hat: 0,
                            ospa: None,
                            miss: None,
                            missed_objects: None,
                            false_alarms: None,
                            iterations: None,
                            converged: None,
                            noise_precisions: String::new(),
                            components: "[]".into(),
                        };
                        match outcome {
                            Ok((comps, solver, lambdas)) => {
                                let est: Vec<Position> = comps.iter().map(|c| Position::new(c.x, c.y)).collect();
                                let det = detection_stats(&truth, &est, metrics.gate);
                                row.k_hat = est.len();
                                row.ospa = Some(ospa(&truth, &est, &metrics.ospa()));
                                row.miss = Some(det.miss);
                                row.missed_objects = Some(det.missed_objects);
                                row.false_alarms = Some(det.false_alarms);
                                row.iterations = solver.map(|s| s.0);
                                row.converged = solver.map(|s| s.1);
                                row.noise_precisions = lambdas;
                                row.components = serde_json::to_string(&comps).expect("estimates serialize");
                            }
                            Err(e) => {
                                warn!("{} {} dB t={:?} L={} run {run}: {e}", job.algorithm, job.threshold_db, variant.t, variant.sensors);
                                row.status = format!("error: {e}");
                            }
                        }
                        let timing = TimingRow {
                            algorithm: job.algorithm,
                            threshold_db: job.threshold_db,
                            t: variant.t,
                            sensors: variant.sensors,
                            run,
                            wall_ms,
                        };
                        ((job.algorithm_index, job.threshold_index, vi, run), row, timing)
                    })
                    .collect()
            })
            .collect()
    });

    let mut all: Vec<_> = per_item.into_iter().flatten().collect();
    all.sort_by_key(|(key, _, _)| *key);
    let (rows, timings): (Vec<_>, Vec<_>) = all.into_iter().map(|(_, r, t)| (r, t)).unzip();
    let aggregate = aggregate(&rows);
    Ok(ExperimentOutput { rows, timings, aggregate })
}

/// Means per `(algorithm, threshold, t, sensors)` over successful runs, in
/// first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut out: Vec<(AggregateRow, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        let same = |a: &AggregateRow| {
            a.algorithm == row.algorithm && a.threshold_db == row.threshold_db && a.t == row.t && a.sensors == row.sensors
        };
        let idx = match out.iter().position(|(a, _)| same(a)) {
            Some(i) => i,
            None => {
                out.push((
                    AggregateRow {
                        algorithm: row.algorithm,
                        threshold_db: row.threshold_db,
                        t: row.t,
                        sensors: row.sensors,
                        runs: 0,
                        failed: 0,
                        mean_ospa: f64::NAN,
                        mean_k_hat: f64::NAN,
                        p_miss: f64::NAN,
                        mean_false_alarms: f64::NAN,
                        mean_missed_objects: f64::NAN,
                    },
                    Vec::new(),
                ));
                out.len() - 1
            }
        };
        out[idx].1.push(row);
    }
    out.into_iter()
        .map(|(mut a, group)| {
            a.runs = group.len();
            let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.is_ok()).collect();
            a.failed = group.len() - ok.len();
            if !ok.is_empty() {
                let n = ok.len() as f64;
                let mean = |f: &dyn Fn(&ResultRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
                a.mean_ospa = mean(&|r| r.ospa.unwrap_or(f64::NAN));
                a.mean_k_hat = mean(&|r| r.k_hat as f64);
                a.p_miss = mean(&|r| r.miss.map_or(f64::NAN, |m| m as u8 as f64));
                a.mean_false_alarms = mean(&|r| r.false_alarms.map_or(f64::NAN, |v| v as f64));
                a.mean_missed_objects = mean(&|r| r.missed_objects.map_or(f64::NAN, |v| v as f64));
            }
            a
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

pub const ROWS_FILE: &str = "rows.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Writes rows, aggregate, timings and the normalized config into `dir`.
/// Everything but the timings is byte-identical for a given config.
pub fn write_outputs(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join(ROWS_FILE), &out.rows)?;
    write_csv(&dir.join(AGGREGATE_FILE), &out.aggregate)?;
    write_csv(&dir.join(TIMING_FILE), &out.timings)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml_string())?;
    Ok(())
}
