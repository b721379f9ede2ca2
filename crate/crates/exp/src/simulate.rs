//! Raw synthetic observations, for inspection outside the solver.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::write_csv;

#[derive(Debug, Serialize)]
struct SampleRow {
    t: Option<i64>,
    sensors: usize,
    run: u64,
    sensor: usize,
    sample: usize,
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize)]
struct TruthRow {
    t: Option<i64>,
    sensors: usize,
    object: usize,
    x: f64,
    y: f64,
    snr_db: f64,
}

/// Writes `observations.csv` and `truth.csv` for the first `runs` runs of
/// every variant. Returns the number of samples written.
pub fn write_observations(cfg: &ExperimentConfig, runs: u64, dir: &Path) -> Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    for v in cfg.variants()? {
        for (k, o) in v.scenario.objects.iter().enumerate() {
            truth.push(TruthRow {
                t: v.t,
                sensors: v.sensors,
                object: k,
                x: o.position.x,
                y: o.position.y,
                snr_db: o.snr_db,
            });
        }
        for run in 0..runs {
            let obs = mdsbl::scenario::synthesize(&v.scenario, run)?;
            for (l, s) in obs.sensors.iter().enumerate() {
                samples.extend(s.snapshot.iter().enumerate().map(|(i, c)| SampleRow {
                    t: v.t,
                    sensors: v.sensors,
                    run,
                    sensor: l,
                    sample: i,
                    re: c.re,
                    im: c.im,
                }));
            }
        }
    }
    write_csv(&dir.join("observations.csv"), &samples)?;
    write_csv(&dir.join("truth.csv"), &truth)?;
    Ok(samples.len())
}
