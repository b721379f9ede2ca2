//! Tall-format plot tables for the crossing-track and multi-radar figures.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runner::AggregateRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    /// OSPA and K̂ against time step, per algorithm and threshold.
    Fig3,
    /// P_miss, N_FA and OSPA against χ, per sensor count.
    Fig4,
    /// OSPA against χ, per sensor count (path-loss scene).
    Fig5,
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read aggregate {path}: {message}")]
    Io { path: String, message: String },
    #[error("aggregate schema: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub x: f64,
    pub series: String,
    pub panel: String,
    pub y: f64,
}

const REQUIRED: [&str; 9] = [
    "algorithm",
    "threshold_db",
    "t",
    "sensors",
    "mean_ospa",
    "mean_k_hat",
    "p_miss",
    "mean_false_alarms",
    "runs",
];

/// Reads an aggregate CSV, checking the header before the records.
pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, PlotError> {
    let io = |e: &dyn std::fmt::Display| PlotError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| io(&e))?;
    let headers = reader.headers().map_err(|e| io(&e))?.clone();
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(PlotError::Schema(format!("missing columns {}", missing.join(", "))));
    }
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<AggregateRow>, _>>()
        .map_err(|e| PlotError::Schema(e.to_string()))?;
    if rows.is_empty() {
        return Err(PlotError::Schema("aggregate has no rows".into()));
    }
    Ok(rows)
}

fn threshold_label(db: f64) -> String {
    format!("{db} dB")
}

pub fn plot_rows(aggregate: &[AggregateRow], figure: Figure) -> Result<Vec<PlotRow>, PlotError> {
    if aggregate.is_empty() {
        return Err(PlotError::Schema("aggregate has no rows".into()));
    }
    let mut out = Vec::new();
    match figure {
        Figure::Fig3 => {
            for a in aggregate {
                let t = a
                    .t
                    .ok_or_else(|| PlotError::Schema("fig3 needs a time step in every row".into()))?;
                let series = format!("{} {}", a.algorithm.label(), threshold_label(a.threshold_db));
                for (panel, y) in [("ospa", a.mean_ospa), ("k_hat", a.mean_k_hat)] {
                    out.push(PlotRow {
                        x: t as f64,
                        series: series.clone(),
                        panel: panel.into(),
                        y,
                    });
                }
            }
        }
        Figure::Fig4 | Figure::Fig5 => {
            let panels: &[&str] = if figure == Figure::Fig4 {
                &["p_miss", "false_alarms", "ospa"]
            } else {
                &["ospa"]
            };
            for panel in panels {
                for a in aggregate {
                    let y = match *panel {
                        "p_miss" => a.p_miss,
                        "false_alarms" => a.mean_false_alarms,
                        _ => a.mean_ospa,
                    };
                    out.push(PlotRow {
                        x: a.threshold_db,
                        series: format!("{} L={}", a.algorithm.label(), a.sensors),
                        panel: panel.to_string(),
                        y,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.panel, &a.series)
            .cmp(&(&b.panel, &b.series))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(out)
}

pub fn emit_plot_data(aggregate: &Path, figure: Figure, output: &Path) -> anyhow::Result<usize> {
    let rows = plot_rows(&read_aggregate(aggregate)?, figure)?;
    crate::runner::write_csv(output, &rows)?;
    Ok(rows.len())
}
