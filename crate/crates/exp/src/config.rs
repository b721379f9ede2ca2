//! Experiment configuration (TOML).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use mdsbl::array::RadarSettings;
use mdsbl::metrics::OspaConfig;
use mdsbl::nomp::NompConfig;
use mdsbl::sbl::EngineConfig;
use mdsbl::scenario::{
    crossing_tracks_scenario, multi_radar_scenarios, CrossingTracksSpec, GridSpec, MultiRadarCase, ObjectSpec,
    Scenario, SnrReference, MULTI_RADAR_POSITIONS,
};
use mdsbl::{db_to_linear, Position, RadarGeometry, Region};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sbl,
    Nomp,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Sbl => "SBL",
            Algorithm::Nomp => "NOMP",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Sbl => "sbl",
            Algorithm::Nomp => "nomp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    /// SBL thresholds χ, and NOMP thresholds τ unless given separately.
    pub thresholds_db: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nomp_thresholds_db: Option<Vec<f64>>,
    pub runs: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub engine: EngineSettings,
    #[serde(default)]
    pub nomp: NompSettings,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    /// Two objects crossing in front of one radar; swept over time steps.
    CrossingTracks {
        #[serde(default = "default_crossing_snr")]
        snr_db: f64,
        time_steps: Vec<i64>,
        #[serde(default)]
        tracks: CrossingTracksSpec,
        #[serde(default)]
        radar: RadarSettings,
    },
    /// One 15 dB object seen by up to four radars.
    SingleObject { sensor_counts: Vec<usize> },
    /// Four objects with path loss seen by up to four radars.
    FourObjectPathloss { sensor_counts: Vec<usize> },
    Inline(InlineScenario),
}

fn default_crossing_snr() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScenario {
    #[serde(default)]
    pub radar: RadarSettings,
    pub sensors: Vec<SensorConfig>,
    pub objects: Vec<ObjectConfig>,
    pub region: Region,
    pub grid: GridSpec,
    /// Defaults to all sensors only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_counts: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub position: [f64; 2],
    /// Point broadside at this position ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aim: Option<[f64; 2]>,
    /// ... or along this direction, degrees counterclockwise from +x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub broadside_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub position: [f64; 2],
    pub snr_db: f64,
    /// SNR holds at this distance instead of at each sensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSettings {
    pub max_outer_iters: usize,
    pub convergence_tol: f64,
    pub objective_tol: f64,
    pub k_max: usize,
    pub duplicate_radius: f64,
    pub optimizer_tol: f64,
    pub optimizer_max_evals: usize,
    pub optimizer_step: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        let e = EngineConfig::new(1.0, Vec::new(), Region { x: [0.0, 1.0], y: [0.0, 1.0] });
        Self {
            max_outer_iters: e.max_outer_iters,
            convergence_tol: e.convergence_tol,
            objective_tol: e.objective_tol,
            k_max: e.k_max,
            duplicate_radius: e.duplicate_radius,
            optimizer_tol: e.optimizer_tol,
            optimizer_max_evals: e.optimizer_max_evals,
            optimizer_step: e.optimizer_step,
        }
    }
}

impl EngineSettings {
    pub fn build(&self, threshold_db: f64, grid: Vec<Position>, bounds: Region) -> EngineConfig {
        EngineConfig {
            max_outer_iters: self.max_outer_iters,
            convergence_tol: self.convergence_tol,
            objective_tol: self.objective_tol,
            k_max: self.k_max,
            duplicate_radius: self.duplicate_radius,
            optimizer_tol: self.optimizer_tol,
            optimizer_max_evals: self.optimizer_max_evals,
            optimizer_step: self.optimizer_step,
            ..EngineConfig::new(db_to_linear(threshold_db), grid, bounds)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NompSettings {
    pub refine_rounds: usize,
    pub max_components: usize,
    pub optimizer_tol: f64,
    pub optimizer_max_evals: usize,
    pub optimizer_step: f64,
}

impl Default for NompSettings {
    fn default() -> Self {
        let n = NompConfig::new(1.0, Vec::new(), Region { x: [0.0, 1.0], y: [0.0, 1.0] });
        Self {
            refine_rounds: n.refine_rounds,
            max_components: n.max_components,
            optimizer_tol: n.optimizer_tol,
            optimizer_max_evals: n.optimizer_max_evals,
            optimizer_step: n.optimizer_step,
        }
    }
}

impl NompSettings {
    pub fn build(&self, threshold_db: f64, grid: Vec<Position>, bounds: Region) -> NompConfig {
        NompConfig {
            refine_rounds: self.refine_rounds,
            max_components: self.max_components,
            optimizer_tol: self.optimizer_tol,
            optimizer_max_evals: self.optimizer_max_evals,
            optimizer_step: self.optimizer_step,
            ..NompConfig::new(db_to_linear(threshold_db), grid, bounds)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub ospa_order: f64,
    pub ospa_cutoff: f64,
    /// Detection gate (m).
    pub gate: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let o = OspaConfig::default();
        Self {
            ospa_order: o.order_p,
            ospa_cutoff: o.cutoff_c,
            gate: 5.0,
        }
    }
}

impl MetricsConfig {
    pub fn ospa(&self) -> OspaConfig {
        OspaConfig {
            order_p: self.ospa_order,
            cutoff_c: self.ospa_cutoff,
        }
    }
}

/// One point of the scenario sweep.
#[derive(Debug, Clone)]
pub struct Variant {
    pub t: Option<i64>,
    pub sensors: usize,
    pub scenario: Scenario,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Normalized TOML: every default spelled out.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn thresholds_for(&self, algorithm: Algorithm) -> &[f64] {
        match (algorithm, &self.nomp_thresholds_db) {
            (Algorithm::Nomp, Some(t)) => t,
            _ => &self.thresholds_db,
        }
    }

    fn sensor_counts(&self) -> Vec<usize> {
        match &self.scenario {
            ScenarioConfig::CrossingTracks { .. } => vec![1],
            ScenarioConfig::SingleObject { sensor_counts } | ScenarioConfig::FourObjectPathloss { sensor_counts } => {
                sensor_counts.clone()
            }
            ScenarioConfig::Inline(s) => s.sensor_counts.clone().unwrap_or_else(|| vec![s.sensors.len()]),
        }
    }

    fn max_sensors(&self) -> usize {
        match &self.scenario {
            ScenarioConfig::CrossingTracks { .. } => 1,
            ScenarioConfig::Inline(s) => s.sensors.len(),
            _ => MULTI_RADAR_POSITIONS.len(),
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.trim().is_empty() {
            v.push("name is empty".into());
        }
        if self.runs == 0 {
            v.push("runs must be >= 1".into());
        }
        if self.algorithms.is_empty() {
            v.push("algorithms is empty".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                v.push(format!("algorithm {a} listed twice"));
            }
        }
        let mut check_thresholds = |key: &str, list: &[f64]| {
            if list.is_empty() {
                v.push(format!("{key} is empty"));
            }
            for t in list {
                if !(t.is_finite() && *t >= 0.0) {
                    v.push(format!("{key}: threshold {t} dB must be finite and >= 0 dB"));
                }
            }
        };
        check_thresholds("thresholds_db", &self.thresholds_db);
        if let Some(t) = &self.nomp_thresholds_db {
            check_thresholds("nomp_thresholds_db", t);
        }

        let counts = self.sensor_counts();
        if counts.is_empty() {
            v.push("sensor_counts is empty".into());
        }
        let max = self.max_sensors();
        for c in &counts {
            if *c == 0 || *c > max {
                v.push(format!("sensor count {c} outside 1..={max}"));
            }
        }
        if self.algorithms.contains(&Algorithm::Nomp) && counts.iter().any(|c| *c > 1) {
            v.push("nomp handles a single sensor only; drop it or use sensor_counts = [1]".into());
        }
        match &self.scenario {
            ScenarioConfig::CrossingTracks {
                snr_db,
                time_steps,
                tracks,
                ..
            } => {
                if !snr_db.is_finite() {
                    v.push(format!("scenario.snr_db must be finite, got {snr_db}"));
                }
                if let Err(e) = tracks.validate() {
                    v.push(format!("scenario.tracks: {e}"));
                }
                if time_steps.is_empty() {
                    v.push("scenario.time_steps is empty".into());
                }
                for t in time_steps {
                    if *t < tracks.t_range[0] || *t > tracks.t_range[1] {
                        v.push(format!("time step {t} outside t_range {:?}", tracks.t_range));
                    }
                }
            }
            ScenarioConfig::Inline(s) => {
                if s.sensors.is_empty() {
                    v.push("scenario.sensors is empty".into());
                }
                for (i, sc) in s.sensors.iter().enumerate() {
                    if sc.aim.is_some() == sc.broadside_deg.is_some() {
                        v.push(format!("scenario.sensors[{i}]: give exactly one of aim and broadside_deg"));
                    }
                }
                for (i, o) in s.objects.iter().enumerate() {
                    if !o.snr_db.is_finite() {
                        v.push(format!("scenario.objects[{i}].snr_db must be finite"));
                    }
                    if o.reference_distance.is_some_and(|d| !(d > 0.0)) {
                        v.push(format!("scenario.objects[{i}].reference_distance must be positive"));
                    }
                }
                if let Err(e) = Region::new(s.region.x, s.region.y) {
                    v.push(format!("scenario.region: {e}"));
                }
            }
            _ => {}
        }

        let e = &self.engine;
        if e.max_outer_iters == 0 || e.k_max == 0 || e.optimizer_max_evals == 0 {
            v.push("engine: max_outer_iters, k_max and optimizer_max_evals must be >= 1".into());
        }
        for (key, val) in [
            ("convergence_tol", e.convergence_tol),
            ("objective_tol", e.objective_tol),
            ("duplicate_radius", e.duplicate_radius),
            ("optimizer_tol", e.optimizer_tol),
            ("optimizer_step", e.optimizer_step),
        ] {
            if !(val > 0.0 && val.is_finite()) {
                v.push(format!("engine.{key} must be positive, got {val}"));
            }
        }
        let n = &self.nomp;
        if n.max_components == 0 || n.optimizer_max_evals == 0 {
            v.push("nomp: max_components and optimizer_max_evals must be >= 1".into());
        }
        if !(n.optimizer_tol > 0.0) || !(n.optimizer_step > 0.0) {
            v.push("nomp: optimizer_tol and optimizer_step must be positive".into());
        }
        if let Err(e) = self.metrics.ospa().validate() {
            v.push(format!("metrics: {e}"));
        }
        if !(self.metrics.gate > 0.0) {
            v.push(format!("metrics.gate must be positive, got {}", self.metrics.gate));
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Scenarios of the sweep, in output order.
    pub fn variants(&self) -> mdsbl::Result<Vec<Variant>> {
        let seed = self.seed;
        match &self.scenario {
            ScenarioConfig::CrossingTracks {
                snr_db,
                time_steps,
                tracks,
                radar,
            } => time_steps
                .iter()
                .map(|t| {
                    Ok(Variant {
                        t: Some(*t),
                        sensors: 1,
                        scenario: crossing_tracks_scenario(tracks, *t, *snr_db, radar, seed)?,
                    })
                })
                .collect(),
            ScenarioConfig::SingleObject { sensor_counts } => multi(MultiRadarCase::SingleObject, sensor_counts, seed),
            ScenarioConfig::FourObjectPathloss { sensor_counts } => {
                multi(MultiRadarCase::FourObjectPathloss, sensor_counts, seed)
            }
            ScenarioConfig::Inline(s) => {
                let full = s.build(seed)?;
                s.sensor_counts
                    .clone()
                    .unwrap_or_else(|| vec![s.sensors.len()])
                    .iter()
                    .map(|c| {
                        Ok(Variant {
                            t: None,
                            sensors: *c,
                            scenario: full.with_sensor_count(*c)?,
                        })
                    })
                    .collect()
            }
        }
    }
}

fn multi(case: MultiRadarCase, counts: &[usize], seed: u64) -> mdsbl::Result<Vec<Variant>> {
    counts
        .iter()
        .map(|c| {
            Ok(Variant {
                t: None,
                sensors: *c,
                scenario: multi_radar_scenarios(case, *c, seed)?,
            })
        })
        .collect()
}

impl InlineScenario {
    pub fn build(&self, seed: u64) -> mdsbl::Result<Scenario> {
        let sensors = self
            .sensors
            .iter()
            .map(|s| match (s.aim, s.broadside_deg) {
                (Some(aim), _) => RadarGeometry::aimed_at(s.position, aim, &self.radar),
                (None, Some(deg)) => RadarGeometry::mimo_3x3(s.position, deg.to_radians(), &self.radar),
                (None, None) => RadarGeometry::mimo_3x3(s.position, PI / 2.0, &self.radar),
            })
            .collect::<mdsbl::Result<Vec<_>>>()?;
        let objects = self
            .objects
            .iter()
            .map(|o| ObjectSpec {
                position: Position::new(o.position[0], o.position[1]),
                snr_db: o.snr_db,
                snr_reference: o.reference_distance.map_or(SnrReference::AtSensor, SnrReference::AtDistance),
            })
            .collect();
        let region = Region::new(self.region.x, self.region.y)?;
        Ok(Scenario::new(sensors, objects, region, self.grid, seed))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text, &path.display().to_string())
}
