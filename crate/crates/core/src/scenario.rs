//! Ground-truth scenes and seeded synthetic observations.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{Dictionary, Position, RadarGeometry, RadarSettings, Region};
use crate::error::{Error, Result};
use crate::sbl::{MultiSensorObservation, NoiseEnvelope, SensorObservation};

/// Where an object's component SNR is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// At the object's actual distance from each sensor.
    AtSensor,
    /// At this distance (m); path loss then scales it to the true distance.
    AtDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub position: Position,
    pub snr_db: f64,
    pub snr_reference: SnrReference,
}

impl ObjectSpec {
    pub fn new(position: Position, snr_db: f64) -> Self {
        Self {
            position,
            snr_db,
            snr_reference: SnrReference::AtSensor,
        }
    }
}

/// Coarse grid used to seed new components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Range/angle grid around one sensor, clipped to the region.
    Polar {
        sensor: usize,
        range_step: f64,
        angle_step_deg: f64,
        max_angle_deg: f64,
    },
    /// Axis-aligned grid anchored at the region's lower corner.
    Cartesian { step: f64 },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub sensors: Vec<RadarGeometry>,
    pub objects: Vec<ObjectSpec>,
    /// True noise precision per sensor; `∞` generates noiseless data.
    pub noise_precision: Vec<f64>,
    pub envelopes: Vec<NoiseEnvelope>,
    pub seed: u64,
    /// Surveillance region: optimizer bounds and grid extent.
    pub region: Region,
    pub grid: GridSpec,
}

impl Scenario {
    /// White unit-variance noise at every sensor.
    pub fn new(sensors: Vec<RadarGeometry>, objects: Vec<ObjectSpec>, region: Region, grid: GridSpec, seed: u64) -> Self {
        let n = sensors.len();
        Self {
            sensors,
            objects,
            noise_precision: vec![1.0; n],
            envelopes: vec![NoiseEnvelope::Identity; n],
            seed,
            region,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::InvalidInput("scenario needs at least one sensor".into()));
        }
        if self.noise_precision.len() != self.sensors.len() || self.envelopes.len() != self.sensors.len() {
            return Err(Error::InvalidInput("one noise precision and envelope per sensor required".into()));
        }
        if let Some(l) = self.noise_precision.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::InvalidInput(format!("noise precision must be positive, got {l}")));
        }
        if let Some(o) = self.objects.iter().find(|o| !o.snr_db.is_finite()) {
            return Err(Error::InvalidInput(format!("object SNR must be finite, got {}", o.snr_db)));
        }
        Ok(())
    }

    /// Keeps the first `count` sensors.
    pub fn with_sensor_count(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.sensors.len() {
            return Err(Error::InvalidInput(format!(
                "sensor count {count} outside 1..={}",
                self.sensors.len()
            )));
        }
        let mut s = self.clone();
        s.sensors.truncate(count);
        s.noise_precision.truncate(count);
        s.envelopes.truncate(count);
        Ok(s)
    }

    pub fn object_positions(&self) -> Vec<Position> {
        self.objects.iter().map(|o| o.position).collect()
    }

    pub fn grid_points(&self) -> Result<Vec<Position>> {
        let r = &self.region;
        match self.grid {
            GridSpec::Cartesian { step } => {
                if !(step > 0.0) {
                    return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
                }
                let nx = ((r.x[1] - r.x[0]) / step + 1e-9).floor() as usize + 1;
                let ny = ((r.y[1] - r.y[0]) / step + 1e-9).floor() as usize + 1;
                let mut pts = Vec::with_capacity(nx * ny);
                for i in 0..nx {
                    for j in 0..ny {
                        pts.push(Position::new(r.x[0] + i as f64 * step, r.y[0] + j as f64 * step));
                    }
                }
                Ok(pts)
            }
            GridSpec::Polar {
                sensor,
                range_step,
                angle_step_deg,
                max_angle_deg,
            } => {
                let geom = self
                    .sensors
                    .get(sensor)
                    .ok_or_else(|| Error::InvalidInput(format!("grid sensor {sensor} does not exist")))?;
                if !(range_step > 0.0 && angle_step_deg > 0.0 && max_angle_deg >= 0.0) {
                    return Err(Error::InvalidInput("polar grid steps must be positive".into()));
                }
                let origin = geom.position();
                let corners = [
                    Position::new(r.x[0], r.y[0]),
                    Position::new(r.x[0], r.y[1]),
                    Position::new(r.x[1], r.y[0]),
                    Position::new(r.x[1], r.y[1]),
                ];
                let max_range = corners.iter().map(|c| (c - origin).norm()).fold(0.0, f64::max);
                let n_angles = (2.0 * max_angle_deg / angle_step_deg + 1e-9).floor() as usize + 1;
                let mut pts = Vec::new();
                let mut range = range_step;
                while range <= max_range + 1e-9 {
                    for a in 0..n_angles {
                        let angle = (-max_angle_deg + a as f64 * angle_step_deg).to_radians();
                        let bearing = geom.broadside + angle;
                        let p = origin + Position::new(bearing.cos(), bearing.sin()) * range;
                        if r.contains(&p) {
                            pts.push(p);
                        }
                    }
                    range += range_step;
                }
                Ok(pts)
            }
        }
    }
}

/// Amplitude magnitude of `obj` at sensor `geom` so that
/// `‖ψα‖²/σ² = 10^(snr/10)` holds at the reference distance.
///
/// With noiseless data (`noise_precision = ∞`) the SNR is taken relative to
/// unit noise power.
pub fn amplitude_for_snr(obj: &ObjectSpec, geom: &RadarGeometry, noise_precision: f64) -> Result<f64> {
    let sigma2 = if noise_precision.is_finite() { 1.0 / noise_precision } else { 1.0 };
    let gain = match obj.snr_reference {
        SnrReference::AtSensor => geom.atom(&obj.position)?.norm(),
        SnrReference::AtDistance(d) => {
            if !(d > 0.0) {
                return Err(Error::Domain(format!("reference distance must be positive, got {d}")));
            }
            // every factor of the atom but the path gain has unit norm
            geom.path_gain(d)
        }
    };
    if !(gain > 0.0) {
        return Err(Error::Domain("atom has zero norm".into()));
    }
    Ok((crate::db_to_linear(obj.snr_db) * sigma2).sqrt() / gain)
}

fn run_rng(seed: u64, run_index: u64, sensor: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run_index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(sensor as u64);
    rng
}

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

/// Noise vector with covariance `(λΛ_v)⁻¹` drawn from `rng`.
fn noise(rng: &mut ChaCha8Rng, n: usize, lambda: f64, envelope: &NoiseEnvelope) -> DVector<Complex64> {
    let z = DVector::from_fn(n, |_, _| complex_normal(rng, 1.0 / lambda));
    match envelope {
        NoiseEnvelope::Identity => z,
        // Λ_v = LLᴴ, so L⁻ᴴz has covariance Λ_v⁻¹
        NoiseEnvelope::Dense { factor, .. } => factor
            .adjoint()
            .solve_upper_triangular(&z)
            .expect("noise envelope factor is nonsingular"),
    }
}

/// Observation of run `run_index`. Each sensor draws its object phases and
/// then its noise from its own stream keyed by `(seed, run_index, sensor)`.
pub fn synthesize(scenario: &Scenario, run_index: u64) -> Result<MultiSensorObservation> {
    scenario.validate()?;
    let sensors = scenario
        .sensors
        .iter()
        .enumerate()
        .map(|(l, geom)| {
            let mut rng = run_rng(scenario.seed, run_index, l);
            let lambda = scenario.noise_precision[l];
            let n = geom.sample_count();
            let mut y = DVector::<Complex64>::zeros(n);
            for obj in &scenario.objects {
                let phase: f64 = rng.random::<f64>() * 2.0 * PI;
                let alpha = Complex64::from_polar(amplitude_for_snr(obj, geom, lambda)?, phase);
                y += geom.atom(&obj.position)?.0 * alpha;
            }
            if lambda.is_finite() {
                y += noise(&mut rng, n, lambda, &scenario.envelopes[l]);
            }
            let dict: Arc<dyn Dictionary> = Arc::new(geom.clone());
            SensorObservation::with_envelope(dict, y, scenario.envelopes[l].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    MultiSensorObservation::new(sensors)
}

/// Two objects on straight tracks crossing at `crossing_angle_deg`.
///
/// Speeds are set so the objects close at 1 m per step. The second object is
/// the slower one; keeping it slow keeps both tracks away from endfire,
/// where the half-wavelength array cannot tell left from right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingTracksSpec {
    pub crossing_angle_deg: f64,
    pub start: [[f64; 2]; 2],
    /// Speed of the second object relative to the first, in `(0, 1]`.
    pub speed_ratio: f64,
    /// Direction of the first track, degrees counterclockwise from +x.
    pub heading_deg: f64,
    pub t_range: [i64; 2],
}

impl Default for CrossingTracksSpec {
    fn default() -> Self {
        Self {
            crossing_angle_deg: 36.0,
            start: [[0.0, 20.0], [0.3, 20.4]],
            speed_ratio: 0.375,
            heading_deg: 0.0,
            t_range: [-30, 30],
        }
    }
}

impl CrossingTracksSpec {
    pub fn validate(&self) -> Result<()> {
        let angle_ok = self.crossing_angle_deg > 0.0 && self.crossing_angle_deg < 180.0;
        if !angle_ok || !(self.speed_ratio > 0.0 && self.speed_ratio <= 1.0) || self.t_range[0] > self.t_range[1] {
            return Err(Error::InvalidInput(format!(
                "crossing tracks need an angle in (0, 180), a speed ratio in (0, 1] and an ordered t_range, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Speeds of both objects in m per step.
    pub fn speeds(&self) -> [f64; 2] {
        let r = self.speed_ratio;
        let closing = (1.0 + r * r - 2.0 * r * self.crossing_angle_deg.to_radians().cos()).sqrt();
        [1.0 / closing, r / closing]
    }

    pub fn velocities(&self) -> [Position; 2] {
        let h1 = self.heading_deg.to_radians();
        let h2 = h1 + self.crossing_angle_deg.to_radians();
        let [v1, v2] = self.speeds();
        [
            Position::new(h1.cos(), h1.sin()) * v1,
            Position::new(h2.cos(), h2.sin()) * v2,
        ]
    }
}

/// Object positions at time step `t`.
pub fn crossing_tracks(spec: &CrossingTracksSpec, t: i64) -> Result<[Position; 2]> {
    spec.validate()?;
    if t < spec.t_range[0] || t > spec.t_range[1] {
        return Err(Error::InvalidInput(format!(
            "time step {t} outside [{}, {}]",
            spec.t_range[0], spec.t_range[1]
        )));
    }
    let [v1, v2] = spec.velocities();
    let t = t as f64;
    Ok([
        Position::new(spec.start[0][0], spec.start[0][1]) + v1 * t,
        Position::new(spec.start[1][0], spec.start[1][1]) + v2 * t,
    ])
}

/// Single-radar crossing-tracks scene at step `t`.
pub fn crossing_tracks_scenario(
    spec: &CrossingTracksSpec,
    t: i64,
    snr_db: f64,
    settings: &RadarSettings,
    seed: u64,
) -> Result<Scenario> {
    let radar = RadarGeometry::mimo_3x3([0.0, 0.0], PI / 2.0, settings)?;
    let objects = crossing_tracks(spec, t)?
        .iter()
        .map(|p| ObjectSpec::new(*p, snr_db))
        .collect();
    Ok(Scenario::new(
        vec![radar],
        objects,
        Region::new([-60.0, 60.0], [0.5, 70.0])?,
        GridSpec::Polar {
            sensor: 0,
            range_step: 3.75,
            angle_step_deg: 8.0,
            max_angle_deg: 88.0,
        },
        seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiRadarCase {
    SingleObject,
    FourObjectPathloss,
}

/// Radar positions shared by both multi-radar scenes, in the order sensors
/// are added.
pub const MULTI_RADAR_POSITIONS: [[f64; 2]; 4] = [[0.0, 0.0], [-30.0, 30.0], [0.0, 60.0], [30.0, 30.0]];

/// Multi-radar scene with the first `sensor_count` radars.
pub fn multi_radar_scenarios(case: MultiRadarCase, sensor_count: usize, seed: u64) -> Result<Scenario> {
    let aim = [0.0, 30.0];
    let (path_loss, objects, region) = match case {
        MultiRadarCase::SingleObject => (
            false,
            vec![ObjectSpec::new(Position::new(0.0, 30.0), 15.0)],
            Region::new([-29.0, 29.0], [1.0, 59.0])?,
        ),
        MultiRadarCase::FourObjectPathloss => (
            true,
            [(0.0, 10.0), (20.0, -30.0), (0.0, 50.0), (20.0, 30.0)]
                .iter()
                .map(|(x, y)| ObjectSpec {
                    position: Position::new(*x, *y),
                    snr_db: 30.0,
                    snr_reference: SnrReference::AtDistance(10.0),
                })
                .collect(),
            Region::new([-29.0, 29.0], [-40.0, 59.0])?,
        ),
    };
    let settings = RadarSettings {
        path_loss,
        ..RadarSettings::default()
    };
    let sensors = MULTI_RADAR_POSITIONS
        .iter()
        .map(|p| RadarGeometry::aimed_at(*p, aim, &settings))
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(sensors, objects, region, GridSpec::Cartesian { step: 2.0 }, seed).with_sensor_count(sensor_count)
}
