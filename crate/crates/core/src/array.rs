//! Sensor geometry and the parameterized dictionary.
//!
//! Each radar carries a co-located MIMO array whose `N_Tx·N_Rx` virtual
//! elements lie on a line through the sensor position, and samples the
//! channel at `N_f` equally spaced baseband frequencies. The response to a
//! point reflector factorizes into an angle part and a range part:
//!
//! ```text
//! ψ(θ) = (ψ_angle(φ) ⊗ ψ_range(d)) / √N
//! ```
//!
//! where `φ` is the bearing relative to broadside and `d` the distance.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DVector, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous 2-D position in meters.
pub type Position = Vector2<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if !ok(x) || !ok(y) {
            return Err(Error::InvalidInput(format!(
                "region bounds must be finite and increasing, got x={x:?} y={y:?}"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x[0] && p.x <= self.x[1] && p.y >= self.y[0] && p.y <= self.y[1]
    }

    pub fn clamp(&self, p: &Position) -> Position {
        Position::new(p.x.clamp(self.x[0], self.x[1]), p.y.clamp(self.y[0], self.y[1]))
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let x = [self.x[0].max(other.x[0]), self.x[1].min(other.x[1])];
        let y = [self.y[0].max(other.y[0]), self.y[1].min(other.y[1])];
        Region::new(x, y).ok()
    }
}

/// Bearing and distance of a position as seen from one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringParams {
    /// Radians relative to broadside, counterclockwise, in (−π, π].
    pub angle: f64,
    /// Meters, strictly positive.
    pub distance: f64,
}

/// Dictionary atom: the noiseless response to a unit-amplitude reflector.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom(pub DVector<Complex64>);

impl Atom {
    pub fn values(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// A parameterized dictionary: maps a continuous position to an atom.
///
/// Radars are the only implementation shipped here, but the solver only
/// talks to this trait, so other sensor models can be plugged in.
pub trait Dictionary: Send + Sync + fmt::Debug {
    /// Number of samples `N` per observation.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn atom(&self, position: &Position) -> Result<Atom>;

    /// Region in which this dictionary is unambiguous, if it knows one.
    fn bounds(&self) -> Option<Region> {
        None
    }
}

/// One radar: virtual array, frequency grid and pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarGeometry {
    pub sensor_position: [f64; 2],
    /// Broadside direction in radians, counterclockwise from +x.
    pub broadside: f64,
    /// Virtual element positions along the array axis, meters.
    pub element_offsets: Vec<f64>,
    /// Baseband sample frequencies, Hz.
    pub freq_grid: Vec<f64>,
    pub carrier_wavelength: f64,
    pub freq_spacing: f64,
    pub path_loss_enabled: bool,
    pub speed_of_light: f64,
}

/// Parameters of the default 3×3 MIMO radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarSettings {
    pub n_freq: usize,
    pub bandwidth: f64,
    pub carrier_wavelength: f64,
    pub path_loss: bool,
}

impl Default for RadarSettings {
    fn default() -> Self {
        Self {
            n_freq: 15,
            bandwidth: 20e6,
            carrier_wavelength: 0.3,
            path_loss: false,
        }
    }
}

/// Virtual element offsets (in carrier wavelengths) of three Tx spaced λ/2
/// and three Rx spaced λ, sorted.
const MIMO_3X3_OFFSETS: [f64; 9] = [-1.5, -1.0, -0.5, -0.5, 0.0, 0.5, 0.5, 1.0, 1.5];

/// Equally spaced, centred baseband frequencies.
pub fn baseband_frequencies(n_freq: usize, spacing: f64) -> Vec<f64> {
    let offset = if n_freq % 2 == 1 {
        (n_freq as f64 - 1.0) / 2.0
    } else {
        n_freq as f64 / 2.0
    };
    (0..n_freq).map(|n| (n as f64 - offset) * spacing).collect()
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl RadarGeometry {
    /// The 3×3 MIMO radar with `settings.n_freq` samples spanning
    /// `settings.bandwidth`.
    pub fn mimo_3x3(position: [f64; 2], broadside: f64, settings: &RadarSettings) -> Result<Self> {
        if settings.n_freq < 2 {
            return Err(Error::InvalidInput("need at least two frequency samples".into()));
        }
        if !(settings.bandwidth > 0.0 && settings.carrier_wavelength > 0.0) {
            return Err(Error::InvalidInput(
                "bandwidth and carrier wavelength must be positive".into(),
            ));
        }
        let freq_spacing = settings.bandwidth / (settings.n_freq as f64 - 1.0);
        Ok(Self {
            sensor_position: position,
            broadside,
            element_offsets: MIMO_3X3_OFFSETS
                .iter()
                .map(|o| o * settings.carrier_wavelength)
                .collect(),
            freq_grid: baseband_frequencies(settings.n_freq, freq_spacing),
            carrier_wavelength: settings.carrier_wavelength,
            freq_spacing,
            path_loss_enabled: settings.path_loss,
            speed_of_light: SPEED_OF_LIGHT,
        })
    }

    /// Radar at `position` whose broadside points at `target`.
    pub fn aimed_at(position: [f64; 2], target: [f64; 2], settings: &RadarSettings) -> Result<Self> {
        let broadside = (target[1] - position[1]).atan2(target[0] - position[0]);
        Self::mimo_3x3(position, broadside, settings)
    }

    pub fn sample_count(&self) -> usize {
        self.element_offsets.len() * self.freq_grid.len()
    }

    pub fn position(&self) -> Position {
        Position::new(self.sensor_position[0], self.sensor_position[1])
    }

    pub fn to_steering_params(&self, position: &Position) -> Result<SteeringParams> {
        let delta = position - self.position();
        let distance = delta.norm();
        if !(distance > 1e-9) {
            return Err(Error::DegenerateGeometry(position.x, position.y));
        }
        let bearing = delta.y.atan2(delta.x);
        Ok(SteeringParams {
            angle: wrap_angle(bearing - self.broadside),
            distance,
        })
    }

    pub fn angle_steering(&self, angle: f64) -> DVector<Complex64> {
        let k = -2.0 * PI * angle.sin() / self.carrier_wavelength;
        DVector::from_iterator(
            self.element_offsets.len(),
            self.element_offsets.iter().map(|p| Complex64::cis(k * p)),
        )
    }

    /// Amplitude factor of the range response; 1 without path loss.
    pub fn path_gain(&self, distance: f64) -> f64 {
        if self.path_loss_enabled {
            self.carrier_wavelength / ((4.0 * PI).powf(1.5) * distance * distance)
        } else {
            1.0
        }
    }

    pub fn range_steering(&self, distance: f64) -> Result<DVector<Complex64>> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::Domain(format!("distance must be positive, got {distance}")));
        }
        let gain = self.path_gain(distance);
        let k = -2.0 * PI * 2.0 * distance / self.speed_of_light;
        Ok(DVector::from_iterator(
            self.freq_grid.len(),
            self.freq_grid.iter().map(|f| Complex64::cis(k * f) * gain),
        ))
    }
}

impl Dictionary for RadarGeometry {
    fn len(&self) -> usize {
        self.sample_count()
    }

    fn atom(&self, position: &Position) -> Result<Atom> {
        let params = self.to_steering_params(position)?;
        let angle = self.angle_steering(params.angle);
        let range = self.range_steering(params.distance)?;
        let scale = 1.0 / (self.sample_count() as f64).sqrt();
        let n_f = range.len();
        let mut values = DVector::zeros(angle.len() * n_f);
        for (j, a) in angle.iter().enumerate() {
            let a = a * scale;
            for (n, r) in range.iter().enumerate() {
                values[j * n_f + n] = a * r;
            }
        }
        Ok(Atom(values))
    }
}
