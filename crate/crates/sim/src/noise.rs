//! Noise parameters and deterministic random streams.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub ab_background_mean: f64,
    pub ab_background_sigma: f64,
    /// Per-axis marker centre jitter in the image, pixels.
    pub blob_jitter_px: f64,
    /// Per-marker radial depth error, mm.
    pub depth_sigma_mm: f64,
    pub marker_dropout_prob: f64,
    pub tracker_translation_sigma_mm: f64,
    pub tracker_rotation_sigma_deg: f64,
    /// Correlation time of the image-side marker errors (jitter and depth).
    /// Zero gives independent errors every frame.
    pub sensor_correlation_s: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            ab_background_mean: 64.0,
            ab_background_sigma: 30.0,
            blob_jitter_px: 0.3,
            depth_sigma_mm: 1.5,
            marker_dropout_prob: 0.005,
            tracker_translation_sigma_mm: 0.1,
            tracker_rotation_sigma_deg: 0.05,
            sensor_correlation_s: 2.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// No randomness at all; the background is a flat mean level.
    pub fn zero() -> Self {
        Self {
            ab_background_sigma: 0.0,
            blob_jitter_px: 0.0,
            depth_sigma_mm: 0.0,
            marker_dropout_prob: 0.0,
            tracker_translation_sigma_mm: 0.0,
            tracker_rotation_sigma_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Multiplies every standard deviation by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            ab_background_sigma: self.ab_background_sigma * factor,
            blob_jitter_px: self.blob_jitter_px * factor,
            depth_sigma_mm: self.depth_sigma_mm * factor,
            tracker_translation_sigma_mm: self.tracker_translation_sigma_mm * factor,
            tracker_rotation_sigma_deg: self.tracker_rotation_sigma_deg * factor,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let sigmas = [
            self.ab_background_sigma,
            self.blob_jitter_px,
            self.depth_sigma_mm,
            self.tracker_translation_sigma_mm,
            self.tracker_rotation_sigma_deg,
            self.sensor_correlation_s,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidNoise("standard deviations must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.marker_dropout_prob) {
            return Err(Error::InvalidNoise("dropout probability must lie in [0, 1]".into()));
        }
        if !(0.0..=65535.0).contains(&self.ab_background_mean) {
            return Err(Error::InvalidNoise("background mean must fit in u16".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let noise: NoiseModel = serde_json::from_str(text)?;
        noise.validate()?;
        Ok(noise)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Independent random streams, one per purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Background = 1,
    Dropout = 2,
    Tracker = 3,
    JitterU = 4,
    JitterV = 5,
    Depth = 6,
    Controller = 7,
}

/// Generator for (`seed`, `domain`, `index`). Distinct triples give
/// independent streams, so frames can be produced in any order.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng
}

/// Smooth unit-variance Gaussian process in time, one per `key`.
///
/// Independent normals sit on knots `tau_s` apart; between knots they are
/// blended with weights `cos`/`sin` of the fractional position, which keeps
/// the marginal variance exactly 1. With `tau_s == 0` every `tick` draws a
/// fresh value.
pub fn correlated_normal(seed: u64, domain: Domain, key: u64, t_s: f64, tau_s: f64, tick: u64) -> f64 {
    let knot = |k: u64| -> f64 { StandardNormal.sample(&mut stream(seed, domain, (key << 32) ^ k)) };
    if tau_s <= 0.0 {
        return knot(tick);
    }
    let x = t_s.max(0.0) / tau_s;
    let k = x.floor();
    let s = (x - k) * std::f64::consts::FRAC_PI_2;
    s.cos() * knot(k as u64) + s.sin() * knot(k as u64 + 1)
}
