//! Per-tool pose smoothing.
//!
//! Translation runs through a constant-velocity Kalman filter per axis
//! (position + velocity, white-noise acceleration). Orientation is pulled
//! toward each measurement by spherical interpolation with the same
//! covariance-derived gain as the position channel.

use nalgebra::{Matrix2, UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// Continuous white-acceleration spectral density, mm^2/s^3.
    pub process_noise: f64,
    /// Per-axis position measurement variance, mm^2.
    pub measurement_noise: f64,
    /// Initial velocity variance, (mm/s)^2.
    pub initial_velocity_variance: f64,
    /// Gaps longer than this restart the filter from the raw measurement, s.
    pub reset_gap_s: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 4.0,
            initial_velocity_variance: 100.0,
            reset_gap_s: 0.5,
        }
    }
}

/// Filter state for one tool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFilterState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: UnitQuaternion<f64>,
    /// Shared (position, velocity) covariance; identical for all three axes
    /// because they share parameters and initialisation.
    pub covariance: Matrix2<f64>,
    /// Gain applied at the last update.
    pub last_gain: f64,
    pub last_timestamp_us: u64,
}

impl PoseFilterState {
    /// Filter initialised at the first measurement.
    pub fn initialize(measurement: &RigidTransform, timestamp_us: u64, config: &KalmanConfig) -> Self {
        Self {
            position: *measurement.translation(),
            velocity: Vec3::zeros(),
            orientation: *measurement.rotation(),
            covariance: Matrix2::new(config.measurement_noise, 0.0, 0.0, config.initial_velocity_variance),
            last_gain: 1.0,
            last_timestamp_us: timestamp_us,
        }
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }
}

/// One predict + correct step, `dt` seconds after the previous update.
///
/// A gap longer than `config.reset_gap_s` (or a non-positive `dt`) restarts
/// the filter at the measurement.
pub fn kalman_update(
    state: &PoseFilterState,
    measurement: &RigidTransform,
    dt: f64,
    config: &KalmanConfig,
) -> PoseFilterState {
    let timestamp_us = state.last_timestamp_us + (dt.max(0.0) * 1e6).round() as u64;
    if !(dt > 0.0) || dt > config.reset_gap_s {
        return PoseFilterState::initialize(measurement, timestamp_us, config);
    }

    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let q = config.process_noise;
    let q_mat = Matrix2::new(q * dt.powi(3) / 3.0, q * dt * dt / 2.0, q * dt * dt / 2.0, q * dt);
    let p_pred = f * state.covariance * f.transpose() + q_mat;

    let innovation_var = p_pred[(0, 0)] + config.measurement_noise;
    let gain = Vector2::new(p_pred[(0, 0)], p_pred[(1, 0)]) / innovation_var;
    // Joseph form keeps the covariance symmetric and positive semi-definite.
    let i_kh = Matrix2::new(1.0 - gain.x, 0.0, -gain.y, 1.0);
    let mut p_post = i_kh * p_pred * i_kh.transpose()
        + Matrix2::new(gain.x * gain.x, gain.x * gain.y, gain.x * gain.y, gain.y * gain.y) * config.measurement_noise;
    p_post = (p_post + p_post.transpose()) * 0.5;

    let mut position = Vec3::zeros();
    let mut velocity = Vec3::zeros();
    let z = measurement.translation();
    for axis in 0..3 {
        let x_pred = Vector2::new(state.position[axis] + dt * state.velocity[axis], state.velocity[axis]);
        let residual = z[axis] - x_pred.x;
        position[axis] = x_pred.x + gain.x * residual;
        velocity[axis] = x_pred.y + gain.y * residual;
    }

    let orientation = state
        .orientation
        .try_slerp(measurement.rotation(), gain.x, 1e-12)
        .unwrap_or(*measurement.rotation());

    PoseFilterState {
        position,
        velocity,
        orientation,
        covariance: p_post,
        last_gain: gain.x,
        last_timestamp_us: timestamp_us,
    }
}

/// Stateful wrapper that tracks timestamps and initialisation.
#[derive(Debug, Clone, Default)]
pub struct PoseFilter {
    pub config: KalmanConfig,
    state: Option<PoseFilterState>,
}

impl PoseFilter {
    pub fn new(config: KalmanConfig) -> Self {
        Self { config, state: None }
    }

    pub fn state(&self) -> Option<&PoseFilterState> {
        self.state.as_ref()
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Feeds a measurement taken at `timestamp_us` and returns the posterior pose.
    pub fn update(&mut self, measurement: &RigidTransform, timestamp_us: u64) -> RigidTransform {
        let next = match &self.state {
            None => PoseFilterState::initialize(measurement, timestamp_us, &self.config),
            Some(s) if timestamp_us < s.last_timestamp_us => {
                PoseFilterState::initialize(measurement, timestamp_us, &self.config)
            }
            Some(s) => {
                let dt = (timestamp_us - s.last_timestamp_us) as f64 * 1e-6;
                let mut next = kalman_update(s, measurement, dt, &self.config);
                next.last_timestamp_us = timestamp_us;
                next
            }
        };
        let pose = next.pose();
        self.state = Some(next);
        pose
    }
}
