//! Scene description: tools, head camera, optical tracker placement.

use std::path::Path;

use irtrack_core::depth::Intrinsics;
use irtrack_core::geometry::{RigidTransform, Vec3};
use irtrack_core::registration::ToolGeometry;
use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::Error;

pub const DEFAULT_MARKER_RADIUS_MM: f64 = 6.35;
pub const DEFAULT_FRAME_RATE_HZ: f64 = 45.0;

/// A pose over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        pose: RigidTransform,
    },
    /// Piecewise linear in translation, slerp in rotation, clamped at the ends.
    Keyframes {
        keys: Vec<Keyframe>,
    },
    /// Small quasi-periodic motion around `centre`: each translation axis
    /// swings by up to `amplitude_mm`, each rotation axis by up to
    /// `amplitude_deg`, at incommensurate rates.
    Sway {
        centre: RigidTransform,
        amplitude_mm: f64,
        amplitude_deg: f64,
        period_s: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t_s: f64,
    pub pose: RigidTransform,
}

const SWAY_RATES: [f64; 6] = [1.0, 0.73, 0.59, 0.87, 0.67, 1.13];
const SWAY_PHASES: [f64; 6] = [0.0, 1.3, 2.1, 0.7, 2.9, 4.2];

impl Trajectory {
    pub fn fixed(pose: RigidTransform) -> Self {
        Trajectory::Static { pose }
    }

    pub fn pose_at(&self, t_s: f64) -> RigidTransform {
        match self {
            Trajectory::Static { pose } => *pose,
            Trajectory::Keyframes { keys } => {
                let first = keys.first().expect("validated non-empty");
                if t_s <= first.t_s || keys.len() == 1 {
                    return first.pose;
                }
                let last = keys.last().unwrap();
                if t_s >= last.t_s {
                    return last.pose;
                }
                let i = keys.partition_point(|k| k.t_s <= t_s);
                let (a, b) = (&keys[i - 1], &keys[i]);
                let s = (t_s - a.t_s) / (b.t_s - a.t_s);
                let rotation = a.pose.rotation().slerp(b.pose.rotation(), s);
                let translation = a.pose.translation().lerp(b.pose.translation(), s);
                RigidTransform::new(rotation, translation)
            }
            Trajectory::Sway {
                centre,
                amplitude_mm,
                amplitude_deg,
                period_s,
            } => {
                let w = |i: usize| (std::f64::consts::TAU * SWAY_RATES[i] * t_s / period_s + SWAY_PHASES[i]).sin();
                let offset = Vec3::new(w(0), w(1), w(2)) * *amplitude_mm;
                let angles = Vec3::new(w(3), w(4), w(5)) * amplitude_deg.to_radians();
                let wobble = UnitQuaternion::from_euler_angles(angles.x, angles.y, angles.z);
                RigidTransform::new(centre.rotation() * wobble, centre.translation() + offset)
            }
        }
    }

    fn validate(&self, what: &str) -> Result<(), Error> {
        match self {
            Trajectory::Static { .. } => Ok(()),
            Trajectory::Keyframes { keys } => {
                if keys.is_empty() {
                    return Err(Error::InvalidScene(format!("{what}: empty keyframe list")));
                }
                if keys.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                    return Err(Error::InvalidScene(format!("{what}: keyframe times must increase")));
                }
                Ok(())
            }
            Trajectory::Sway {
                amplitude_mm,
                amplitude_deg,
                period_s,
                ..
            } => {
                if !(*period_s > 0.0) || !(*amplitude_mm >= 0.0) || !(*amplitude_deg >= 0.0) {
                    return Err(Error::InvalidScene(format!("{what}: sway needs period > 0 and amplitudes >= 0")));
                }
                Ok(())
            }
        }
    }

    /// Times worth spot-checking for scene validity.
    fn sample_times(&self, horizon_s: f64) -> Vec<f64> {
        match self {
            Trajectory::Static { .. } => vec![0.0],
            Trajectory::Keyframes { keys } => keys.iter().map(|k| k.t_s).collect(),
            Trajectory::Sway { period_s, .. } => {
                let n = 64;
                (0..n).map(|i| horizon_s.max(*period_s * 4.0) * i as f64 / n as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTool {
    #[serde(flatten)]
    pub geometry: ToolGeometry,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCamera {
    #[serde(default)]
    pub intrinsics: Intrinsics,
    /// Camera-to-world pose over time.
    pub trajectory: Trajectory,
}

/// Where the optical tracker sits and which tools it can see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerPlacement {
    /// Tracker frame expressed in the headset world frame.
    pub world_from_tracker: RigidTransform,
    pub min_range_mm: f64,
    pub max_range_mm: f64,
}

impl Default for TrackerPlacement {
    fn default() -> Self {
        Self {
            world_from_tracker: RigidTransform::identity(),
            min_range_mm: 500.0,
            max_range_mm: 3000.0,
        }
    }
}

impl TrackerPlacement {
    /// Whether a tool with origin `world_point` lies in the working volume.
    pub fn contains(&self, world_point: &Vec3) -> bool {
        let d = self.world_from_tracker.inverse().transform_point(world_point).norm();
        d >= self.min_range_mm && d <= self.max_range_mm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub tools: Vec<SceneTool>,
    pub camera: SceneCamera,
    #[serde(default)]
    pub tracker: TrackerPlacement,
    #[serde(default = "default_marker_radius")]
    pub marker_radius_mm: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
}

fn default_marker_radius() -> f64 {
    DEFAULT_MARKER_RADIUS_MM
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE_HZ
}

impl Scene {
    pub fn new(tools: Vec<SceneTool>, camera: SceneCamera, tracker: TrackerPlacement) -> Self {
        Self {
            tools,
            camera,
            tracker,
            marker_radius_mm: DEFAULT_MARKER_RADIUS_MM,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn geometries(&self) -> Vec<ToolGeometry> {
        self.tools.iter().map(|t| t.geometry.clone()).collect()
    }

    pub fn tool(&self, tool_id: u16) -> Option<&SceneTool> {
        self.tools.iter().find(|t| t.geometry.tool_id == tool_id)
    }

    /// Time of frame `index`.
    pub fn frame_time(&self, index: u64) -> f64 {
        index as f64 / self.frame_rate_hz
    }

    pub fn camera_pose(&self, t_s: f64) -> RigidTransform {
        self.camera.trajectory.pose_at(t_s)
    }

    /// Ground-truth world poses of every tool at `t_s`.
    pub fn tool_poses(&self, t_s: f64) -> Vec<(u16, RigidTransform)> {
        self.tools.iter().map(|t| (t.geometry.tool_id, t.trajectory.pose_at(t_s))).collect()
    }

    /// Ground-truth pose of a tool in the optical tracker's frame.
    pub fn tool_pose_in_tracker(&self, tool: &SceneTool, t_s: f64) -> RigidTransform {
        self.tracker.world_from_tracker.inverse() * tool.trajectory.pose_at(t_s)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.tools.is_empty() {
            return Err(Error::InvalidScene("scene has no tools".into()));
        }
        if !(self.marker_radius_mm > 0.0) || !(self.frame_rate_hz > 0.0) {
            return Err(Error::InvalidScene("marker radius and frame rate must be positive".into()));
        }
        let t = &self.tracker;
        if !(t.min_range_mm >= 0.0 && t.max_range_mm >= t.min_range_mm) {
            return Err(Error::InvalidScene("tracker range must satisfy 0 <= min <= max".into()));
        }
        let mut ids: Vec<u16> = self.tools.iter().map(|t| t.geometry.tool_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScene("duplicate tool id".into()));
        }
        self.camera.trajectory.validate("camera")?;
        for tool in &self.tools {
            tool.trajectory.validate(&tool.geometry.name)?;
        }
        let mut times = self.camera.trajectory.sample_times(10.0);
        for tool in &self.tools {
            times.extend(tool.trajectory.sample_times(10.0));
        }
        for t_s in times {
            if let Some((a, b)) = crate::render::overlapping_markers(self, t_s) {
                return Err(Error::InvalidScene(format!(
                    "marker discs of tools {a} and {b} overlap in the image at t = {t_s:.3} s"
                )));
            }
        }
        Ok(())
    }
}
