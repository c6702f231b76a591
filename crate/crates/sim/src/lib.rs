//! Synthetic head-camera frames, optical tracker readings and a scripted
//! alignment controller, all seeded and reproducible.

pub mod controller;
pub mod noise;
pub mod presets;
pub mod render;
pub mod scene;
pub mod tracker;

pub use controller::{approach, AlignmentController, AlignmentOutcome, ControllerConfig};
pub use noise::NoiseModel;
pub use render::{project_markers, render_frame, timestamp_us};
pub use scene::{Keyframe, Scene, SceneCamera, SceneTool, TrackerPlacement, Trajectory};
pub use tracker::{perturb_pose, simulate_tracker_packets};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("alignment did not converge after {steps} steps (last live error {translation_mm:.2} mm, {rotation_deg:.2} deg)")]
    NotConverged {
        steps: usize,
        translation_mm: f64,
        rotation_deg: f64,
    },
    #[error(transparent)]
    Core(#[from] irtrack_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
