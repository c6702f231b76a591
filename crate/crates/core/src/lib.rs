//! Infrared marker tracking: rigid transforms, sensor frames, blob detection,
//! depth unprojection, tool registration, pose filtering and calibration.

pub mod ab_image;
pub mod calibration;
pub mod depth;
pub mod filter;
pub mod frame;
pub mod geometry;
pub mod registration;
pub mod tracking;

pub use ab_image::{detect_blobs, extract_keypoints, threshold_ab, Blob, BlobFilterParams};
pub use calibration::{
    compute_calibration, resolve_render_pose, update_calibration, CalibrationState, Calibrator, DeviceKind,
    DeviceObservation,
};
pub use depth::{camera_to_world, sample_depth, unproject, CameraModel, Intrinsics, UnprojectionMap};
pub use filter::{kalman_update, KalmanConfig, PoseFilter, PoseFilterState};
pub use frame::{SensorFrame, SensorImage};
pub use geometry::{compose, invert, pose_error, relative_pose, PoseError, RigidTransform, Vec3};
pub use registration::{match_tool, register_point_sets, Correspondence, Registration, ToolGeometry, ToolSet};
pub use tracking::{measure_tools, FrameMeasurement, ToolTracker, TrackerParams};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} bytes or pixels, got {actual}")]
    ImageSize { expected: usize, actual: usize },
    #[error("pixel ({u}, {v}) outside the sensor")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("depth {0} mm outside the valid range")]
    InvalidDepth(f64),
    #[error("point sets differ in length ({src} vs {dst})")]
    PointCountMismatch { src: usize, dst: usize },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate (collinear) point set")]
    DegeneratePointSet,
    #[error("tool {tool_id}: {reason}")]
    InadmissibleGeometry { tool_id: u16, reason: String },
    #[error("no calibration available")]
    NoCalibration,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
