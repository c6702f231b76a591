//! Red-to-green guidance colouring and drilling-trajectory error.

use irtrack_core::geometry::{PoseError, RigidTransform, Vec3};
use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD_MM: f64 = 5.0;
pub const DEFAULT_THRESHOLD_DEG: f64 = 5.0;

/// How green the position sphere and the orientation cylinder are drawn:
/// 1 at zero error, 0 at or beyond the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSignal {
    pub sphere_green_fraction: f64,
    pub cylinder_green_fraction: f64,
}

impl GuidanceSignal {
    /// Both channels are under threshold.
    pub fn is_green(&self) -> bool {
        self.sphere_green_fraction > 0.0 && self.cylinder_green_fraction > 0.0
    }
}

pub fn guidance_signal(err_mm: f64, err_deg: f64, thresh_mm: f64, thresh_deg: f64) -> GuidanceSignal {
    let fraction = |err: f64, thresh: f64| (1.0 - err / thresh).clamp(0.0, 1.0);
    GuidanceSignal {
        sphere_green_fraction: fraction(err_mm, thresh_mm),
        cylinder_green_fraction: fraction(err_deg, thresh_deg),
    }
}

/// The drilling tip and shaft direction of a tracked tool, in its own frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolModel {
    pub tip: Vec3,
    pub axis: Vec3,
}

impl ToolModel {
    /// Tip `tip_mm` along the tool's local -z axis.
    pub fn probe(tip_mm: f64) -> Self {
        Self {
            tip: Vec3::new(0.0, 0.0, -tip_mm),
            axis: -Vec3::z(),
        }
    }

    /// World tip position and unit axis of a tool at `pose`.
    pub fn plan_for(&self, pose: &RigidTransform) -> TrajectoryPlan {
        TrajectoryPlan {
            tip: pose.transform_point(&self.tip),
            axis: pose.transform_vector(&self.axis).normalize(),
        }
    }
}

/// A planned entry point and drilling direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub tip: Vec3,
    pub axis: Vec3,
}

impl TrajectoryPlan {
    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            tip: t.transform_point(&self.tip),
            axis: t.transform_vector(&self.axis),
        }
    }
}

/// Tip distance and angle between the tool's live axis and the plan.
pub fn trajectory_error(tool_pose: &RigidTransform, plan: &TrajectoryPlan, model: &ToolModel) -> PoseError {
    let live = model.plan_for(tool_pose);
    let cos = plan.axis.normalize().dot(&live.axis).clamp(-1.0, 1.0);
    PoseError {
        translation_mm: (live.tip - plan.tip).norm(),
        rotation_deg: cos.acos().to_degrees(),
    }
}
