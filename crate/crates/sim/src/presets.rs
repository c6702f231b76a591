//! Ready-made tools and scenes.

use irtrack_core::depth::Intrinsics;
use irtrack_core::geometry::{RigidTransform, Vec3};
use irtrack_core::registration::ToolGeometry;

use crate::scene::{Keyframe, Scene, SceneCamera, SceneTool, TrackerPlacement, Trajectory};

pub const REFERENCE_ID: u16 = 1;
pub const PROBE_ID: u16 = 2;
pub const POINTER_ID: u16 = 3;

/// Probe tip in the probe's own frame.
pub const PROBE_TIP: [f64; 3] = [0.0, 0.0, -150.0];

fn planar(points: [[f64; 2]; 4]) -> Vec<Vec3> {
    points.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect()
}

/// Three planar four-marker arrays whose inter-marker distances differ by
/// at least 11 mm. The reference is the larger, bone-mounted array.
pub fn standard_tools() -> Vec<ToolGeometry> {
    vec![
        ToolGeometry::new(REFERENCE_ID, "reference", planar([[0.0, 0.0], [-48.0, -88.0], [72.0, -16.0], [-96.0, 72.0]])),
        ToolGeometry::new(PROBE_ID, "probe", planar([[0.0, 0.0], [5.0, 55.0], [55.0, -45.0], [-40.0, -15.0]])),
        ToolGeometry::new(POINTER_ID, "pointer", planar([[0.0, 0.0], [-35.0, 25.0], [60.0, 40.0], [-10.0, -55.0]])),
    ]
}

fn tool(id: u16) -> ToolGeometry {
    standard_tools().into_iter().find(|t| t.tool_id == id).expect("standard tool id")
}

fn deg(axis: [f64; 3], angle: f64, t: [f64; 3]) -> RigidTransform {
    RigidTransform::from_axis_angle_deg(Vec3::from(axis), angle, Vec3::from(t))
}

/// Optical tracker a couple of metres in front of the head, facing back.
pub fn default_tracker() -> TrackerPlacement {
    TrackerPlacement {
        world_from_tracker: deg([0.1, 1.0, 0.05], 170.0, [250.0, -350.0, 2400.0]),
        min_range_mm: 500.0,
        max_range_mm: 3000.0,
    }
}

/// Head camera looking down +z from the world origin with small sway.
pub fn swaying_camera() -> SceneCamera {
    SceneCamera {
        intrinsics: Intrinsics::default(),
        trajectory: Trajectory::Sway {
            centre: RigidTransform::identity(),
            amplitude_mm: 20.0,
            amplitude_deg: 2.0,
            period_s: 6.0,
        },
    }
}

pub fn static_camera() -> SceneCamera {
    SceneCamera {
        intrinsics: Intrinsics::default(),
        trajectory: Trajectory::fixed(RigidTransform::identity()),
    }
}

/// Two stationary arrays about 60 cm from a swaying head camera.
pub fn relative_tracking_scene() -> Scene {
    Scene::new(
        vec![
            SceneTool {
                geometry: tool(REFERENCE_ID),
                trajectory: Trajectory::fixed(deg([0.3, 1.0, 0.1], 25.0, [-85.0, 10.0, 620.0])),
            },
            SceneTool {
                geometry: tool(PROBE_ID),
                trajectory: Trajectory::fixed(deg([1.0, -0.4, 0.2], 200.0, [85.0, -10.0, 660.0])),
            },
        ],
        swaying_camera(),
        default_tracker(),
    )
}

/// Probe pose holding the probe tip at `tip` with the shaft along `axis`.
pub fn probe_pose_for(tip: Vec3, axis: Vec3, roll_deg: f64) -> RigidTransform {
    let local_axis = -Vec3::z();
    let align = nalgebra::UnitQuaternion::rotation_between(&local_axis, &axis.normalize())
        .unwrap_or_else(|| nalgebra::UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
    let roll = nalgebra::UnitQuaternion::from_axis_angle(&Vec3::z_axis(), roll_deg.to_radians());
    let rotation = align * roll;
    RigidTransform::new(rotation, tip - rotation * Vec3::from(PROBE_TIP))
}

/// Four planned drilling trajectories as probe poses in the world frame.
pub fn task_plans() -> Vec<RigidTransform> {
    vec![
        probe_pose_for(Vec3::new(10.0, 40.0, 660.0), Vec3::new(0.0, 0.0, 1.0), 10.0),
        probe_pose_for(Vec3::new(-20.0, 50.0, 650.0), Vec3::new(0.25, -0.1, 1.0), -15.0),
        probe_pose_for(Vec3::new(30.0, 30.0, 670.0), Vec3::new(-0.2, 0.2, 1.0), 30.0),
        probe_pose_for(Vec3::new(0.0, 60.0, 640.0), Vec3::new(0.1, 0.25, 1.0), -35.0),
    ]
}

/// Reference array above the work area and a probe that starts at the
/// first planned trajectory.
pub fn task_scene() -> Scene {
    Scene::new(
        vec![
            SceneTool {
                geometry: tool(REFERENCE_ID),
                trajectory: Trajectory::fixed(deg([0.2, 1.0, 0.1], 20.0, [0.0, -140.0, 580.0])),
            },
            SceneTool {
                geometry: tool(PROBE_ID),
                trajectory: Trajectory::fixed(task_plans()[0]),
            },
        ],
        swaying_camera(),
        default_tracker(),
    )
}

/// A reference array at 60 cm and a second array travelling straight away
/// from the camera from `near_mm` to `far_mm` over `duration_s`.
pub fn receding_tool_scene(near_mm: f64, far_mm: f64, duration_s: f64) -> Scene {
    let at = |z: f64| deg([1.0, 0.0, 0.0], 10.0, [90.0, 0.0, z]);
    Scene::new(
        vec![
            SceneTool {
                geometry: tool(REFERENCE_ID),
                trajectory: Trajectory::fixed(deg([0.3, 1.0, 0.1], 25.0, [-90.0, 0.0, 600.0])),
            },
            SceneTool {
                geometry: tool(PROBE_ID),
                trajectory: Trajectory::Keyframes {
                    keys: vec![
                        Keyframe { t_s: 0.0, pose: at(near_mm) },
                        Keyframe { t_s: duration_s, pose: at(far_mm) },
                    ],
                },
            },
        ],
        static_camera(),
        default_tracker(),
    )
}

/// One array straight ahead at `distance_mm`.
pub fn single_tool_scene(distance_mm: f64) -> Scene {
    Scene::new(
        vec![SceneTool {
            geometry: tool(REFERENCE_ID),
            trajectory: Trajectory::fixed(deg([0.3, 1.0, 0.1], 25.0, [10.0, -5.0, distance_mm])),
        }],
        static_camera(),
        default_tracker(),
    )
}
