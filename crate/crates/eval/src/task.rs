//! Simulated guided-drilling study: calibrate, show each planned trajectory
//! through the calibration, let a scripted hand align the probe, then read
//! the held pose back from the tracker.

use irtrack_core::calibration::{Calibrator, DeviceKind, DeviceObservation, DEFAULT_PAIRING_WINDOW_US};
use irtrack_core::depth::CameraModel;
use irtrack_core::geometry::{PoseError, RigidTransform, Vec3};
use irtrack_core::tracking::{ToolTracker, TrackerParams};
use irtrack_sim::controller::{AlignmentController, ControllerConfig};
use irtrack_sim::presets::{task_plans, PROBE_ID, PROBE_TIP, REFERENCE_ID};
use irtrack_sim::{render_frame, simulate_tracker_packets, NoiseModel, Scene, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::guidance::{trajectory_error, ToolModel, TrajectoryPlan};
use crate::stats::{summarize, ErrorSample, StatsSummary};
use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub users: u32,
    pub readings_per_trajectory: u32,
    /// Planned probe poses in the world frame.
    pub plans: Vec<RigidTransform>,
    /// Frames the headset watches the reference while calibrating.
    pub calibration_frames: u64,
    /// Leading frames of the look left out of the average while the pose
    /// filter settles.
    pub calibration_warmup: u64,
    pub controller: ControllerConfig,
    /// Where each attempt starts, relative to the planned pose (tool frame).
    pub start_offset: RigidTransform,
    pub tracker: TrackerParams,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            users: 8,
            readings_per_trajectory: 16,
            plans: task_plans(),
            calibration_frames: 225,
            calibration_warmup: 45,
            controller: ControllerConfig {
                pivot: Vec3::from(PROBE_TIP),
                ..Default::default()
            },
            start_offset: RigidTransform::from_axis_angle_deg(Vec3::new(1.0, 1.0, 0.0), 20.0, Vec3::new(30.0, -20.0, -60.0)),
            tracker: TrackerParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskRun {
    pub samples: Vec<ErrorSample>,
    pub summary: StatsSummary,
    /// Controller steps per (user, trajectory), in sample order.
    pub steps: Vec<usize>,
}

/// SplitMix64 finaliser, used to give every user an unrelated seed.
fn user_seed(seed: u64, user: u32) -> u64 {
    let mut z = seed ^ (u64::from(user) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn pose_of(obs: &[DeviceObservation], tool_id: u16) -> Option<RigidTransform> {
    obs.iter().find(|o| o.tool_id == tool_id).map(|o| o.pose)
}

pub fn run_task_experiment(scene: &Scene, noise: &NoiseModel, config: &TaskConfig) -> Result<TaskRun, EvalError> {
    for id in [REFERENCE_ID, PROBE_ID] {
        if scene.tool(id).is_none() {
            return Err(EvalError::TooFewTools {
                needed: 2,
                found: scene.tools.len(),
            });
        }
    }
    scene.validate()?;
    noise.validate()?;
    let per_user: Vec<(Vec<ErrorSample>, Vec<usize>)> = (0..config.users)
        .into_par_iter()
        .map(|user| run_user(scene, &noise.with_seed(user_seed(noise.seed, user)), config, user))
        .collect::<Result<_, _>>()?;
    let mut samples = Vec::new();
    let mut steps = Vec::new();
    for (s, n) in per_user {
        samples.extend(s);
        steps.extend(n);
    }
    Ok(TaskRun {
        summary: summarize(&samples)?,
        samples,
        steps,
    })
}

struct Session<'a> {
    scene: Scene,
    noise: &'a NoiseModel,
    hmd: ToolTracker,
    frame: u64,
}

impl Session<'_> {
    fn place_probe(&mut self, pose: RigidTransform) {
        let probe = self.scene.tools.iter_mut().find(|t| t.geometry.tool_id == PROBE_ID).expect("probe in scene");
        probe.trajectory = Trajectory::fixed(pose);
    }

    fn time(&self) -> f64 {
        self.scene.frame_time(self.frame)
    }

    /// Headset detections and tracker readings for the current frame, then
    /// advances the clock.
    fn observe(&mut self) -> (Vec<DeviceObservation>, Vec<DeviceObservation>) {
        let t = self.time();
        let sensor = render_frame(&self.scene, t, self.noise);
        let hmd = self
            .hmd
            .detect_tools(&sensor)
            .into_iter()
            .map(|(id, pose)| DeviceObservation::new(DeviceKind::Hmd, id, pose, sensor.timestamp_us))
            .collect();
        let tracker = simulate_tracker_packets(&self.scene, t, self.noise);
        self.frame += 1;
        (hmd, tracker)
    }

    fn read_tracker(&mut self) -> Vec<DeviceObservation> {
        let packets = simulate_tracker_packets(&self.scene, self.time(), self.noise);
        self.frame += 1;
        packets
    }
}

fn run_user(scene: &Scene, noise: &NoiseModel, config: &TaskConfig, user: u32) -> Result<(Vec<ErrorSample>, Vec<usize>), EvalError> {
    let camera = CameraModel::new(scene.camera.intrinsics);
    let mut session = Session {
        scene: scene.clone(),
        noise,
        hmd: ToolTracker::new(scene.geometries(), camera, config.tracker),
        frame: 0,
    };

    // One look at the reference array, averaged once the filter has settled.
    let averaged = config.calibration_frames.saturating_sub(config.calibration_warmup).max(1);
    let mut calibrator = Calibrator::new(DEFAULT_PAIRING_WINDOW_US, averaged as usize);
    for _ in 0..config.calibration_frames {
        let (hmd, tracker) = session.observe();
        let hmd: Vec<_> = hmd.into_iter().filter(|o| o.tool_id == REFERENCE_ID).collect();
        calibrator.update(&hmd, &tracker);
    }
    let Some(&t_h_c) = calibrator.state().t_h_c() else {
        return Err(EvalError::CalibrationFailed { user, tool_id: REFERENCE_ID });
    };
    let world_from_tracker = scene.tracker.world_from_tracker;
    let model = ToolModel::probe(-PROBE_TIP[2]);

    let mut samples = Vec::new();
    let mut steps = Vec::new();
    for (j, plan_world) in config.plans.iter().enumerate() {
        let trajectory = j as u32;
        // The plan lives in tracker coordinates; the hologram is drawn
        // wherever the calibration puts it.
        let plan_tracker = world_from_tracker.inverse() * *plan_world;
        let hologram = t_h_c * plan_tracker;
        let hologram_plan = model.plan_for(&hologram);
        let reading_plan = model.plan_for(&plan_tracker);

        let mut controller = AlignmentController::new(config.controller, *plan_world * config.start_offset, noise.seed, u64::from(trajectory));
        let outcome = controller
            .run(&hologram, |held| {
                session.place_probe(*held);
                let tracker = session.read_tracker();
                live_error(&tracker, &t_h_c, &hologram_plan, &model)
            })
            .map_err(|source| EvalError::Alignment { user, trajectory, source })?;
        steps.push(outcome.steps);
        log::debug!("user {user} trajectory {trajectory}: held after {} steps", outcome.steps);

        session.place_probe(outcome.held);
        for reading in 0..config.readings_per_trajectory {
            let frame = session.frame;
            let packets = session.read_tracker();
            let Some(probe) = pose_of(&packets, PROBE_ID) else {
                return Err(EvalError::TrackerLost { user, trajectory });
            };
            let e = trajectory_error(&probe, &reading_plan, &model);
            samples.push(ErrorSample {
                translation_mm: e.translation_mm,
                rotation_deg: e.rotation_deg,
                frame,
                user,
                trajectory,
                reading,
            });
        }
    }
    Ok((samples, steps))
}

/// Guidance error between the hologram and the tracked probe carried into
/// the headset frame through the calibration.
fn live_error(tracker: &[DeviceObservation], t_h_c: &RigidTransform, plan: &TrajectoryPlan, model: &ToolModel) -> PoseError {
    match pose_of(tracker, PROBE_ID).map(|p| t_h_c * &p) {
        Some(pose) => trajectory_error(&pose, plan, model),
        None => PoseError {
            translation_mm: f64::INFINITY,
            rotation_deg: f64::INFINITY,
        },
    }
}
