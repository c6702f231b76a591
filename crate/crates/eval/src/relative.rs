//! Paired relative-pose readings from the headset and the optical tracker.

use irtrack_core::calibration::DeviceObservation;
use irtrack_core::depth::CameraModel;
use irtrack_core::geometry::{pose_error, relative_pose, RigidTransform};
use irtrack_core::tracking::{measure_tools, FrameMeasurement, ToolTracker, TrackerParams};
use irtrack_sim::{render_frame, simulate_tracker_packets, NoiseModel, Scene};
use rayon::prelude::*;

use crate::stats::{summarize, ErrorSample, StatsSummary};
use crate::EvalError;

const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct RelativeRun {
    pub samples: Vec<ErrorSample>,
    pub summary: StatsSummary,
    pub frames: u64,
    /// Frames where either tool was missing from one of the devices.
    pub skipped: u64,
}

fn tracker_pose(obs: &[DeviceObservation], tool_id: u16) -> Option<RigidTransform> {
    obs.iter().find(|o| o.tool_id == tool_id).map(|o| o.pose)
}

/// Relative pose of the scene's second tool with respect to its first,
/// from filtered headset detections versus tracker readings, one sample per
/// frame in which both devices see both tools.
///
/// Gives up after `2 * n_pairs + 100` frames.
pub fn run_relative_tracking(scene: &Scene, noise: &NoiseModel, n_pairs: usize) -> Result<RelativeRun, EvalError> {
    run_relative_tracking_with(scene, noise, n_pairs, TrackerParams::default())
}

pub fn run_relative_tracking_with(
    scene: &Scene,
    noise: &NoiseModel,
    n_pairs: usize,
    params: TrackerParams,
) -> Result<RelativeRun, EvalError> {
    if scene.tools.len() < 2 {
        return Err(EvalError::TooFewTools {
            needed: 2,
            found: scene.tools.len(),
        });
    }
    scene.validate()?;
    noise.validate()?;
    let (a, b) = (scene.tools[0].geometry.tool_id, scene.tools[1].geometry.tool_id);
    let camera = CameraModel::new(scene.camera.intrinsics);
    let geometries = scene.geometries();
    let mut tracker = ToolTracker::new(geometries.clone(), camera.clone(), params);

    let max_frames = 2 * n_pairs as u64 + 100;
    let mut samples = Vec::with_capacity(n_pairs);
    let mut frame = 0u64;
    let mut skipped = 0u64;
    while samples.len() < n_pairs && frame < max_frames {
        let end = (frame + CHUNK as u64).min(max_frames);
        let batch: Vec<(FrameMeasurement, Vec<DeviceObservation>)> = (frame..end)
            .into_par_iter()
            .map(|k| {
                let t = scene.frame_time(k);
                let sensor = render_frame(scene, t, noise);
                (
                    measure_tools(&sensor, &geometries, &camera, &params),
                    simulate_tracker_packets(scene, t, noise),
                )
            })
            .collect();
        for (k, (measurement, packets)) in (frame..end).zip(batch) {
            let hmd = tracker.apply(&measurement);
            if samples.len() >= n_pairs {
                continue;
            }
            let pair = (hmd.get(&a), hmd.get(&b), tracker_pose(&packets, a), tracker_pose(&packets, b));
            let (Some(ha), Some(hb), Some(ca), Some(cb)) = pair else {
                skipped += 1;
                continue;
            };
            let e = pose_error(&relative_pose(ha, hb), &relative_pose(&ca, &cb));
            samples.push(ErrorSample {
                translation_mm: e.translation_mm,
                rotation_deg: e.rotation_deg,
                frame: k,
                ..Default::default()
            });
        }
        frame = end;
    }
    if samples.len() < n_pairs {
        return Err(EvalError::TooManySkipped {
            requested: n_pairs,
            collected: samples.len(),
            frames: frame,
            skipped,
        });
    }
    let frames = samples.last().map_or(0, |s| s.frame + 1);
    log::info!("relative tracking: {} pairs over {frames} frames, {skipped} skipped", samples.len());
    Ok(RelativeRun {
        summary: summarize(&samples)?,
        samples,
        frames,
        skipped,
    })
}
