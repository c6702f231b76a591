//! Recorded sessions: headset frames on disk, a tracker packet log and a
//! manifest tying them together.

use std::fs;
use std::path::{Path, PathBuf};

use irtrack_core::calibration::{resolve_render_pose, CalibrationState, Calibrator, DeviceKind, DeviceObservation, DEFAULT_PAIRING_WINDOW_US};
use irtrack_core::depth::{CameraModel, Intrinsics};
use irtrack_core::frame::{read_image, write_image, FrameKind, FrameSidecar, SensorFrame};
use irtrack_core::geometry::RigidTransform;
use irtrack_core::registration::ToolGeometry;
use irtrack_core::tracking::{ToolTracker, TrackerParams};
use irtrack_protocol::log::{read_log, PacketLogWriter};
use irtrack_protocol::TrackingPacket;
use irtrack_sim::{render_frame, simulate_tracker_packets, NoiseModel, Scene};
use serde::{Deserialize, Serialize};

use crate::EvalError;

pub const MANIFEST: &str = "session.json";
pub const PACKET_LOG: &str = "tracker.jsonl";
const FRAME_DIR: &str = "frames";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: u64,
    pub timestamp_us: u64,
    /// Head-camera extrinsics at capture.
    pub cam_to_world: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub intrinsics: Intrinsics,
    pub tools: Vec<ToolGeometry>,
    pub frames: Vec<FrameEntry>,
    pub packet_log: String,
}

fn stem(kind: &str, index: u64) -> String {
    format!("{kind}_{index:06}")
}

/// Renders `frames` headset frames and the matching tracker packets into `dir`.
pub fn record_session(scene: &Scene, noise: &NoiseModel, frames: u64, dir: &Path) -> Result<SessionManifest, EvalError> {
    scene.validate()?;
    noise.validate()?;
    let frame_dir = dir.join(FRAME_DIR);
    fs::create_dir_all(&frame_dir)?;
    let mut log = PacketLogWriter::create(&dir.join(PACKET_LOG))?;
    let mut entries = Vec::with_capacity(frames as usize);
    for index in 0..frames {
        let t = scene.frame_time(index);
        let frame = render_frame(scene, t, noise);
        let ts = frame.timestamp_us;
        write_image(&frame_dir, &stem("ab", index), &frame.ab, FrameSidecar { kind: FrameKind::Ab, timestamp_us: ts })?;
        write_image(&frame_dir, &stem("depth", index), &frame.depth, FrameSidecar { kind: FrameKind::Depth, timestamp_us: ts })?;
        log.append(&TrackingPacket::from_device_observations(ts, &simulate_tracker_packets(scene, t, noise)))?;
        entries.push(FrameEntry {
            index,
            timestamp_us: ts,
            cam_to_world: frame.cam_to_world,
        });
    }
    log.finish()?;
    let manifest = SessionManifest {
        intrinsics: scene.camera.intrinsics,
        tools: scene.geometries(),
        frames: entries,
        packet_log: PACKET_LOG.to_string(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// A session opened for reading.
#[derive(Debug, Clone)]
pub struct Session {
    pub dir: PathBuf,
    pub manifest: SessionManifest,
}

impl Session {
    pub fn open(dir: &Path) -> Result<Self, EvalError> {
        let manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn frame(&self, entry: &FrameEntry) -> Result<SensorFrame, EvalError> {
        let frame_dir = self.dir.join(FRAME_DIR);
        let (ab, _) = read_image(&frame_dir, &stem("ab", entry.index))?;
        let (depth, _) = read_image(&frame_dir, &stem("depth", entry.index))?;
        Ok(SensorFrame {
            ab,
            depth,
            cam_to_world: entry.cam_to_world,
            timestamp_us: entry.timestamp_us,
        })
    }

    pub fn packets(&self) -> Result<Vec<TrackingPacket>, EvalError> {
        Ok(read_log(&self.dir.join(&self.manifest.packet_log))?)
    }

    pub fn tracker(&self, params: TrackerParams) -> ToolTracker {
        ToolTracker::new(self.manifest.tools.clone(), CameraModel::new(self.manifest.intrinsics), params)
    }
}

/// The packet nearest in time to `timestamp_us`.
pub fn nearest_packet(packets: &[TrackingPacket], timestamp_us: u64) -> Option<&TrackingPacket> {
    packets.iter().min_by_key(|p| p.timestamp_us.abs_diff(timestamp_us))
}

/// Filtered headset detections for one frame, as device observations.
pub fn hmd_observations(tracker: &mut ToolTracker, frame: &SensorFrame) -> Vec<DeviceObservation> {
    tracker
        .detect_tools(frame)
        .into_iter()
        .map(|(id, pose)| DeviceObservation::new(DeviceKind::Hmd, id, pose, frame.timestamp_us))
        .collect()
}

/// Calibrates over every frame of a session, averaging up to `samples` looks.
pub fn calibrate_session(session: &Session, samples: usize) -> Result<CalibrationState, EvalError> {
    let packets = session.packets()?;
    let mut tracker = session.tracker(TrackerParams::default());
    let mut calibrator = Calibrator::new(DEFAULT_PAIRING_WINDOW_US, samples);
    for entry in &session.manifest.frames {
        let hmd = hmd_observations(&mut tracker, &session.frame(entry)?);
        let Some(packet) = nearest_packet(&packets, entry.timestamp_us) else {
            continue;
        };
        calibrator.update(&hmd, &packet.to_device_observations(DeviceKind::OpticalTracker));
    }
    Ok(*calibrator.state())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseSource {
    Hmd,
    Tracker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPose {
    pub frame: u64,
    pub timestamp_us: u64,
    pub tool_id: u16,
    pub source: PoseSource,
    pub pose: RigidTransform,
}

/// Per-frame render pose of every known tool. With no `calibration` the
/// session calibrates itself as it goes.
pub fn replay_session(session: &Session, calibration: Option<CalibrationState>) -> Result<Vec<ResolvedPose>, EvalError> {
    let packets = session.packets()?;
    let mut tracker = session.tracker(TrackerParams::default());
    let fixed = calibration.is_some();
    let mut calibrator = Calibrator::default();
    let mut state = calibration.unwrap_or_default();
    let mut out = Vec::new();
    for entry in &session.manifest.frames {
        let hmd = hmd_observations(&mut tracker, &session.frame(entry)?);
        let trk = nearest_packet(&packets, entry.timestamp_us)
            .map(|p| p.to_device_observations(DeviceKind::OpticalTracker))
            .unwrap_or_default();
        if !fixed {
            state = *calibrator.update(&hmd, &trk);
        }
        for tool in &session.manifest.tools {
            let Some(pose) = resolve_render_pose(tool.tool_id, &hmd, &trk, &state) else {
                continue;
            };
            let source = if hmd.iter().any(|o| o.tool_id == tool.tool_id) { PoseSource::Hmd } else { PoseSource::Tracker };
            out.push(ResolvedPose {
                frame: entry.index,
                timestamp_us: entry.timestamp_us,
                tool_id: tool.tool_id,
                source,
                pose,
            });
        }
    }
    Ok(out)
}
