//! Frame-to-pose pipeline: threshold, blobs, depth, unprojection, matching,
//! registration and filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ab_image::{detect_blobs, threshold_ab, Blob, BlobFilterParams, DEFAULT_AB_THRESHOLD, DEFAULT_MAX_KEYPOINTS};
use crate::depth::{camera_to_world, sample_depth, unproject, CameraModel};
use crate::filter::{KalmanConfig, PoseFilter};
use crate::frame::SensorFrame;
use crate::geometry::{RigidTransform, Vec3};
use crate::registration::{match_tool, register_point_sets, Correspondence, ToolGeometry, DEFAULT_MATCH_TOLERANCE_MM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub ab_threshold: u16,
    pub blob_filter: BlobFilterParams,
    pub max_keypoints: usize,
    pub match_tolerance_mm: f64,
    pub kalman: KalmanConfig,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            ab_threshold: DEFAULT_AB_THRESHOLD,
            blob_filter: BlobFilterParams::default(),
            max_keypoints: DEFAULT_MAX_KEYPOINTS,
            match_tolerance_mm: DEFAULT_MATCH_TOLERANCE_MM,
            kalman: KalmanConfig::default(),
        }
    }
}

/// A keypoint lifted into the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerObservation {
    pub u: f64,
    pub v: f64,
    pub depth_mm: f64,
    pub world: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolMeasurement {
    pub pose: RigidTransform,
    pub rms_residual_mm: f64,
    pub correspondence: Correspondence,
}

/// Everything recovered from one frame before filtering.
#[derive(Debug, Clone, Default)]
pub struct FrameMeasurement {
    pub timestamp_us: u64,
    pub blob_count: usize,
    /// Blobs whose depth was missing or out of range.
    pub invalid_depth_count: usize,
    pub markers: Vec<MarkerObservation>,
    pub tools: BTreeMap<u16, ToolMeasurement>,
}

/// World-frame marker centres found in a frame.
pub fn locate_markers(frame: &SensorFrame, cam: &CameraModel, params: &TrackerParams) -> (Vec<Blob>, Vec<MarkerObservation>) {
    let thresholded = threshold_ab(&frame.ab, params.ab_threshold);
    let blobs = detect_blobs(&thresholded, &params.blob_filter);
    let markers = blobs
        .iter()
        .take(params.max_keypoints)
        .filter_map(|blob| {
            let depth_mm = sample_depth(&frame.depth, blob)?;
            let cam_point = unproject(blob.centroid_u, blob.centroid_v, depth_mm, cam).ok()?;
            Some(MarkerObservation {
                u: blob.centroid_u,
                v: blob.centroid_v,
                depth_mm,
                world: camera_to_world(&cam_point, &frame.cam_to_world),
            })
        })
        .collect();
    (blobs, markers)
}

/// Raw (unfiltered) tool poses in the world frame. Stateless, so frames can be
/// measured in parallel.
pub fn measure_tools(
    frame: &SensorFrame,
    geometries: &[ToolGeometry],
    cam: &CameraModel,
    params: &TrackerParams,
) -> FrameMeasurement {
    let (blobs, markers) = locate_markers(frame, cam, params);
    let points: Vec<Vec3> = markers.iter().map(|m| m.world).collect();
    let mut tools = BTreeMap::new();
    for geometry in geometries {
        let Some(correspondence) = match_tool(&points, geometry, params.match_tolerance_mm) else {
            continue;
        };
        let Ok(fit) = register_point_sets(&geometry.markers, &correspondence.observed) else {
            continue;
        };
        // Distances cannot tell a marker array from its mirror image; a
        // mirrored match leaves a large residual.
        if fit.rms_residual_mm > params.match_tolerance_mm {
            log::debug!("tool {}: rejected fit with rms {:.2} mm", geometry.tool_id, fit.rms_residual_mm);
            continue;
        }
        tools.insert(
            geometry.tool_id,
            ToolMeasurement {
                pose: fit.transform,
                rms_residual_mm: fit.rms_residual_mm,
                correspondence,
            },
        );
    }
    let usable = blobs.len().min(params.max_keypoints);
    FrameMeasurement {
        timestamp_us: frame.timestamp_us,
        blob_count: blobs.len(),
        invalid_depth_count: usable - markers.len(),
        markers,
        tools,
    }
}

/// Headset-side tool tracker: fixed geometries and camera, one pose filter
/// per tool.
#[derive(Debug, Clone)]
pub struct ToolTracker {
    pub geometries: Vec<ToolGeometry>,
    pub camera: CameraModel,
    pub params: TrackerParams,
    filters: BTreeMap<u16, PoseFilter>,
}

impl ToolTracker {
    pub fn new(geometries: Vec<ToolGeometry>, camera: CameraModel, params: TrackerParams) -> Self {
        Self {
            geometries,
            camera,
            params,
            filters: BTreeMap::new(),
        }
    }

    pub fn measure(&self, frame: &SensorFrame) -> FrameMeasurement {
        measure_tools(frame, &self.geometries, &self.camera, &self.params)
    }

    /// Runs the full pipeline on `frame` and returns filtered tool poses in
    /// the world frame. Tools without a correspondence are absent.
    pub fn detect_tools(&mut self, frame: &SensorFrame) -> BTreeMap<u16, RigidTransform> {
        let measurement = self.measure(frame);
        self.apply(&measurement)
    }

    /// Feeds an already-computed measurement through the per-tool filters.
    pub fn apply(&mut self, measurement: &FrameMeasurement) -> BTreeMap<u16, RigidTransform> {
        measurement
            .tools
            .iter()
            .map(|(&id, m)| {
                let filter = self.filters.entry(id).or_insert_with(|| PoseFilter::new(self.params.kalman));
                (id, filter.update(&m.pose, measurement.timestamp_us))
            })
            .collect()
    }

    pub fn filter(&self, tool_id: u16) -> Option<&PoseFilter> {
        self.filters.get(&tool_id)
    }

    pub fn reset_filters(&mut self) {
        self.filters.clear();
    }
}
