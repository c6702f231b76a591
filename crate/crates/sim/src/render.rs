//! Active-brightness and depth frame synthesis.

use irtrack_core::frame::{SensorFrame, SensorImage, IMAGE_HEIGHT, IMAGE_WIDTH};
use irtrack_core::geometry::Vec3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::noise::{correlated_normal, stream, Domain, NoiseModel};
use crate::scene::Scene;

/// Background clutter is clamped to this level so it never survives the
/// default detection threshold.
pub const CLUTTER_CEILING: u16 = 512;
/// Beyond this radial distance the depth sensor reports 0.
pub const DEPTH_RANGE_MM: f64 = 1000.0;
const SATURATED: f64 = 65535.0;

/// A marker as the head camera sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedMarker {
    pub tool_id: u16,
    pub marker_index: usize,
    /// Pinhole projection of the marker centre.
    pub u: f64,
    pub v: f64,
    pub radius_px: f64,
    /// Distance from the camera centre to the marker centre.
    pub range_mm: f64,
    pub camera_point: Vec3,
}

pub fn timestamp_us(t_s: f64) -> u64 {
    (t_s.max(0.0) * 1e6).round() as u64
}

/// Markers in front of the camera whose centres fall inside the image.
pub fn project_markers(scene: &Scene, t_s: f64) -> Vec<ProjectedMarker> {
    let world_to_cam = scene.camera_pose(t_s).inverse();
    let k = &scene.camera.intrinsics;
    let mut out = Vec::new();
    for tool in &scene.tools {
        let pose = tool.trajectory.pose_at(t_s);
        for (j, m) in tool.geometry.markers.iter().enumerate() {
            let p = world_to_cam.transform_point(&pose.transform_point(m));
            let Some((u, v)) = k.project(&p) else { continue };
            if !(0.0..=(IMAGE_WIDTH - 1) as f64).contains(&u) || !(0.0..=(IMAGE_HEIGHT - 1) as f64).contains(&v) {
                continue;
            }
            out.push(ProjectedMarker {
                tool_id: tool.geometry.tool_id,
                marker_index: j,
                u,
                v,
                radius_px: k.fx * scene.marker_radius_mm / p.z,
                range_mm: p.norm(),
                camera_point: p,
            });
        }
    }
    out
}

/// First pair of tools (possibly the same tool twice) whose marker discs
/// touch in the image at `t_s`.
pub fn overlapping_markers(scene: &Scene, t_s: f64) -> Option<(u16, u16)> {
    let markers = project_markers(scene, t_s);
    for (i, a) in markers.iter().enumerate() {
        for b in &markers[i + 1..] {
            let gap = ((a.u - b.u).powi(2) + (a.v - b.v).powi(2)).sqrt();
            // Soft edges plus one clear pixel between discs.
            if gap < a.radius_px + b.radius_px + 3.0 {
                return Some((a.tool_id, b.tool_id));
            }
        }
    }
    None
}

fn marker_key(tool_id: u16, marker_index: usize) -> u64 {
    (u64::from(tool_id) << 8) | marker_index as u64
}

/// Renders the head camera's AB and depth frames at `t_s`.
pub fn render_frame(scene: &Scene, t_s: f64, noise: &NoiseModel) -> SensorFrame {
    let stamp = timestamp_us(t_s);
    let mut frame = SensorFrame::empty(scene.camera_pose(t_s), stamp);
    fill_background(&mut frame.ab, noise, stamp);

    let mut dropout = stream(noise.seed, Domain::Dropout, stamp);
    let dropped: Vec<(u16, usize)> = scene
        .tools
        .iter()
        .flat_map(|t| (0..t.geometry.markers.len()).map(move |j| (t.geometry.tool_id, j)))
        .filter(|_| dropout.random::<f64>() < noise.marker_dropout_prob)
        .collect();

    let tau = noise.sensor_correlation_s;
    for marker in project_markers(scene, t_s) {
        if dropped.contains(&(marker.tool_id, marker.marker_index)) {
            continue;
        }
        let key = marker_key(marker.tool_id, marker.marker_index);
        let (mut u, mut v) = (marker.u, marker.v);
        if noise.blob_jitter_px > 0.0 {
            u += noise.blob_jitter_px * correlated_normal(noise.seed, Domain::JitterU, key, t_s, tau, stamp);
            v += noise.blob_jitter_px * correlated_normal(noise.seed, Domain::JitterV, key, t_s, tau, stamp);
        }
        let mut range = marker.range_mm;
        if noise.depth_sigma_mm > 0.0 {
            range += noise.depth_sigma_mm * correlated_normal(noise.seed, Domain::Depth, key, t_s, tau, stamp);
        }
        draw_marker(&mut frame, u, v, marker.radius_px, range);
    }
    frame
}

fn fill_background(ab: &mut SensorImage, noise: &NoiseModel, stamp: u64) {
    let ceiling = f64::from(CLUTTER_CEILING);
    if noise.ab_background_sigma == 0.0 {
        let level = noise.ab_background_mean.clamp(0.0, ceiling).round() as u16;
        ab.pixels_mut().fill(level);
        return;
    }
    let mut rng = stream(noise.seed, Domain::Background, stamp);
    let dist = Normal::new(noise.ab_background_mean, noise.ab_background_sigma).expect("validated sigma");
    for p in ab.pixels_mut() {
        *p = dist.sample(&mut rng).clamp(0.0, ceiling).round() as u16;
    }
}

/// Draws a saturated disc with a one-pixel linear edge and writes depth on
/// every pixel bright enough to clear the clutter ceiling.
///
/// Depth is quantised to whole millimetres. The pixel nearest the centre
/// carries the rounded range; the rest are dithered so that the mean over
/// the disc stays within a fraction of a millimetre of the true range.
fn draw_marker(frame: &mut SensorFrame, cu: f64, cv: f64, radius: f64, range_mm: f64) {
    let reach = radius + 1.0;
    let u0 = (cu - reach).floor().max(0.0) as usize;
    let v0 = (cv - reach).floor().max(0.0) as usize;
    let u1 = ((cu + reach).ceil() as usize).min(IMAGE_WIDTH - 1);
    let v1 = ((cv + reach).ceil() as usize).min(IMAGE_HEIGHT - 1);

    let mut lit: Vec<(f64, usize, usize)> = Vec::new();
    for v in v0..=v1 {
        for u in u0..=u1 {
            let dist = ((u as f64 - cu).powi(2) + (v as f64 - cv).powi(2)).sqrt();
            let coverage = (radius + 0.5 - dist).clamp(0.0, 1.0);
            let value = (SATURATED * coverage).round() as u16;
            if value > frame.ab.get(u, v) {
                frame.ab.set(u, v, value);
            }
            if value > CLUTTER_CEILING {
                lit.push((dist, u, v));
            }
        }
    }
    if lit.is_empty() || !(range_mm > 0.0 && range_mm <= DEPTH_RANGE_MM) {
        return;
    }
    lit.sort_by(|a, b| a.0.total_cmp(&b.0));
    let centre = range_mm.round();
    frame.depth.set(lit[0].1, lit[0].2, centre as u16);
    let rest = &lit[1..];
    if rest.is_empty() {
        return;
    }
    let m = rest.len() as f64;
    let target = (range_mm * (m + 1.0) - centre) / m;
    for (k, &(_, u, v)) in rest.iter().enumerate() {
        let value = (target + (k as f64 + 0.5) / m).floor().clamp(1.0, 65535.0);
        frame.depth.set(u, v, value as u16);
    }
}
