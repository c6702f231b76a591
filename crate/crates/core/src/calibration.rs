//! Registration between the optical-tracker frame and the headset world frame,
//! and hybrid per-tool pose resolution.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{compose, invert, RigidTransform, Vec3};
use crate::Error;

pub const DEFAULT_PAIRING_WINDOW_US: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Hmd,
    OpticalTracker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceObservation {
    pub device: DeviceKind,
    pub tool_id: u16,
    pub pose: RigidTransform,
    pub timestamp_us: u64,
}

impl DeviceObservation {
    pub fn new(device: DeviceKind, tool_id: u16, pose: RigidTransform, timestamp_us: u64) -> Self {
        Self {
            device,
            tool_id,
            pose,
            timestamp_us,
        }
    }
}

/// Current tracker-to-world estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationState {
    t_h_c: Option<RigidTransform>,
    pub source_tool_id: Option<u16>,
    pub updated_at_us: u64,
}

impl CalibrationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_transform(t_h_c: RigidTransform, source_tool_id: u16, updated_at_us: u64) -> Self {
        Self {
            t_h_c: Some(t_h_c),
            source_tool_id: Some(source_tool_id),
            updated_at_us,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.t_h_c.is_some()
    }

    /// Maps tracker coordinates into the headset world frame.
    pub fn t_h_c(&self) -> Option<&RigidTransform> {
        self.t_h_c.as_ref()
    }

    pub fn to_snapshot(&self) -> Option<CalibrationSnapshot> {
        let t = self.t_h_c?;
        let tr = t.translation();
        Some(CalibrationSnapshot {
            quaternion: t.wxyz(),
            translation_mm: [tr.x, tr.y, tr.z],
            source_tool_id: self.source_tool_id.unwrap_or(0),
            updated_at_us: self.updated_at_us,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let snapshot = self.to_snapshot().ok_or(Error::NoCalibration)?;
        std::fs::write(path, serde_json::to_string_pretty(&snapshot)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let snapshot: CalibrationSnapshot = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        snapshot.try_into()
    }
}

/// On-disk form of a valid calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSnapshot {
    pub quaternion: [f64; 4],
    pub translation_mm: [f64; 3],
    pub source_tool_id: u16,
    pub updated_at_us: u64,
}

impl TryFrom<CalibrationSnapshot> for CalibrationState {
    type Error = Error;

    fn try_from(s: CalibrationSnapshot) -> Result<Self, Error> {
        let t = RigidTransform::from_wxyz(s.quaternion, Vec3::from(s.translation_mm))?;
        Ok(CalibrationState::from_transform(t, s.source_tool_id, s.updated_at_us))
    }
}

/// `t_h_p · t_c_p⁻¹`: the tracker frame expressed in the headset world, from
/// one tool seen by both devices at the same instant.
pub fn compute_calibration(t_h_p: &RigidTransform, t_c_p: &RigidTransform) -> RigidTransform {
    compose(t_h_p, &invert(t_c_p))
}

/// The (hmd, tracker) pair of a shared tool with the smallest timestamp gap
/// no larger than `window_us`. Ties go to the earlier pair in input order.
pub fn nearest_pair<'a>(
    hmd_obs: &'a [DeviceObservation],
    tracker_obs: &'a [DeviceObservation],
    window_us: u64,
) -> Option<(&'a DeviceObservation, &'a DeviceObservation)> {
    let mut best: Option<(u64, &DeviceObservation, &DeviceObservation)> = None;
    for h in hmd_obs {
        for c in tracker_obs.iter().filter(|c| c.tool_id == h.tool_id) {
            let gap = h.timestamp_us.abs_diff(c.timestamp_us);
            if gap <= window_us && best.is_none_or(|(g, _, _)| gap < g) {
                best = Some((gap, h, c));
            }
        }
    }
    best.map(|(_, h, c)| (h, c))
}

/// Recalibrates from the best-paired shared tool, or returns `state`
/// unchanged when no tool pairs within the window.
pub fn update_calibration(
    state: &CalibrationState,
    hmd_obs: &[DeviceObservation],
    tracker_obs: &[DeviceObservation],
    window_us: u64,
) -> CalibrationState {
    let Some((h, c)) = nearest_pair(hmd_obs, tracker_obs, window_us) else {
        return *state;
    };
    let stamp = h.timestamp_us.max(c.timestamp_us).max(state.updated_at_us);
    CalibrationState::from_transform(compute_calibration(&h.pose, &c.pose), h.tool_id, stamp)
}

/// Render pose of `tool_id` in the headset world frame: the headset's own
/// detection when available, otherwise the tracker pose carried through the
/// calibration.
pub fn resolve_render_pose(
    tool_id: u16,
    hmd_obs: &[DeviceObservation],
    tracker_obs: &[DeviceObservation],
    state: &CalibrationState,
) -> Option<RigidTransform> {
    let latest = |obs: &[DeviceObservation]| {
        obs.iter()
            .filter(|o| o.tool_id == tool_id)
            .max_by_key(|o| o.timestamp_us)
            .map(|o| o.pose)
    };
    if let Some(pose) = latest(hmd_obs) {
        return Some(pose);
    }
    let t_h_c = state.t_h_c()?;
    latest(tracker_obs).map(|pose| compose(t_h_c, &pose))
}

/// Chordal L2 mean of rotations plus arithmetic mean of translations.
pub fn average_transforms(transforms: &[RigidTransform]) -> Option<RigidTransform> {
    if transforms.is_empty() {
        return None;
    }
    let n = transforms.len() as f64;
    let reference = *transforms[0].rotation();
    // Quaternion-outer-product form of the chordal mean; sign-align to the
    // first sample so antipodal representatives do not cancel.
    let mut acc = nalgebra::Matrix4::<f64>::zeros();
    let mut translation = Vec3::zeros();
    for t in transforms {
        let mut q = t.rotation().into_inner().coords;
        if q.dot(&reference.coords) < 0.0 {
            q = -q;
        }
        acc += q * q.transpose();
        translation += t.translation();
    }
    let eig = acc.symmetric_eigen();
    let (imax, _) = eig.eigenvalues.argmax();
    let v = eig.eigenvectors.column(imax);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[3], v[0], v[1], v[2]));
    Some(RigidTransform::new(q, translation / n))
}

/// Calibration driver. With `samples == 1` every paired look replaces the
/// estimate; larger values average the last `samples` looks.
#[derive(Debug, Clone)]
pub struct Calibrator {
    pub window_us: u64,
    pub samples: usize,
    history: Vec<RigidTransform>,
    state: CalibrationState,
}

impl Default for Calibrator {
    fn default() -> Self {
        Self::new(DEFAULT_PAIRING_WINDOW_US, 1)
    }
}

impl Calibrator {
    pub fn new(window_us: u64, samples: usize) -> Self {
        Self {
            window_us,
            samples: samples.max(1),
            history: Vec::new(),
            state: CalibrationState::new(),
        }
    }

    pub fn state(&self) -> &CalibrationState {
        &self.state
    }

    pub fn update(&mut self, hmd_obs: &[DeviceObservation], tracker_obs: &[DeviceObservation]) -> &CalibrationState {
        let next = update_calibration(&self.state, hmd_obs, tracker_obs, self.window_us);
        if next == self.state {
            return &self.state;
        }
        let Some(t) = next.t_h_c else {
            return &self.state;
        };
        self.history.push(t);
        if self.history.len() > self.samples {
            self.history.remove(0);
        }
        let averaged = average_transforms(&self.history).unwrap_or(t);
        self.state = CalibrationState {
            t_h_c: Some(averaged),
            ..next
        };
        &self.state
    }
}

/// Rotation matrix of the chordal mean, exposed for diagnostics.
pub fn chordal_mean_rotation(transforms: &[RigidTransform]) -> Option<Matrix3<f64>> {
    average_transforms(transforms).map(|t| t.rotation_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_error;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = Vec3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        RigidTransform::from_axis_angle_deg(axis, rng.random_range(0.0..180.0), t)
    }

    fn obs(device: DeviceKind, tool_id: u16, pose: RigidTransform, ts: u64) -> DeviceObservation {
        DeviceObservation::new(device, tool_id, pose, ts)
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        let e = pose_error(a, b);
        e.translation_mm < tol && e.rotation_deg.to_radians() < tol
    }

    #[test]
    fn same_pose_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_transform(&mut rng);
        assert!(close(&compute_calibration(&p, &p), &RigidTransform::identity(), 1e-9));
    }

    #[test]
    fn identity_tracker_pose_returns_hmd_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_transform(&mut rng);
        assert!(close(&compute_calibration(&p, &RigidTransform::identity()), &p, 1e-12));
    }

    #[test]
    fn calibration_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let t = compute_calibration(&a, &b);
            assert!(close(&compose(&t, &b), &a, 1e-9));
        }
    }

    #[test]
    fn no_shared_tool_leaves_state() {
        let p = RigidTransform::identity();
        let start = CalibrationState::from_transform(RigidTransform::from_translation(Vec3::x()), 9, 10);
        let next = update_calibration(&start, &[obs(DeviceKind::Hmd, 1, p, 0)], &[obs(DeviceKind::OpticalTracker, 2, p, 0)], 50_000);
        assert_eq!(next, start);
        let empty = update_calibration(&CalibrationState::new(), &[], &[], 50_000);
        assert!(!empty.is_valid());
    }

    #[test]
    fn single_shared_tool_calibrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (h, c) = (random_transform(&mut rng), random_transform(&mut rng));
        let next = update_calibration(
            &CalibrationState::new(),
            &[obs(DeviceKind::Hmd, 3, h, 1_000)],
            &[obs(DeviceKind::OpticalTracker, 3, c, 2_000)],
            50_000,
        );
        assert!(next.is_valid());
        assert_eq!(next.source_tool_id, Some(3));
        assert!(close(next.t_h_c().unwrap(), &compute_calibration(&h, &c), 1e-12));
    }

    #[test]
    fn pair_outside_window_is_ignored() {
        let p = RigidTransform::identity();
        let next = update_calibration(
            &CalibrationState::new(),
            &[obs(DeviceKind::Hmd, 3, p, 0)],
            &[obs(DeviceKind::OpticalTracker, 3, p, 50_001)],
            50_000,
        );
        assert!(!next.is_valid());
    }

    #[test]
    fn nearest_pair_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let mut make = |device| {
                (0..rng.random_range(0..6))
                    .map(|_| obs(device, rng.random_range(1..4), random_transform(&mut rng), rng.random_range(0..120_000)))
                    .collect::<Vec<_>>()
            };
            let hmd = make(DeviceKind::Hmd);
            let trk = make(DeviceKind::OpticalTracker);
            let mut oracle: Option<(u64, usize, usize)> = None;
            for (i, h) in hmd.iter().enumerate() {
                for (j, c) in trk.iter().enumerate() {
                    let gap = h.timestamp_us.abs_diff(c.timestamp_us);
                    if h.tool_id == c.tool_id && gap <= 50_000 && oracle.map_or(true, |(g, _, _)| gap < g) {
                        oracle = Some((gap, i, j));
                    }
                }
            }
            let next = update_calibration(&CalibrationState::new(), &hmd, &trk, 50_000);
            match oracle {
                None => assert!(!next.is_valid()),
                Some((_, i, j)) => {
                    let expect = compute_calibration(&hmd[i].pose, &trk[j].pose);
                    assert!(close(next.t_h_c().unwrap(), &expect, 1e-9));
                    assert_eq!(next.source_tool_id, Some(hmd[i].tool_id));
                }
            }
        }
    }

    #[test]
    fn never_invalidates_and_time_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = CalibrationState::new();
        let mut last = 0;
        let mut was_valid = false;
        for _ in 0..200 {
            let ts = rng.random_range(0..1_000_000);
            let tool = rng.random_range(1..3);
            let hmd = [obs(DeviceKind::Hmd, tool, random_transform(&mut rng), ts)];
            let trk = [obs(DeviceKind::OpticalTracker, rng.random_range(1..3), random_transform(&mut rng), ts + 10)];
            state = update_calibration(&state, &hmd, &trk, 50_000);
            assert!(state.updated_at_us >= last);
            assert!(!was_valid || state.is_valid());
            last = state.updated_at_us;
            was_valid = state.is_valid();
        }
        assert!(was_valid);
    }

    #[test]
    fn idempotent_on_same_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hmd = [obs(DeviceKind::Hmd, 1, random_transform(&mut rng), 5)];
        let trk = [obs(DeviceKind::OpticalTracker, 1, random_transform(&mut rng), 6)];
        let once = update_calibration(&CalibrationState::new(), &hmd, &trk, 50_000);
        let twice = update_calibration(&once, &hmd, &trk, 50_000);
        assert_eq!(once, twice);
    }

    #[test]
    fn moving_tracker_frame_right_multiplies_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let t_h_c = random_transform(&mut rng);
            let t_c_p = random_transform(&mut rng);
            let t_h_p = compose(&t_h_c, &t_c_p);
            let g = random_transform(&mut rng);
            let moved = compute_calibration(&t_h_p, &compose(&g, &t_c_p));
            assert!(close(&moved, &compose(&t_h_c, &invert(&g)), 1e-9));
        }
    }

    #[test]
    fn resolve_priority_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_transform(&mut rng);
        let c = random_transform(&mut rng);
        let cal = random_transform(&mut rng);
        let valid = CalibrationState::from_transform(cal, 1, 0);
        let hmd = [obs(DeviceKind::Hmd, 1, h, 0)];
        let trk = [obs(DeviceKind::OpticalTracker, 1, c, 0)];
        assert_eq!(resolve_render_pose(1, &hmd, &trk, &valid), Some(h));
        let via = resolve_render_pose(1, &[], &trk, &valid).unwrap();
        assert!(close(&via, &compose(&cal, &c), 1e-12));
        assert_eq!(resolve_render_pose(1, &[], &trk, &CalibrationState::new()), None);
        assert_eq!(resolve_render_pose(2, &hmd, &trk, &valid), None);
    }

    #[test]
    fn both_branches_agree_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let t_h_c = random_transform(&mut rng);
        let shared = random_transform(&mut rng);
        let other = random_transform(&mut rng);
        let hmd = [
            obs(DeviceKind::Hmd, 1, compose(&t_h_c, &shared), 0),
            obs(DeviceKind::Hmd, 2, compose(&t_h_c, &other), 0),
        ];
        let trk = [obs(DeviceKind::OpticalTracker, 1, shared, 0), obs(DeviceKind::OpticalTracker, 2, other, 0)];
        let state = update_calibration(&CalibrationState::new(), &hmd[..1], &trk[..1], 50_000);
        let via_hmd = resolve_render_pose(2, &hmd, &trk, &state).unwrap();
        let via_tracker = resolve_render_pose(2, &[], &trk, &state).unwrap();
        let e = pose_error(&via_hmd, &via_tracker);
        assert!(e.translation_mm < 0.01 && e.rotation_deg < 0.01, "{e:?}");
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        let state = CalibrationState::from_transform(
            RigidTransform::from_axis_angle_deg(Vec3::new(1.0, 2.0, 3.0), 40.0, Vec3::new(5.0, -6.0, 7.0)),
            4,
            123,
        );
        state.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["quaternion", "translation_mm", "source_tool_id", "updated_at_us"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back = CalibrationState::load(&path).unwrap();
        assert!(close(back.t_h_c().unwrap(), state.t_h_c().unwrap(), 1e-12));
        assert_eq!(back.source_tool_id, Some(4));
        assert_eq!(back.updated_at_us, 123);
        assert!(matches!(CalibrationState::new().save(&path), Err(Error::NoCalibration)));
    }

    #[test]
    fn averaging_reduces_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = random_transform(&mut rng);
        let samples: Vec<_> = (0..200)
            .map(|_| {
                let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let jitter = RigidTransform::from_axis_angle_deg(axis, rng.random_range(-1.0..1.0), Vec3::zeros());
                compose(&truth, &jitter)
            })
            .collect();
        let mean = average_transforms(&samples).unwrap();
        assert!(pose_error(&mean, &truth).rotation_deg < 0.2);
    }

    #[test]
    fn averaging_calibrator_matches_single_when_one_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut single = Calibrator::default();
        let (h, c) = (random_transform(&mut rng), random_transform(&mut rng));
        single.update(&[obs(DeviceKind::Hmd, 1, h, 0)], &[obs(DeviceKind::OpticalTracker, 1, c, 0)]);
        assert!(close(single.state().t_h_c().unwrap(), &compute_calibration(&h, &c), 1e-12));
    }

    proptest! {
        #[test]
        fn average_of_identical_is_identity_op(ax in -1.0..1.0f64, ay in -1.0..1.0f64, deg in 0.0..179.0f64, n in 1usize..8) {
            let t = RigidTransform::from_axis_angle_deg(Vec3::new(ax, ay, 0.5), deg, Vec3::new(ax, ay, deg));
            let mean = average_transforms(&vec![t; n]).unwrap();
            prop_assert!(close(&mean, &t, 1e-9));
        }
    }
}
