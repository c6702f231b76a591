//! Optical tracker readings.

use irtrack_core::calibration::{DeviceKind, DeviceObservation};
use irtrack_core::geometry::{RigidTransform, Vec3};
use nalgebra::{Unit, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::noise::{stream, Domain, NoiseModel};
use crate::render::timestamp_us;
use crate::scene::Scene;

/// Random unit vector, uniform on the sphere.
pub fn random_axis(rng: &mut impl Rng) -> Unit<Vec3> {
    loop {
        let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        if let Some(axis) = Unit::try_new(v, 1e-9) {
            return axis;
        }
    }
}

/// `pose` with Gaussian translation noise per axis and a Gaussian rotation
/// about a uniformly random axis. The rotation is applied in the tool's own
/// frame so the reported origin is unaffected by it.
pub fn perturb_pose(pose: &RigidTransform, sigma_mm: f64, sigma_deg: f64, rng: &mut impl Rng) -> RigidTransform {
    let mut translation = *pose.translation();
    if sigma_mm > 0.0 {
        let n = Normal::new(0.0, sigma_mm).expect("sigma >= 0");
        translation += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    let mut rotation = *pose.rotation();
    if sigma_deg > 0.0 {
        let axis = random_axis(rng);
        let angle = Normal::new(0.0, sigma_deg.to_radians()).expect("sigma >= 0").sample(rng);
        rotation *= UnitQuaternion::from_axis_angle(&axis, angle);
    }
    RigidTransform::new(rotation, translation)
}

/// Readings for every tool in the tracker's working volume at `t_s`, in the
/// tracker's frame.
pub fn simulate_tracker_packets(scene: &Scene, t_s: f64, noise: &NoiseModel) -> Vec<DeviceObservation> {
    let stamp = timestamp_us(t_s);
    let mut rng = stream(noise.seed, Domain::Tracker, stamp);
    scene
        .tools
        .iter()
        .filter(|tool| scene.tracker.contains(tool.trajectory.pose_at(t_s).translation()))
        .map(|tool| {
            let truth = scene.tool_pose_in_tracker(tool, t_s);
            let pose = perturb_pose(
                &truth,
                noise.tracker_translation_sigma_mm,
                noise.tracker_rotation_sigma_deg,
                &mut rng,
            );
            DeviceObservation::new(DeviceKind::OpticalTracker, tool.geometry.tool_id, pose, stamp)
        })
        .collect()
}
