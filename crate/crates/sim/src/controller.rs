//! Scripted stand-in for a person aligning a hand-held tool with a target.

use irtrack_core::geometry::{pose_error, PoseError, RigidTransform, Vec3};
use nalgebra::UnitQuaternion;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::noise::{stream, Domain};
use crate::tracker::random_axis;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Fraction of the remaining error removed per step.
    pub gain: f64,
    /// RMS length of the tremor displacement, mm.
    pub tremor_translation_mm: f64,
    /// Standard deviation of the tremor rotation angle, degrees.
    pub tremor_rotation_deg: f64,
    pub threshold_mm: f64,
    pub threshold_deg: f64,
    /// Consecutive steps the live error must stay under both thresholds.
    pub dwell_steps: usize,
    /// The intended pose counts as settled once a step moves it less than this.
    pub settle_mm: f64,
    pub max_steps: usize,
    /// Tool-frame point the hand pivots about when it wobbles.
    pub pivot: Vec3,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gain: 0.3,
            tremor_translation_mm: 1.5,
            tremor_rotation_deg: 1.0,
            threshold_mm: 5.0,
            threshold_deg: 5.0,
            dwell_steps: 10,
            settle_mm: 1e-3,
            max_steps: 500,
            pivot: Vec3::zeros(),
        }
    }
}

/// One step of the noise-free approach: moves `gain` of the way from
/// `current` to `target` (linear in translation, slerp in rotation).
pub fn approach(current: &RigidTransform, target: &RigidTransform, gain: f64) -> RigidTransform {
    let rotation = current.rotation().slerp(target.rotation(), gain);
    let translation = current.translation().lerp(target.translation(), gain);
    RigidTransform::new(rotation, translation)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentOutcome {
    /// Pose actually held when the controller declared itself done.
    pub held: RigidTransform,
    pub steps: usize,
    pub live_error: PoseError,
}

#[derive(Debug, Clone)]
pub struct AlignmentController {
    pub config: ControllerConfig,
    intended: RigidTransform,
    rng: ChaCha8Rng,
    steps: usize,
}

impl AlignmentController {
    pub fn new(config: ControllerConfig, start: RigidTransform, seed: u64, trial: u64) -> Self {
        Self {
            config,
            intended: start,
            rng: stream(seed, Domain::Controller, trial),
            steps: 0,
        }
    }

    pub fn intended(&self) -> &RigidTransform {
        &self.intended
    }

    /// Advances one step toward `target` and returns the pose the hand holds,
    /// which is the intended pose plus fresh tremor. Tremor does not carry
    /// over between steps.
    pub fn step(&mut self, target: &RigidTransform) -> RigidTransform {
        self.steps += 1;
        self.intended = approach(&self.intended, target, self.config.gain);
        self.tremble()
    }

    fn tremble(&mut self) -> RigidTransform {
        let c = &self.config;
        let mut held = self.intended;
        if c.tremor_rotation_deg > 0.0 {
            let angle = Normal::new(0.0, c.tremor_rotation_deg.to_radians()).unwrap().sample(&mut self.rng);
            let wobble = UnitQuaternion::from_axis_angle(&random_axis(&mut self.rng), angle);
            let about_pivot = RigidTransform::new(wobble, c.pivot - wobble * c.pivot);
            held = held * about_pivot;
        }
        if c.tremor_translation_mm > 0.0 {
            let n = Normal::new(0.0, c.tremor_translation_mm / 3f64.sqrt()).unwrap();
            let shift = Vec3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng));
            held = RigidTransform::new(*held.rotation(), held.translation() + shift);
        }
        held
    }

    /// Steps toward `target` until the intended pose has settled and
    /// `live_error` of the held pose has stayed under both thresholds for
    /// `dwell_steps` steps in a row.
    pub fn run(
        &mut self,
        target: &RigidTransform,
        mut live_error: impl FnMut(&RigidTransform) -> PoseError,
    ) -> Result<AlignmentOutcome, Error> {
        let mut streak = 0;
        let mut last = PoseError::default();
        while self.steps < self.config.max_steps {
            let before = self.intended;
            let held = self.step(target);
            let moved = pose_error(&before, &self.intended);
            last = live_error(&held);
            let green = last.translation_mm < self.config.threshold_mm && last.rotation_deg < self.config.threshold_deg;
            streak = if green { streak + 1 } else { 0 };
            let settled = moved.translation_mm < self.config.settle_mm && moved.rotation_deg < self.config.settle_mm;
            if settled && streak >= self.config.dwell_steps {
                return Ok(AlignmentOutcome {
                    held,
                    steps: self.steps,
                    live_error: last,
                });
            }
        }
        Err(Error::NotConverged {
            steps: self.steps,
            translation_mm: last.translation_mm,
            rotation_deg: last.rotation_deg,
        })
    }
}
