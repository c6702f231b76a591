//! Marker-array geometries, point correspondence and least-squares rigid
//! registration.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3xX};
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Vec3};
use crate::Error;

pub const DEFAULT_MATCH_TOLERANCE_MM: f64 = 3.0;
/// Observed points beyond this many are ignored by the matcher.
pub const MAX_MATCH_POINTS: usize = 16;
const MIN_SINGULAR_VALUE: f64 = 1e-6;

/// A rigid marker array: marker centres in the tool's own frame, millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolGeometry {
    #[serde(rename = "id")]
    pub tool_id: u16,
    pub name: String,
    #[serde(with = "vec3_list")]
    pub markers: Vec<Vec3>,
}

impl ToolGeometry {
    pub fn new(tool_id: u16, name: impl Into<String>, markers: Vec<Vec3>) -> Self {
        Self {
            tool_id,
            name: name.into(),
            markers,
        }
    }

    /// Smallest gap between any two pairwise inter-marker distances.
    pub fn min_distance_gap(&self) -> f64 {
        let mut d = pairwise_distances(&self.markers);
        d.sort_by(f64::total_cmp);
        d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Checks the geometry is usable with matching tolerance `tol`: at least
    /// three non-collinear markers whose pairwise distances differ by at least
    /// `2 * tol`.
    pub fn validate(&self, tol: f64) -> Result<(), Error> {
        let fail = |reason: String| Error::InadmissibleGeometry {
            tool_id: self.tool_id,
            reason,
        };
        if self.markers.len() < 3 {
            return Err(fail(format!("{} markers, need at least 3", self.markers.len())));
        }
        if self.markers.iter().any(|m| !m.iter().all(|c| c.is_finite())) {
            return Err(fail("non-finite marker coordinate".into()));
        }
        if spread_singular_value(&self.markers) <= MIN_SINGULAR_VALUE {
            return Err(fail("markers are collinear".into()));
        }
        let gap = self.min_distance_gap();
        if gap < 2.0 * tol {
            return Err(fail(format!(
                "pairwise distances differ by only {gap:.3} mm; matching tolerance {tol} mm needs {:.3} mm",
                2.0 * tol
            )));
        }
        Ok(())
    }
}

mod vec3_list {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 3]> = v.iter().map(|p| [p.x, p.y, p.z]).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let raw = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(raw.into_iter().map(Vec3::from).collect())
    }
}

/// The JSON tool-definition file: `{"tools": [{id, name, markers}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSet {
    pub tools: Vec<ToolGeometry>,
}

impl ToolSet {
    /// Parses and validates every geometry against `tol`.
    pub fn from_json(text: &str, tol: f64) -> Result<Self, Error> {
        let set: ToolSet = serde_json::from_str(text)?;
        set.validate(tol)?;
        Ok(set)
    }

    pub fn load(path: &Path, tol: f64) -> Result<Self, Error> {
        Self::from_json(&fs::read_to_string(path)?, tol)
    }

    pub fn validate(&self, tol: f64) -> Result<(), Error> {
        let mut ids: Vec<u16> = self.tools.iter().map(|t| t.tool_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InadmissibleGeometry {
                tool_id: w[0],
                reason: "duplicate tool id".into(),
            });
        }
        self.tools.iter().try_for_each(|t| t.validate(tol))
    }
}

fn pairwise_distances(points: &[Vec3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            out.push((points[i] - points[j]).norm());
        }
    }
    out
}

/// Second-largest singular value of the centred point matrix: zero exactly
/// when the points are collinear (or coincident).
fn spread_singular_value(points: &[Vec3]) -> f64 {
    let c = centroid(points);
    let m = Matrix3xX::from_columns(&points.iter().map(|p| p - c).collect::<Vec<_>>());
    let mut sv: Vec<f64> = (&m * m.transpose()).symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[1]
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// Observed points assigned to a tool's markers, in marker order.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub tool_id: u16,
    /// `observed_indices[k]` is the input point assigned to marker `k`.
    pub observed_indices: Vec<usize>,
    /// The assigned points, ordered like the geometry's markers.
    pub observed: Vec<Vec3>,
    /// Largest absolute distance mismatch over all assigned pairs, mm.
    pub max_mismatch_mm: f64,
    /// Sum of squared distance mismatches, mm^2.
    pub sum_sq_mismatch: f64,
    /// Number of complete assignments that satisfied the tolerance.
    pub candidates: usize,
}

/// Finds the injective assignment of geometry markers to observed points whose
/// pairwise distances all agree within `tol`.
///
/// Returns `None` when no complete assignment exists. Only the first
/// [`MAX_MATCH_POINTS`] points are considered. If several assignments survive
/// (possible only for inadmissible geometries or coincidental clutter), the
/// one with the smallest sum of squared mismatches wins.
pub fn match_tool(points: &[Vec3], geometry: &ToolGeometry, tol: f64) -> Option<Correspondence> {
    let points = &points[..points.len().min(MAX_MATCH_POINTS)];
    let k = geometry.markers.len();
    if k == 0 || points.len() < k {
        return None;
    }
    let n = points.len();
    let mut obs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            obs[i * n + j] = (points[i] - points[j]).norm();
        }
    }
    let geo: Vec<f64> = (0..k * k)
        .map(|idx| (geometry.markers[idx / k] - geometry.markers[idx % k]).norm())
        .collect();

    let mut search = Search {
        obs: &obs,
        geo: &geo,
        n,
        k,
        tol,
        assigned: Vec::with_capacity(k),
        used: vec![false; n],
        best: None,
        candidates: 0,
    };
    search.extend(0.0);

    let candidates = search.candidates;
    let (indices, sum_sq) = search.best?;
    if candidates > 1 {
        log::warn!(
            "tool {}: {candidates} assignments within {tol} mm, keeping the closest",
            geometry.tool_id
        );
    }
    let mut max_mismatch = 0.0f64;
    for a in 0..k {
        for b in a + 1..k {
            max_mismatch = max_mismatch.max((obs[indices[a] * n + indices[b]] - geo[a * k + b]).abs());
        }
    }
    Some(Correspondence {
        tool_id: geometry.tool_id,
        observed: indices.iter().map(|&i| points[i]).collect(),
        observed_indices: indices,
        max_mismatch_mm: max_mismatch,
        sum_sq_mismatch: sum_sq,
        candidates,
    })
}

struct Search<'a> {
    obs: &'a [f64],
    geo: &'a [f64],
    n: usize,
    k: usize,
    tol: f64,
    assigned: Vec<usize>,
    used: Vec<bool>,
    best: Option<(Vec<usize>, f64)>,
    candidates: usize,
}

impl Search<'_> {
    /// Depth-first extension of a partial assignment; every new marker must
    /// agree in distance with all markers already placed.
    fn extend(&mut self, sum_sq: f64) {
        let marker = self.assigned.len();
        if marker == self.k {
            self.candidates += 1;
            if self.best.as_ref().is_none_or(|(_, s)| sum_sq < *s) {
                self.best = Some((self.assigned.clone(), sum_sq));
            }
            return;
        }
        for cand in 0..self.n {
            if self.used[cand] {
                continue;
            }
            let mut added = 0.0;
            let mut ok = true;
            for (prev_marker, &prev_obs) in self.assigned.iter().enumerate() {
                let diff = self.obs[cand * self.n + prev_obs] - self.geo[marker * self.k + prev_marker];
                if diff.abs() > self.tol {
                    ok = false;
                    break;
                }
                added += diff * diff;
            }
            if !ok {
                continue;
            }
            self.used[cand] = true;
            self.assigned.push(cand);
            self.extend(sum_sq + added);
            self.assigned.pop();
            self.used[cand] = false;
        }
    }
}

/// Result of a least-squares rigid fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// Maps source points onto destination points.
    pub transform: RigidTransform,
    /// Root-mean-square distance between transformed source and destination, mm.
    pub rms_residual_mm: f64,
}

/// Sum of squared residuals of `t` applied to `src` against `dst`.
pub fn sum_squared_residual(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (t.transform_point(s) - d).norm_squared())
        .sum()
}

/// Least-squares rigid transform taking `src[i]` to `dst[i]`, via centroid
/// subtraction and SVD of the cross-covariance (Arun, Huang & Blostein), with
/// the determinant correction that rules out reflections.
pub fn register_point_sets(src: &[Vec3], dst: &[Vec3]) -> Result<Registration, Error> {
    if src.len() != dst.len() {
        return Err(Error::PointCountMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::TooFewPoints(src.len()));
    }
    if spread_singular_value(src) <= MIN_SINGULAR_VALUE {
        return Err(Error::DegeneratePointSet);
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(Error::DegeneratePointSet)?, svd.v_t.ok_or(Error::DegeneratePointSet)?);
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, sign)) * u.transpose();
    let rotation = RigidTransform::from_matrix(&rotation, Vec3::zeros());
    let transform = RigidTransform::new(*rotation.rotation(), cd - rotation.transform_point(&cs));
    let rms = (sum_squared_residual(&transform, src, dst) / src.len() as f64).sqrt();
    Ok(Registration {
        transform,
        rms_residual_mm: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{compose, invert, pose_error};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tool_a() -> ToolGeometry {
        ToolGeometry::new(
            1,
            "A",
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(-30.0, -55.0, 0.0),
                Vec3::new(45.0, -10.0, 0.0),
                Vec3::new(-60.0, 45.0, 0.0),
            ],
        )
    }

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        RigidTransform::from_axis_angle_deg(
            axis,
            rng.random_range(0.0..180.0),
            Vec3::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0)),
        )
    }

    #[test]
    fn geometry_validation() {
        let g = tool_a();
        assert!(g.validate(3.0).is_ok());
        assert!(g.validate(6.5).is_err());
        let collinear = ToolGeometry::new(9, "line", vec![Vec3::zeros(), Vec3::x() * 10.0, Vec3::x() * 25.0]);
        assert!(collinear.validate(0.1).is_err());
        let two = ToolGeometry::new(9, "two", vec![Vec3::zeros(), Vec3::x()]);
        assert!(two.validate(0.1).is_err());
        let square = ToolGeometry::new(
            9,
            "square",
            vec![Vec3::zeros(), Vec3::x() * 50.0, Vec3::y() * 50.0, Vec3::new(50.0, 50.0, 0.0)],
        );
        assert!(square.validate(1.0).is_err());
    }

    #[test]
    fn tool_set_json_round_trip() {
        let text = r#"{"tools": [{"id": 1, "name": "A", "markers": [[0,0,0],[-30,-55,0],[45,-10,0],[-60,45,0]]}]}"#;
        let set = ToolSet::from_json(text, 3.0).unwrap();
        assert_eq!(set.tools[0], tool_a());
        let dup = r#"{"tools": [{"id": 1, "name": "A", "markers": [[0,0,0],[-30,-55,0],[45,-10,0],[-60,45,0]]},
                                {"id": 1, "name": "B", "markers": [[0,0,0],[-30,-55,0],[45,-10,0],[-60,45,0]]}]}"#;
        assert!(ToolSet::from_json(dup, 3.0).is_err());
    }

    #[test]
    fn match_verbatim_gives_identity_assignment() {
        let g = tool_a();
        let c = match_tool(&g.markers, &g, 1.0).unwrap();
        assert_eq!(c.observed_indices, vec![0, 1, 2, 3]);
        assert_eq!(c.candidates, 1);
        assert!(c.max_mismatch_mm < 1e-12);
    }

    #[test]
    fn match_inverts_a_shuffle() {
        let g = tool_a();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let t = random_transform(&mut rng);
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut rng);
            let moved: Vec<Vec3> = perm.iter().map(|&i| t.transform_point(&g.markers[i])).collect();
            let c = match_tool(&moved, &g, 1.0).unwrap();
            for (marker, &obs) in c.observed_indices.iter().enumerate() {
                assert_eq!(perm[obs], marker);
            }
        }
    }

    #[test]
    fn match_needs_every_marker() {
        let g = tool_a();
        assert!(match_tool(&g.markers[..3], &g, 1.0).is_none());
        assert!(match_tool(&[], &g, 1.0).is_none());
    }

    #[test]
    fn match_finds_tool_among_clutter() {
        let g = tool_a();
        let t = RigidTransform::from_axis_angle_deg(Vec3::new(1.0, 1.0, 0.0), 33.0, Vec3::new(10.0, 20.0, 600.0));
        let mut pts = vec![Vec3::new(300.0, 300.0, 300.0), Vec3::new(-200.0, 0.0, 500.0)];
        pts.extend(g.markers.iter().map(|m| t.transform_point(m)));
        pts.push(Vec3::new(5.0, 5.0, 5.0));
        let c = match_tool(&pts, &g, 1.0).unwrap();
        assert_eq!(c.observed_indices, vec![2, 3, 4, 5]);
    }

    #[test]
    fn register_identity_and_exact() {
        let g = tool_a();
        let r = register_point_sets(&g.markers, &g.markers).unwrap();
        assert!(pose_error(&r.transform, &RigidTransform::identity()).translation_mm < 1e-12);
        assert!(r.rms_residual_mm < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = random_transform(&mut rng);
            let dst: Vec<Vec3> = g.markers.iter().map(|m| t.transform_point(m)).collect();
            let r = register_point_sets(&g.markers, &dst).unwrap();
            let e = (r.transform.to_homogeneous() - t.to_homogeneous()).amax();
            assert!(e < 1e-9, "error {e}");
        }
    }

    #[test]
    fn register_rejects_bad_input() {
        let g = tool_a();
        assert!(matches!(register_point_sets(&g.markers, &g.markers[..3]), Err(Error::PointCountMismatch { .. })));
        assert!(matches!(register_point_sets(&g.markers[..2], &g.markers[..2]), Err(Error::TooFewPoints(2))));
        let line = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0, Vec3::x() * 3.0];
        assert!(matches!(register_point_sets(&line, &line), Err(Error::DegeneratePointSet)));
    }

    #[test]
    fn register_handles_reflected_target_without_reflecting() {
        // dst is src mirrored through the xy-plane: the best rotation must still have det +1.
        let src = vec![Vec3::zeros(), Vec3::new(40.0, 0.0, 10.0), Vec3::new(0.0, 50.0, 20.0), Vec3::new(10.0, 10.0, -30.0)];
        let dst: Vec<Vec3> = src.iter().map(|m| Vec3::new(m.x, m.y, -m.z)).collect();
        let r = register_point_sets(&src, &dst).unwrap();
        assert!((r.transform.rotation_matrix().determinant() - 1.0).abs() < 1e-9);
        assert!(r.rms_residual_mm > 1.0);
    }

    #[test]
    fn noisy_fit_beats_generating_transform() {
        let g = tool_a();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let dst: Vec<Vec3> = g
                .markers
                .iter()
                .map(|m| t.transform_point(m) + Vec3::from_fn(|_, _| normal.sample(&mut rng)))
                .collect();
            let r = register_point_sets(&g.markers, &dst).unwrap();
            assert!(sum_squared_residual(&r.transform, &g.markers, &dst) <= sum_squared_residual(&t, &g.markers, &dst) + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn registration_conjugates_under_rigid_motion(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = rand_distr::Normal::new(0.0, 2.0).unwrap();
            let src: Vec<Vec3> = (0..5).map(|_| Vec3::from_fn(|_, _| rng.random_range(-60.0..60.0))).collect();
            let t = random_transform(&mut rng);
            let dst: Vec<Vec3> = src.iter().map(|p| t.transform_point(p) + Vec3::from_fn(|_, _| normal.sample(&mut rng))).collect();
            let g = random_transform(&mut rng);
            let base = register_point_sets(&src, &dst).unwrap().transform;
            let moved_src: Vec<Vec3> = src.iter().map(|p| g.transform_point(p)).collect();
            let moved_dst: Vec<Vec3> = dst.iter().map(|p| g.transform_point(p)).collect();
            let moved = register_point_sets(&moved_src, &moved_dst).unwrap().transform;
            let expected = compose(&compose(&g, &base), &invert(&g));
            prop_assert!((moved.to_homogeneous() - expected.to_homogeneous()).amax() < 1e-9);
            prop_assert!((moved.rotation_matrix().determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn matching_is_permutation_invariant(seed in any::<u64>()) {
            let g = tool_a();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_transform(&mut rng);
            let mut pts: Vec<Vec3> = g.markers.iter().map(|m| t.transform_point(m)).collect();
            pts.push(Vec3::new(1000.0, 0.0, 0.0));
            let first = match_tool(&pts, &g, 1.0).unwrap();
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
            let second = match_tool(&shuffled, &g, 1.0).unwrap();
            prop_assert_eq!(first.observed, second.observed);
        }
    }
}
