//! Depth sampling and unprojection of keypoints to camera and world space.
//!
//! Depth values are radial distances along the pixel's unit ray, so a camera
//! point is simply `depth * ray`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ab_image::Blob;
use crate::frame::{SensorImage, IMAGE_HEIGHT, IMAGE_PIXELS, IMAGE_WIDTH};
use crate::geometry::{RigidTransform, Vec3};
use crate::Error;

/// Upper end of the depth sensor's validity range.
pub const MAX_VALID_DEPTH_MM: f64 = 1000.0;

/// Depth samples further than this from the mask median are ignored when
/// averaging. Wide enough to keep the +-1 mm quantisation spread.
pub const DEPTH_INLIER_WINDOW_MM: f64 = 1.5;

/// Pinhole intrinsics, pixel units. Pixel `(u, v)` has its centre at `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 360.0,
            fy: 360.0,
            cx: 255.5,
            cy: 255.5,
        }
    }
}

impl Intrinsics {
    /// Unit ray through pixel coordinates `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Pixel coordinates of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z))
    }
}

/// Per-pixel unit rays in the camera frame.
#[derive(Clone, PartialEq)]
pub struct UnprojectionMap {
    rays: Vec<Vec3>,
}

impl std::fmt::Debug for UnprojectionMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "UnprojectionMap({IMAGE_WIDTH}x{IMAGE_HEIGHT})")
    }
}

impl UnprojectionMap {
    pub fn from_intrinsics(k: &Intrinsics) -> Self {
        let mut rays = Vec::with_capacity(IMAGE_PIXELS);
        for v in 0..IMAGE_HEIGHT {
            for u in 0..IMAGE_WIDTH {
                rays.push(k.ray(u as f64, v as f64));
            }
        }
        Self { rays }
    }

    pub fn ray_at_pixel(&self, u: usize, v: usize) -> Vec3 {
        self.rays[v * IMAGE_WIDTH + u]
    }

    /// Bilinearly interpolated ray, renormalised.
    pub fn ray(&self, u: f64, v: f64) -> Result<Vec3, Error> {
        let max_u = (IMAGE_WIDTH - 1) as f64;
        let max_v = (IMAGE_HEIGHT - 1) as f64;
        if !(0.0..=max_u).contains(&u) || !(0.0..=max_v).contains(&v) {
            return Err(Error::PixelOutOfBounds { u, v });
        }
        let (u0, v0) = ((u.floor() as usize).min(IMAGE_WIDTH - 2), (v.floor() as usize).min(IMAGE_HEIGHT - 2));
        let (fu, fv) = (u - u0 as f64, v - v0 as f64);
        let r = self.ray_at_pixel(u0, v0) * ((1.0 - fu) * (1.0 - fv))
            + self.ray_at_pixel(u0 + 1, v0) * (fu * (1.0 - fv))
            + self.ray_at_pixel(u0, v0 + 1) * ((1.0 - fu) * fv)
            + self.ray_at_pixel(u0 + 1, v0 + 1) * (fu * fv);
        Ok(r.normalize())
    }

    /// Raw little-endian `f32` triplets, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMAGE_PIXELS * 12);
        for r in &self.rays {
            for c in r.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != IMAGE_PIXELS * 12 {
            return Err(Error::ImageSize {
                expected: IMAGE_PIXELS * 12,
                actual: bytes.len(),
            });
        }
        let rays = bytes
            .chunks_exact(12)
            .map(|c| {
                let f = |i: usize| f64::from(f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]));
                Vec3::new(f(0), f(4), f(8)).normalize()
            })
            .collect();
        Ok(Self { rays })
    }
}

/// Intrinsics together with the unprojection map built from them.
#[derive(Debug, Clone)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub map: UnprojectionMap,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics) -> Self {
        Self {
            map: UnprojectionMap::from_intrinsics(&intrinsics),
            intrinsics,
        }
    }

    pub fn max_depth_mm(&self) -> f64 {
        MAX_VALID_DEPTH_MM
    }

    /// Writes `<stem>.bin` (f32 rays) and `<stem>.json` (intrinsics).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), Error> {
        fs::write(dir.join(format!("{stem}.bin")), self.map.to_le_bytes())?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec(&self.intrinsics)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, Error> {
        let intrinsics = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
        let map = UnprojectionMap::from_le_bytes(&fs::read(dir.join(format!("{stem}.bin")))?)?;
        Ok(Self { intrinsics, map })
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::new(Intrinsics::default())
    }
}

/// Robust depth of a blob from the paired depth image.
///
/// Zero (invalid) samples are dropped; the estimate is `None` when fewer than
/// half of the mask pixels carry depth or the result lies beyond 1 m. The
/// estimate is the mean of the samples within [`DEPTH_INLIER_WINDOW_MM`] of the
/// median, which recovers sub-millimetre depth from dithered integer frames
/// while ignoring stray edge pixels.
pub fn sample_depth(depth: &SensorImage, blob: &Blob) -> Option<f64> {
    let mut values: Vec<u16> = blob
        .pixel_mask
        .iter()
        .map(|&(u, v)| depth.get(usize::from(u), usize::from(v)))
        .filter(|&d| d != 0)
        .collect();
    if values.is_empty() || values.len() * 2 < blob.pixel_mask.len() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    let median = if n % 2 == 1 {
        f64::from(values[n / 2])
    } else {
        0.5 * (f64::from(values[n / 2 - 1]) + f64::from(values[n / 2]))
    };
    if median > MAX_VALID_DEPTH_MM {
        return None;
    }
    let (sum, count) = values
        .iter()
        .map(|&d| f64::from(d))
        .filter(|d| (d - median).abs() <= DEPTH_INLIER_WINDOW_MM)
        .fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
    let estimate = sum / count as f64;
    (estimate > 0.0 && estimate <= MAX_VALID_DEPTH_MM).then_some(estimate)
}

/// Camera-frame point at radial depth `d` along the ray through `(u, v)`.
pub fn unproject(u: f64, v: f64, d: f64, cam: &CameraModel) -> Result<Vec3, Error> {
    if !(d > 0.0 && d <= cam.max_depth_mm()) {
        return Err(Error::InvalidDepth(d));
    }
    Ok(cam.map.ray(u, v)? * d)
}

pub fn camera_to_world(p_cam: &Vec3, cam_to_world: &RigidTransform) -> Vec3 {
    cam_to_world.transform_point(p_cam)
}
