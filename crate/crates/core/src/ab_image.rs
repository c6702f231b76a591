//! Active-brightness image processing: thresholding and blob extraction.
//!
//! Retroreflective markers show up as saturated round spots. A frame is first
//! thresholded, then split into 8-connected components which are filtered on
//! area, circularity and convexity.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::frame::{SensorImage, IMAGE_HEIGHT, IMAGE_WIDTH};

pub const DEFAULT_AB_THRESHOLD: u16 = 512;
pub const DEFAULT_MAX_KEYPOINTS: usize = 16;

/// Keeps pixels strictly brighter than `thresh`; everything else becomes 0.
pub fn threshold_ab(img: &SensorImage, thresh: u16) -> SensorImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        if *p <= thresh {
            *p = 0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobFilterParams {
    pub min_area: usize,
    pub max_area: usize,
    pub min_circularity: f64,
    pub min_convexity: f64,
}

impl Default for BlobFilterParams {
    fn default() -> Self {
        Self {
            min_area: 4,
            max_area: 500,
            min_circularity: 0.6,
            min_convexity: 0.8,
        }
    }
}

/// A connected bright region.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Intensity-weighted centroid; pixel `(u, v)` has its centre at `(u, v)`.
    pub centroid_u: f64,
    pub centroid_v: f64,
    pub area_px: usize,
    pub circularity: f64,
    pub convexity: f64,
    pub total_intensity: f64,
    /// Member pixels as `(u, v)`.
    pub pixel_mask: Vec<(u16, u16)>,
}

/// Connected components of the nonzero pixels of a thresholded image that
/// pass `params`, brightest first.
pub fn detect_blobs(img: &SensorImage, params: &BlobFilterParams) -> Vec<Blob> {
    let mut visited = vec![false; IMAGE_WIDTH * IMAGE_HEIGHT];
    let mut queue = VecDeque::new();
    let mut blobs = Vec::new();
    let pixels = img.pixels();

    for start in 0..pixels.len() {
        if pixels[start] == 0 || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (u, v) = (idx % IMAGE_WIDTH, idx / IMAGE_WIDTH);
            members.push((u as u16, v as u16));
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    if du == 0 && dv == 0 {
                        continue;
                    }
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= IMAGE_WIDTH as i64 || nv >= IMAGE_HEIGHT as i64 {
                        continue;
                    }
                    let n = nv as usize * IMAGE_WIDTH + nu as usize;
                    if pixels[n] != 0 && !visited[n] {
                        visited[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        // Cheap rejection before any shape analysis.
        if members.len() < params.min_area || members.len() > params.max_area {
            continue;
        }
        let blob = analyse_component(img, members);
        if blob.circularity >= params.min_circularity && blob.convexity >= params.min_convexity {
            blobs.push(blob);
        }
    }

    blobs.sort_by(|a, b| {
        b.total_intensity
            .total_cmp(&a.total_intensity)
            .then_with(|| a.pixel_mask[0].1.cmp(&b.pixel_mask[0].1))
            .then_with(|| a.pixel_mask[0].0.cmp(&b.pixel_mask[0].0))
    });
    blobs
}

fn analyse_component(img: &SensorImage, mut members: Vec<(u16, u16)>) -> Blob {
    members.sort_unstable_by_key(|&(u, v)| (v, u));
    let in_component = |u: i64, v: i64| -> bool {
        if u < 0 || v < 0 || u >= IMAGE_WIDTH as i64 || v >= IMAGE_HEIGHT as i64 {
            return false;
        }
        img.get(u as usize, v as usize) != 0
    };

    let mut total = 0.0;
    let (mut su, mut sv) = (0.0, 0.0);
    let mut perimeter = 0usize;
    for &(u, v) in &members {
        let w = f64::from(img.get(u as usize, v as usize));
        total += w;
        su += w * f64::from(u);
        sv += w * f64::from(v);
        let (iu, iv) = (i64::from(u), i64::from(v));
        let on_contour = !in_component(iu - 1, iv)
            || !in_component(iu + 1, iv)
            || !in_component(iu, iv - 1)
            || !in_component(iu, iv + 1);
        if on_contour {
            perimeter += 1;
        }
    }

    let area = members.len();
    let circularity = (4.0 * PI * area as f64 / (perimeter.max(1) as f64).powi(2)).min(1.0);
    let convexity = (area as f64 / hull_pixel_count(&members) as f64).min(1.0);

    Blob {
        centroid_u: su / total,
        centroid_v: sv / total,
        area_px: area,
        circularity,
        convexity,
        total_intensity: total,
        pixel_mask: members,
    }
}

/// Number of lattice pixels inside or on the convex hull of the pixel
/// centres (Pick's theorem). A digitally convex blob fills its hull exactly.
fn hull_pixel_count(members: &[(u16, u16)]) -> usize {
    let hull = convex_hull(members.iter().map(|&(u, v)| (i64::from(u), i64::from(v))).collect());
    let gcd = |mut a: i64, mut b: i64| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    };
    match hull.len() {
        0 => 0,
        1 => 1,
        2 => gcd(hull[1].0 - hull[0].0, hull[1].1 - hull[0].1) as usize + 1,
        n => {
            let (mut twice_area, mut boundary) = (0i64, 0i64);
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                twice_area += a.0 * b.1 - b.0 * a.1;
                boundary += gcd(b.0 - a.0, b.1 - a.1);
            }
            // I + B = A + B/2 + 1
            ((twice_area.abs() + boundary) / 2 + 1) as usize
        }
    }
}

/// Andrew's monotone chain; returns the hull counter-clockwise without repeats.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Centroids of at most `max_count` blobs, in the order given.
pub fn extract_keypoints(blobs: &[Blob], max_count: usize) -> Vec<(f64, f64)> {
    blobs
        .iter()
        .take(max_count)
        .map(|b| (b.centroid_u, b.centroid_v))
        .collect()
}
