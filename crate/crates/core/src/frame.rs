//! Sensor images, paired AB + depth frames, and their on-disk formats.
//!
//! A frame image is stored as raw little-endian `u16` (exactly
//! `512 * 512 * 2` bytes) next to a one-line JSON sidecar describing its kind
//! and capture time.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::Error;

pub const IMAGE_WIDTH: usize = 512;
pub const IMAGE_HEIGHT: usize = 512;
pub const IMAGE_PIXELS: usize = IMAGE_WIDTH * IMAGE_HEIGHT;
pub const RAW_IMAGE_BYTES: usize = IMAGE_PIXELS * 2;

/// A 512x512 single-channel 16-bit image, row-major.
///
/// Holds active-brightness intensity or depth in millimetres (0 = invalid).
#[derive(Clone, PartialEq, Eq)]
pub struct SensorImage {
    pixels: Vec<u16>,
}

impl SensorImage {
    pub fn zeros() -> Self {
        Self {
            pixels: vec![0; IMAGE_PIXELS],
        }
    }

    pub fn from_pixels(pixels: Vec<u16>) -> Result<Self, Error> {
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::ImageSize {
                expected: IMAGE_PIXELS,
                actual: pixels.len(),
            });
        }
        Ok(Self { pixels })
    }

    pub fn width(&self) -> usize {
        IMAGE_WIDTH
    }

    pub fn height(&self) -> usize {
        IMAGE_HEIGHT
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.pixels[v * IMAGE_WIDTH + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: u16) {
        self.pixels[v * IMAGE_WIDTH + u] = value;
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u16] {
        &mut self.pixels
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RAW_IMAGE_BYTES);
        for p in &self.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != RAW_IMAGE_BYTES {
            return Err(Error::ImageSize {
                expected: RAW_IMAGE_BYTES,
                actual: bytes.len(),
            });
        }
        let pixels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok(Self { pixels })
    }

    /// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{IMAGE_WIDTH} {IMAGE_HEIGHT}\n65535\n").into_bytes();
        out.reserve(RAW_IMAGE_BYTES);
        for p in &self.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }
}

impl Default for SensorImage {
    fn default() -> Self {
        Self::zeros()
    }
}

impl std::fmt::Debug for SensorImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SensorImage({IMAGE_WIDTH}x{IMAGE_HEIGHT}, {} nonzero)",
            self.count_nonzero()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Ab,
    Depth,
}

/// One-line JSON sidecar written next to each raw image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub kind: FrameKind,
    pub timestamp_us: u64,
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_image(dir: &Path, stem: &str, image: &SensorImage, sidecar: FrameSidecar) -> Result<(), Error> {
    fs::write(dir.join(format!("{stem}.bin")), image.to_le_bytes())?;
    let mut f = fs::File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer(&mut f, &sidecar)?;
    writeln!(f)?;
    Ok(())
}

pub fn read_image(dir: &Path, stem: &str) -> Result<(SensorImage, FrameSidecar), Error> {
    let image = SensorImage::from_le_bytes(&fs::read(dir.join(format!("{stem}.bin")))?)?;
    let sidecar = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    Ok((image, sidecar))
}

/// Paired AB and depth images captured at the same instant, with the camera
/// pose in the headset's world frame.
#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub ab: SensorImage,
    pub depth: SensorImage,
    pub cam_to_world: RigidTransform,
    pub timestamp_us: u64,
}

impl SensorFrame {
    pub fn empty(cam_to_world: RigidTransform, timestamp_us: u64) -> Self {
        Self {
            ab: SensorImage::zeros(),
            depth: SensorImage::zeros(),
            cam_to_world,
            timestamp_us,
        }
    }
}
