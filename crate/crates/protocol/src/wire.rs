//! Pose-batch wire format.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "IRTP"
//!      4     1  version (1)
//!      5     1  message type (1 = pose batch)
//!      6     2  reserved, 0
//!      8     8  timestamp, microseconds
//!     16     1  observation count n
//!     17     3  reserved, 0
//!     20  61*n  observations: tool id u16, visible u8, 2 pad bytes,
//!               quaternion w x y z and translation x y z (mm) as f64
//! 20+61n     4  CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Everything is little-endian.

use irtrack_core::calibration::{DeviceKind, DeviceObservation};
use irtrack_core::geometry::{RigidTransform, Vec3, QUATERNION_NORM_TOLERANCE};
use serde::{Deserialize, Serialize};

use crate::Error;

pub const MAGIC: [u8; 4] = *b"IRTP";
pub const VERSION: u8 = 1;
pub const MSG_POSE_BATCH: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const OBSERVATION_LEN: usize = 61;
pub const CRC_LEN: usize = 4;
pub const MAX_OBSERVATIONS: usize = 255;
/// Longest possible message.
pub const MAX_PACKET_LEN: usize = packet_len(MAX_OBSERVATIONS);

pub const fn packet_len(observations: usize) -> usize {
    HEADER_LEN + OBSERVATION_LEN * observations + CRC_LEN
}

/// One tool's entry in a packet. Invisible tools may carry any pose values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseObservation {
    pub tool_id: u16,
    pub visible: bool,
    pub quaternion: [f64; 4],
    pub translation_mm: [f64; 3],
}

impl PoseObservation {
    pub fn visible(tool_id: u16, pose: &RigidTransform) -> Self {
        let t = pose.translation();
        Self {
            tool_id,
            visible: true,
            quaternion: pose.wxyz(),
            translation_mm: [t.x, t.y, t.z],
        }
    }

    pub fn hidden(tool_id: u16) -> Self {
        Self {
            tool_id,
            visible: false,
            quaternion: [1.0, 0.0, 0.0, 0.0],
            translation_mm: [0.0; 3],
        }
    }

    /// The carried pose, when the tool is visible and the pose is valid.
    pub fn pose(&self) -> Option<RigidTransform> {
        if !self.visible {
            return None;
        }
        RigidTransform::from_wxyz(self.quaternion, Vec3::from(self.translation_mm)).ok()
    }

    fn check(&self) -> Result<(), Error> {
        if !self.visible {
            return Ok(());
        }
        let norm = self.quaternion.iter().map(|c| c * c).sum::<f64>().sqrt();
        let finite = self.translation_mm.iter().all(|c| c.is_finite());
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE || !finite {
            return Err(Error::InvalidPose {
                tool_id: self.tool_id,
                norm,
            });
        }
        Ok(())
    }
}

/// Timestamped pose readings from one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingPacket {
    pub timestamp_us: u64,
    pub observations: Vec<PoseObservation>,
}

impl TrackingPacket {
    pub fn new(timestamp_us: u64, observations: Vec<PoseObservation>) -> Self {
        Self {
            timestamp_us,
            observations,
        }
    }

    pub fn from_device_observations(timestamp_us: u64, obs: &[DeviceObservation]) -> Self {
        Self::new(timestamp_us, obs.iter().map(|o| PoseObservation::visible(o.tool_id, &o.pose)).collect())
    }

    /// Visible tools as device observations stamped with the packet time.
    pub fn to_device_observations(&self, device: DeviceKind) -> Vec<DeviceObservation> {
        self.observations
            .iter()
            .filter_map(|o| o.pose().map(|pose| DeviceObservation::new(device, o.tool_id, pose, self.timestamp_us)))
            .collect()
    }

    pub fn encoded_len(&self) -> usize {
        packet_len(self.observations.len())
    }
}

pub fn encode_packet(p: &TrackingPacket) -> Result<Vec<u8>, Error> {
    if p.observations.len() > MAX_OBSERVATIONS {
        return Err(Error::TooManyObservations(p.observations.len()));
    }
    for o in &p.observations {
        o.check()?;
    }
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(MSG_POSE_BATCH);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&p.timestamp_us.to_le_bytes());
    out.push(p.observations.len() as u8);
    out.extend_from_slice(&[0, 0, 0]);
    for o in &p.observations {
        out.extend_from_slice(&o.tool_id.to_le_bytes());
        out.push(u8::from(o.visible));
        out.extend_from_slice(&[0, 0]);
        for v in o.quaternion.iter().chain(&o.translation_mm) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Total message length announced by a header, once enough bytes are present
/// to read it. Only the magic and the count byte are inspected.
pub fn declared_len(bytes: &[u8]) -> Option<usize> {
    (bytes.len() >= HEADER_LEN).then(|| packet_len(usize::from(bytes[16])))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Decodes exactly one message occupying all of `bytes`.
pub fn decode_packet(bytes: &[u8]) -> Result<TrackingPacket, Error> {
    if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
        return Err(Error::MalformedMagic);
    }
    let Some(expected) = declared_len(bytes) else {
        return Err(Error::Truncated {
            expected: HEADER_LEN + CRC_LEN,
            actual: bytes.len(),
        });
    };
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != MSG_POSE_BATCH {
        return Err(Error::UnknownMessageType(bytes[5]));
    }
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let body = expected - CRC_LEN;
    let stored = u32::from_le_bytes(bytes[body..expected].try_into().expect("4-byte slice"));
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(Error::CorruptPayload { stored, computed });
    }
    let timestamp_us = u64::from_le_bytes(bytes[8..16].try_into().expect("8-byte slice"));
    let count = usize::from(bytes[16]);
    let mut observations = Vec::with_capacity(count);
    for i in 0..count {
        let at = HEADER_LEN + i * OBSERVATION_LEN;
        let values: Vec<f64> = (0..7).map(|k| f64_at(bytes, at + 5 + 8 * k)).collect();
        let o = PoseObservation {
            tool_id: u16::from_le_bytes([bytes[at], bytes[at + 1]]),
            visible: bytes[at + 2] != 0,
            quaternion: [values[0], values[1], values[2], values[3]],
            translation_mm: [values[4], values[5], values[6]],
        };
        o.check()?;
        observations.push(o);
    }
    Ok(TrackingPacket {
        timestamp_us,
        observations,
    })
}
