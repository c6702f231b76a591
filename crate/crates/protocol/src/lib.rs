//! Binary pose-batch protocol between an optical tracker and a headset.

pub mod log;
pub mod stream;
pub mod transport;
pub mod wire;

pub use stream::StreamDecoder;
pub use transport::{subscribe, Backoff, PacketServer, PacketStream, TransportError};
pub use wire::{decode_packet, encode_packet, PoseObservation, TrackingPacket};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("bad magic")]
    MalformedMagic,
    #[error("message length {actual} does not match {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CorruptPayload { stored: u32, computed: u32 },
    #[error("tool {tool_id}: invalid pose (quaternion norm {norm})")]
    InvalidPose { tool_id: u16, norm: f64 },
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMessageType(u8),
    #[error("{0} observations exceed the limit of 255")]
    TooManyObservations(usize),
}
