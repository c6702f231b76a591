//! Incremental decoding of a byte stream carrying back-to-back messages.

use crate::wire::{declared_len, decode_packet, TrackingPacket, HEADER_LEN, MAGIC};
use crate::Error;

/// Buffers bytes as they arrive and yields complete messages.
///
/// Anything that fails to decode is reported once and skipped up to the next
/// magic sequence, so a damaged stream recovers on the following message.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes held but not yet decoded.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next message or decoding error, or `None` until more bytes arrive.
    /// Every `Some` consumes at least one byte.
    pub fn next_packet(&mut self) -> Option<Result<TrackingPacket, Error>> {
        if self.buf.is_empty() {
            return None;
        }
        if !self.buf.starts_with(&MAGIC) {
            let skip = match find_magic(&self.buf) {
                Some(at) => at,
                // Keep a tail that could still be the start of a magic.
                None => self.buf.len() - partial_magic_suffix(&self.buf),
            };
            if skip == 0 {
                return None;
            }
            self.buf.drain(..skip);
            return Some(Err(Error::MalformedMagic));
        }
        if self.buf.len() < HEADER_LEN {
            return None;
        }
        let len = declared_len(&self.buf).expect("header present");
        if self.buf.len() < len {
            return None;
        }
        match decode_packet(&self.buf[..len]) {
            Ok(p) => {
                self.buf.drain(..len);
                Some(Ok(p))
            }
            Err(e) => {
                // Step past this magic and hunt for the next one.
                self.buf.drain(..1);
                Some(Err(e))
            }
        }
    }

    /// Pushes `bytes` and drains every result that is now available.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Result<TrackingPacket, Error>> {
        self.push(bytes);
        std::iter::from_fn(|| self.next_packet()).collect()
    }
}

fn find_magic(buf: &[u8]) -> Option<usize> {
    buf.windows(MAGIC.len()).position(|w| w == MAGIC)
}

fn partial_magic_suffix(buf: &[u8]) -> usize {
    (1..MAGIC.len())
        .rev()
        .find(|&k| buf.len() >= k && buf[buf.len() - k..] == MAGIC[..k])
        .unwrap_or(0)
}
