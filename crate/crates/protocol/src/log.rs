//! Packet logs: one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::wire::TrackingPacket;

pub struct PacketLogWriter {
    out: BufWriter<File>,
}

impl PacketLogWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, packet: &TrackingPacket) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, packet)?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn write_log(path: &Path, packets: &[TrackingPacket]) -> std::io::Result<()> {
    let mut w = PacketLogWriter::create(path)?;
    for p in packets {
        w.append(p)?;
    }
    w.finish()
}

/// Reads a log back; blank lines are skipped.
pub fn read_log(path: &Path) -> std::io::Result<Vec<TrackingPacket>> {
    let mut packets = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        packets.push(p);
    }
    Ok(packets)
}
