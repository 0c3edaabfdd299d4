//! `.evs` event streams: a 24-byte header followed by 13-byte records
//! (u: u16, v: u16, t: u64 ns, p: i8), all little-endian.
//!
//! Header: magic `EVS\0`, version u32, width u32, height u32, C and B as
//! u32 in millionths.

use evslam_core::event::{EventRecord, EventStream};

pub const MAGIC: [u8; 4] = *b"EVS\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 13;
const SCALE: f64 = 1e6;

/// Parse failure with the byte offset where it was detected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvsError {
    pub offset: usize,
    pub reason: String,
}

impl std::fmt::Display for EvsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.reason)
    }
}

fn scaled(x: f64) -> u32 {
    (x * SCALE).round() as u32
}

pub fn encode(stream: &EventStream) -> Vec<u8> {
    let (w, h) = stream.resolution();
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&scaled(stream.threshold_c()).to_le_bytes());
    out.extend_from_slice(&scaled(stream.linlog_b()).to_le_bytes());
    for r in stream.records() {
        out.extend_from_slice(&r.u.to_le_bytes());
        out.extend_from_slice(&r.v.to_le_bytes());
        out.extend_from_slice(&r.t.to_le_bytes());
        out.extend_from_slice(&r.p.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Header fields: width, height, C, B.
pub fn decode_header(bytes: &[u8]) -> Result<(usize, usize, f64, f64), EvsError> {
    if bytes.len() < HEADER_LEN {
        return Err(EvsError {
            offset: bytes.len(),
            reason: format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len()),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(EvsError {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(EvsError {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let (w, h) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let (c, b) = (u32_at(bytes, 16) as f64 / SCALE, u32_at(bytes, 20) as f64 / SCALE);
    Ok((w, h, c, b))
}

pub fn decode(bytes: &[u8]) -> Result<EventStream, EvsError> {
    let (w, h, c, b) = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if !body.len().is_multiple_of(RECORD_LEN) {
        let offset = HEADER_LEN + body.len() / RECORD_LEN * RECORD_LEN;
        return Err(EvsError {
            offset,
            reason: format!("truncated record ({} of {RECORD_LEN} bytes)", body.len() % RECORD_LEN),
        });
    }
    let mut records = Vec::with_capacity(body.len() / RECORD_LEN);
    for (k, r) in body.chunks_exact(RECORD_LEN).enumerate() {
        let offset = HEADER_LEN + k * RECORD_LEN;
        let mut t = [0u8; 8];
        t.copy_from_slice(&r[4..12]);
        let rec = EventRecord {
            u: u16::from_le_bytes([r[0], r[1]]),
            v: u16::from_le_bytes([r[2], r[3]]),
            t: u64::from_le_bytes(t),
            p: r[12] as i8,
        };
        if rec.u as usize >= w || rec.v as usize >= h {
            return Err(EvsError {
                offset,
                reason: format!("pixel ({}, {}) outside {w}x{h}", rec.u, rec.v),
            });
        }
        if rec.p != 1 && rec.p != -1 {
            return Err(EvsError {
                offset: offset + 12,
                reason: format!("polarity {}", rec.p),
            });
        }
        if records.last().is_some_and(|p: &EventRecord| p.t > rec.t) {
            return Err(EvsError {
                offset: offset + 4,
                reason: "timestamps decrease".into(),
            });
        }
        records.push(rec);
    }
    EventStream::new(records, w, h, c, b).map_err(|e| EvsError {
        offset: 0,
        reason: e.to_string(),
    })
}
