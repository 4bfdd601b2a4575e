//! Fixed-width little-endian detection record.
//!
//! | offset | size | field     |
//! |-------:|-----:|-----------|
//! |      0 |    8 | det_id    |
//! |      8 |    4 | pass_id   |
//! |     12 |    8 | mjd       |
//! |     20 |    8 | ra        |
//! |     28 |    8 | dec       |
//! |     36 |    4 | flux      |
//! |     40 |    4 | flux_err  |
//! |     44 |    4 | flags     |
//! |     48 |    4 | zone      |
//! |     52 |    8 | master_id |
//! |     60 |    4 | reserved  |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::UnitVec;

pub const RECORD_SIZE: usize = 64;

/// One measurement of one source in one pass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Detection {
    pub det_id: u64,
    pub pass_id: u32,
    pub mjd: f64,
    pub ra: f64,
    pub dec: f64,
    pub flux: f32,
    pub flux_err: f32,
    pub flags: u32,
    pub zone: u32,
    /// 0 while unassigned.
    pub master_id: u64,
}

impl Detection {
    pub fn encode(&self, out: &mut [u8; RECORD_SIZE]) {
        out[0..8].copy_from_slice(&self.det_id.to_le_bytes());
        out[8..12].copy_from_slice(&self.pass_id.to_le_bytes());
        out[12..20].copy_from_slice(&self.mjd.to_le_bytes());
        out[20..28].copy_from_slice(&self.ra.to_le_bytes());
        out[28..36].copy_from_slice(&self.dec.to_le_bytes());
        out[36..40].copy_from_slice(&self.flux.to_le_bytes());
        out[40..44].copy_from_slice(&self.flux_err.to_le_bytes());
        out[44..48].copy_from_slice(&self.flags.to_le_bytes());
        out[48..52].copy_from_slice(&self.zone.to_le_bytes());
        out[52..60].copy_from_slice(&self.master_id.to_le_bytes());
        out[60..64].fill(0);
    }

    pub fn to_bytes(&self) -> [u8; RECORD_SIZE] {
        let mut b = [0u8; RECORD_SIZE];
        self.encode(&mut b);
        b
    }

    pub fn decode(b: &[u8]) -> Self {
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        Detection {
            det_id: u64_at(0),
            pass_id: u32_at(8),
            mjd: f64_at(12),
            ra: f64_at(20),
            dec: f64_at(28),
            flux: f32_at(36),
            flux_err: f32_at(40),
            flags: u32_at(44),
            zone: u32_at(48),
            master_id: u64_at(52),
        }
    }

    /// Field-level checks applied on ingest.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.mjd.is_finite() {
            return Err(format!("mjd is not finite ({})", self.mjd));
        }
        if !(self.ra.is_finite() && (0.0..360.0).contains(&self.ra)) {
            return Err(format!("ra outside [0, 360) ({})", self.ra));
        }
        if !(self.dec.is_finite() && (-90.0..=90.0).contains(&self.dec)) {
            return Err(format!("dec outside [-90, 90] ({})", self.dec));
        }
        if !self.flux.is_finite() {
            return Err(format!("flux is not finite ({})", self.flux));
        }
        if !(self.flux_err.is_finite() && self.flux_err > 0.0) {
            return Err(format!("flux_err must be > 0 ({})", self.flux_err));
        }
        Ok(())
    }

    pub fn position(&self) -> UnitVec {
        UnitVec::from_radec_unchecked(self.ra, self.dec)
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[Detection]) -> Result<()> {
    let mut buf = [0u8; RECORD_SIZE];
    for r in records {
        r.encode(&mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Decodes a whole buffer of records; a trailing partial record is an error.
pub fn decode_all(bytes: &[u8]) -> Result<Vec<Detection>> {
    if bytes.len() % RECORD_SIZE != 0 {
        return Err(Error::MalformedRecord {
            ordinal: (bytes.len() / RECORD_SIZE) as u64,
            reason: format!("truncated record ({} trailing bytes)", bytes.len() % RECORD_SIZE),
        });
    }
    Ok(bytes.chunks_exact(RECORD_SIZE).map(Detection::decode).collect())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Detection>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_all(&bytes)
}
