//! Decimal size/rate parsing and angle suffixes.
//!
//! All byte multiples are decimal: `1TB = 1e12` bytes. Rates may carry a
//! trailing `/s`. Bit rates use `bit` or `b` suffixes (`155Mbit/s`).
//! Angles take an explicit unit suffix: `d` (degrees), `m` (arcminutes)
//! or `s` (arcseconds).

use crate::error::{Error, Result};

pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;
pub const GB: f64 = 1e9;
pub const TB: f64 = 1e12;
pub const PB: f64 = 1e15;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const SECONDS_PER_HOUR: f64 = 3_600.0;

pub const ARCSEC_PER_RADIAN: f64 = 206_264.806_247_096_36;

pub fn arcsec_to_rad(arcsec: f64) -> f64 {
    arcsec / ARCSEC_PER_RADIAN
}

pub fn rad_to_arcsec(rad: f64) -> f64 {
    rad * ARCSEC_PER_RADIAN
}

fn split_number(s: &str) -> Result<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    // "5e" would swallow the unit of e.g. "5EB"; back off trailing exponent markers
    let mut end = end;
    while end > 0 && matches!(s.as_bytes()[end - 1], b'e' | b'E') {
        end -= 1;
    }
    let value: f64 = s[..end]
        .parse()
        .map_err(|_| Error::validation(format!("cannot parse number in {s:?}")))?;
    Ok((value, s[end..].trim()))
}

fn byte_multiplier(unit: &str) -> Option<f64> {
    Some(match unit.to_ascii_uppercase().as_str() {
        "" | "B" => 1.0,
        "KB" | "K" => KB,
        "MB" | "M" => MB,
        "GB" | "G" => GB,
        "TB" | "T" => TB,
        "PB" | "P" => PB,
        _ => return None,
    })
}

/// Parses a byte size such as `120TB`, `64`, `4.5GB`.
pub fn parse_bytes(s: &str) -> Result<f64> {
    let (v, unit) = split_number(s)?;
    let m = byte_multiplier(unit)
        .ok_or_else(|| Error::validation(format!("unknown size unit {unit:?} in {s:?}")))?;
    Ok(v * m)
}

/// Parses a byte rate such as `150MB/s` into bytes/second.
pub fn parse_byte_rate(s: &str) -> Result<f64> {
    let t = s.trim();
    let t = t.strip_suffix("/s").unwrap_or(t);
    parse_bytes(t)
}

/// Parses a bit rate such as `155Mbit/s` or `10Gb/s` into bits/second.
pub fn parse_bit_rate(s: &str) -> Result<f64> {
    let t = s.trim();
    let t = t.strip_suffix("/s").unwrap_or(t);
    let (v, unit) = split_number(t)?;
    let lower = unit.to_ascii_lowercase();
    let prefix = lower
        .strip_suffix("bit")
        .or_else(|| lower.strip_suffix("bps"))
        .or_else(|| lower.strip_suffix('b'))
        .unwrap_or(&lower);
    let m = match prefix {
        "" => 1.0,
        "k" => 1e3,
        "m" => 1e6,
        "g" => 1e9,
        "t" => 1e12,
        _ => return Err(Error::validation(format!("unknown bit-rate unit in {s:?}"))),
    };
    Ok(v * m)
}

/// Parses an angle with a mandatory unit suffix and returns degrees.
pub fn parse_angle_deg(s: &str) -> Result<f64> {
    let (v, unit) = split_number(s)?;
    match unit {
        "d" | "deg" => Ok(v),
        "m" | "arcmin" => Ok(v / 60.0),
        "s" | "arcsec" => Ok(v / 3600.0),
        "" => Err(Error::validation(format!(
            "angle {s:?} needs a unit suffix (d, m or s)"
        ))),
        _ => Err(Error::validation(format!("unknown angle unit in {s:?}"))),
    }
}

pub fn parse_angle_arcsec(s: &str) -> Result<f64> {
    parse_angle_deg(s).map(|d| d * 3600.0)
}

/// Formats a byte count with the largest decimal unit that keeps the value ≥ 1.
pub fn format_bytes(bytes: f64) -> String {
    let units = [(PB, "PB"), (TB, "TB"), (GB, "GB"), (MB, "MB"), (KB, "KB")];
    for (m, name) in units {
        if bytes.abs() >= m {
            return format!("{:.3} {name}", bytes / m);
        }
    }
    format!("{bytes:.0} B")
}

pub fn format_duration(seconds: f64) -> String {
    if seconds >= SECONDS_PER_DAY {
        format!("{:.2} d", seconds / SECONDS_PER_DAY)
    } else if seconds >= SECONDS_PER_HOUR {
        format!("{:.2} h", seconds / SECONDS_PER_HOUR)
    } else if seconds >= 60.0 {
        format!("{:.2} min", seconds / 60.0)
    } else {
        format!("{seconds:.2} s")
    }
}
