use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the unit sphere in equatorial Cartesian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitVec {
    /// Normalizes `(x, y, z)`; fails for the zero vector or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::validation(format!("cannot normalize ({x}, {y}, {z})")));
        }
        Ok(Self { x: x / n, y: y / n, z: z / n })
    }

    pub(crate) fn new_unchecked(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_radec(ra_deg: f64, dec_deg: f64) -> Result<Self> {
        validate_radec(ra_deg, dec_deg)?;
        Ok(Self::from_radec_unchecked(ra_deg, dec_deg))
    }

    pub(crate) fn from_radec_unchecked(ra_deg: f64, dec_deg: f64) -> Self {
        let (sr, cr) = ra_deg.to_radians().sin_cos();
        let (sd, cd) = dec_deg.to_radians().sin_cos();
        Self { x: cd * cr, y: cd * sr, z: sd }
    }

    /// Right ascension in [0, 360) and declination in [-90, 90], degrees.
    pub fn to_radec(self) -> (f64, f64) {
        let mut ra = self.y.atan2(self.x).to_degrees();
        if ra < 0.0 {
            ra += 360.0;
        }
        if ra >= 360.0 {
            ra -= 360.0;
        }
        let dec = self.z.atan2(self.x.hypot(self.y)).to_degrees();
        (ra, dec)
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    /// Great-circle angle in radians, in [0, π].
    pub fn angle_to(self, o: Self) -> f64 {
        let c = self.cross(o);
        let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        s.atan2(self.dot(o))
    }

    /// Squared Euclidean (chord) distance.
    pub fn chord2(self, o: Self) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }
}

impl fmt::Display for UnitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ra, dec) = self.to_radec();
        write!(f, "({ra:.6}°, {dec:+.6}°)")
    }
}

pub fn validate_radec(ra_deg: f64, dec_deg: f64) -> Result<()> {
    if !ra_deg.is_finite() {
        return Err(Error::validation(format!("ra must be finite (got {ra_deg})")));
    }
    if !(dec_deg.is_finite() && (-90.0..=90.0).contains(&dec_deg)) {
        return Err(Error::validation(format!(
            "dec must lie in [-90, 90] degrees (got {dec_deg})"
        )));
    }
    Ok(())
}

/// Great-circle separation in radians between two (ra, dec) positions in degrees.
pub fn angular_distance(p: (f64, f64), q: (f64, f64)) -> Result<f64> {
    Ok(UnitVec::from_radec(p.0, p.1)?.angle_to(UnitVec::from_radec(q.0, q.1)?))
}

/// Chord length corresponding to a great-circle angle.
pub fn chord_of_angle(theta: f64) -> f64 {
    2.0 * (0.5 * theta.clamp(0.0, std::f64::consts::PI)).sin()
}

/// `normal · p >= offset` selects one side of a plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: UnitVec,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: UnitVec, offset: f64) -> Result<Self> {
        if !(offset.is_finite() && (-1.0..=1.0).contains(&offset)) {
            return Err(Error::validation(format!(
                "halfspace offset must lie in [-1, 1] (got {offset})"
            )));
        }
        Ok(Self { normal, offset })
    }

    pub fn contains(&self, p: UnitVec) -> bool {
        self.normal.dot(p) >= self.offset
    }
}

/// A search region on the sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// All points within `radius` radians of `center`, inclusive.
    Cone { center: UnitVec, radius: f64 },
    /// Intersection of halfspaces.
    ConvexPolygon { halfspaces: Vec<Halfspace> },
}

impl Region {
    pub fn cone(center: UnitVec, radius: f64) -> Result<Self> {
        let r = Region::Cone { center, radius };
        r.validate()?;
        Ok(r)
    }

    pub fn cone_deg(ra: f64, dec: f64, radius_deg: f64) -> Result<Self> {
        Self::cone(UnitVec::from_radec(ra, dec)?, radius_deg.to_radians())
    }

    pub fn polygon(halfspaces: Vec<Halfspace>) -> Result<Self> {
        let r = Region::ConvexPolygon { halfspaces };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Cone { radius, .. } => {
                if !(radius.is_finite() && (0.0..=std::f64::consts::PI).contains(radius)) {
                    return Err(Error::validation(format!(
                        "cone radius must lie in [0, π] radians (got {radius})"
                    )));
                }
            }
            Region::ConvexPolygon { halfspaces } => {
                for h in halfspaces {
                    Halfspace::new(h.normal, h.offset)?;
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: UnitVec) -> bool {
        match self {
            Region::Cone { center, radius } => center.angle_to(p) <= *radius,
            Region::ConvexPolygon { halfspaces } => halfspaces.iter().all(|h| h.contains(p)),
        }
    }

    /// Declination interval (degrees) guaranteed to contain the region, used
    /// for zone pre-filtering. Polygons get the full range.
    pub fn dec_bounds(&self) -> (f64, f64) {
        match self {
            Region::Cone { center, radius } => {
                let (_, dec) = center.to_radec();
                let r = radius.to_degrees();
                ((dec - r).max(-90.0), (dec + r).min(90.0))
            }
            Region::ConvexPolygon { .. } => (-90.0, 90.0),
        }
    }

    /// Parses a polygon file: one `nx ny nz offset` halfspace per line,
    /// `#` starts a comment. Normals are normalized on read.
    pub fn parse_polygon(text: &str) -> Result<Self> {
        let mut halfspaces = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::validation(format!("polygon line {}: bad number", lineno + 1)))?;
            if nums.len() != 4 {
                return Err(Error::validation(format!(
                    "polygon line {}: expected `nx ny nz offset`, got {} fields",
                    lineno + 1,
                    nums.len()
                )));
            }
            halfspaces.push(Halfspace::new(UnitVec::new(nums[0], nums[1], nums[2])?, nums[3])?);
        }
        if halfspaces.is_empty() {
            return Err(Error::validation("polygon has no halfspaces"));
        }
        Region::polygon(halfspaces)
    }

    pub fn read_polygon_file(path: &Path) -> Result<Self> {
        Self::parse_polygon(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn basic_separations() {
        let d = angular_distance((0.0, 0.0), (90.0, 0.0)).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
        assert_eq!(angular_distance((12.3, -45.6), (12.3, -45.6)).unwrap(), 0.0);
        let d = angular_distance((0.0, 90.0), (0.0, -90.0)).unwrap();
        assert!((d - PI).abs() < 1e-15);
    }

    #[test]
    fn bad_declination() {
        assert!(angular_distance((0.0, 91.0), (0.0, 0.0)).is_err());
        assert!(angular_distance((0.0, 0.0), (0.0, f64::NAN)).is_err());
    }

    #[test]
    fn small_angles_are_stable() {
        let a = UnitVec::from_radec(10.0, 20.0).unwrap();
        let b = UnitVec::from_radec(10.0, 20.0 + 1e-3 / 3600.0).unwrap();
        let arcsec = a.angle_to(b).to_degrees() * 3600.0;
        assert!((arcsec - 1e-3).abs() < 1e-9, "{arcsec}");
    }

    #[test]
    fn radec_round_trip() {
        let (ra, dec) = UnitVec::from_radec(359.5, -89.0).unwrap().to_radec();
        assert!((ra - 359.5).abs() < 1e-9 && (dec + 89.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_file_parsing() {
        let r = Region::parse_polygon("# a wedge\n0 0 1 0.5\n1 0 0 0 # east\n").unwrap();
        assert!(r.contains(UnitVec::from_radec(0.0, 70.0).unwrap()));
        assert!(!r.contains(UnitVec::from_radec(180.0, 70.0).unwrap()));
        assert!(Region::parse_polygon("0 0 1 1.5").is_err());
        assert!(Region::parse_polygon("0 0 1").is_err());
        assert!(Region::parse_polygon("# nothing").is_err());
    }

    #[test]
    fn malformed_cones() {
        let c = UnitVec::from_radec(0.0, 0.0).unwrap();
        assert!(Region::cone(c, -0.1).is_err());
        assert!(Region::cone(c, 4.0).is_err());
        assert!(Region::cone(c, PI).is_ok());
    }

    fn radec() -> impl Strategy<Value = (f64, f64)> {
        (0.0..360.0f64, -90.0..=90.0f64)
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(p in radec(), q in radec(), r in radec()) {
            let pq = angular_distance(p, q).unwrap();
            let qp = angular_distance(q, p).unwrap();
            let qr = angular_distance(q, r).unwrap();
            let pr = angular_distance(p, r).unwrap();
            prop_assert_eq!(pq, qp);
            prop_assert!((0.0..=PI).contains(&pq));
            prop_assert!(pr <= pq + qr + 1e-12);
        }
    }
}
