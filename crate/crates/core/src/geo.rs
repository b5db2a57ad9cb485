//! Coordinate helpers: the handful of CRS conversions the pipeline needs and
//! even-odd point-in-polygon tests on lon/lat rings.

use crate::{Error, Result};

pub const EPSG_WGS84: u32 = 4326;
pub const EPSG_WEB_MERCATOR: u32 = 3857;

/// Spherical radius used by EPSG:3857.
const MERCATOR_RADIUS: f64 = 6_378_137.0;
/// Mean Earth radius (IUGG) for spherical area of lon/lat cells.
const MEAN_EARTH_RADIUS: f64 = 6_371_008.8;

const GEOGRAPHIC_CODES: &[u32] = &[4326, 4258, 4269, 4283, 4674, 4612, 4490, 4019, 4030];

pub fn is_geographic(crs: u32) -> bool {
    GEOGRAPHIC_CODES.contains(&crs)
}

/// Converts CRS coordinates to (lon, lat) degrees.
pub fn to_lon_lat(crs: u32, x: f64, y: f64) -> Result<(f64, f64)> {
    match crs {
        c if is_geographic(c) => Ok((x, y)),
        EPSG_WEB_MERCATOR => {
            let lon = (x / MERCATOR_RADIUS).to_degrees();
            let lat = (2.0 * (y / MERCATOR_RADIUS).exp().atan() - std::f64::consts::FRAC_PI_2)
                .to_degrees();
            Ok((lon, lat))
        }
        other => Err(Error::UnsupportedCrs(other)),
    }
}

/// Converts (lon, lat) degrees to CRS coordinates.
pub fn from_lon_lat(crs: u32, lon: f64, lat: f64) -> Result<(f64, f64)> {
    match crs {
        c if is_geographic(c) => Ok((lon, lat)),
        EPSG_WEB_MERCATOR => {
            let x = lon.to_radians() * MERCATOR_RADIUS;
            let y = (std::f64::consts::FRAC_PI_4 + lat.to_radians() / 2.0)
                .tan()
                .ln()
                * MERCATOR_RADIUS;
            Ok((x, y))
        }
        other => Err(Error::UnsupportedCrs(other)),
    }
}

/// Area in hectares of the lon/lat cell `[lon0, lon1] x [lat0, lat1]` on a sphere.
pub fn spherical_cell_area_ha(lon0: f64, lon1: f64, lat0: f64, lat1: f64) -> f64 {
    let lat0 = lat0.clamp(-90.0, 90.0).to_radians();
    let lat1 = lat1.clamp(-90.0, 90.0).to_radians();
    let dlon = (lon1 - lon0).abs().to_radians();
    MEAN_EARTH_RADIUS * MEAN_EARTH_RADIUS * dlon * (lat1.sin() - lat0.sin()).abs() / 10_000.0
}

/// A polygon as one or more closed lon/lat rings (holes are just more rings
/// under the even-odd rule). The closing vertex may be omitted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub rings: Vec<Vec<(f64, f64)>>,
}

impl Polygon {
    pub fn new(ring: Vec<(f64, f64)>) -> Self {
        Self { rings: vec![ring] }
    }

    /// Axis-aligned rectangle.
    pub fn rect(lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> Self {
        Self::new(vec![(lon0, lat0), (lon1, lat0), (lon1, lat1), (lon0, lat1)])
    }

    /// Even-odd containment across all rings.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            let mut j = n - 1;
            for i in 0..n {
                let (xi, yi) = ring[i];
                let (xj, yj) = ring[j];
                if (yi > lat) != (yj > lat) {
                    let x_cross = xi + (lat - yi) * (xj - xi) / (yj - yi);
                    if lon < x_cross {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }

    pub fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.rings.iter().flatten();
        let &(x, y) = it.next()?;
        Some(it.fold((x, y, x, y), |(a, b, c, d), &(x, y)| {
            (a.min(x), b.min(y), c.max(x), d.max(y))
        }))
    }

    /// Parses `lon lat; lon lat; ...` (one ring).
    pub fn parse_ring(text: &str) -> Result<Self> {
        let mut ring = Vec::new();
        for pair in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let mut it = pair.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(lon)), Some(Ok(lat)), None) => ring.push((lon, lat)),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "bad polygon vertex {pair:?}, expected \"lon lat\""
                    )))
                }
            }
        }
        if ring.len() < 3 {
            return Err(Error::InvalidArgument(
                "polygon ring needs at least 3 vertices".into(),
            ));
        }
        Ok(Self::new(ring))
    }

    pub fn format_ring(&self) -> String {
        self.rings
            .first()
            .map(|r| {
                r.iter()
                    .map(|(x, y)| format!("{x} {y}"))
                    .collect::<Vec<_>>()
                    .join("; ")
            })
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mercator_round_trip() {
        for &(lon, lat) in &[(0.0, 0.0), (38.5, 9.1), (-120.0, -45.0), (179.0, 80.0)] {
            let (x, y) = from_lon_lat(EPSG_WEB_MERCATOR, lon, lat).unwrap();
            let (lo, la) = to_lon_lat(EPSG_WEB_MERCATOR, x, y).unwrap();
            assert!((lo - lon).abs() < 1e-9 && (la - lat).abs() < 1e-9);
        }
        assert!(to_lon_lat(32637, 0.0, 0.0).is_err());
    }

    #[test]
    fn even_odd_with_hole() {
        let mut p = Polygon::rect(0.0, 0.0, 10.0, 10.0);
        p.rings
            .push(vec![(4.0, 4.0), (6.0, 4.0), (6.0, 6.0), (4.0, 6.0)]);
        assert!(p.contains(1.0, 1.0));
        assert!(!p.contains(5.0, 5.0));
        assert!(!p.contains(11.0, 5.0));
    }

    #[test]
    fn sphere_area_sums_to_globe() {
        let total = spherical_cell_area_ha(-180.0, 180.0, -90.0, 90.0);
        let expected = 4.0 * std::f64::consts::PI * MEAN_EARTH_RADIUS.powi(2) / 1e4;
        assert!((total - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn ring_text_round_trip() {
        let p = Polygon::parse_ring("1 2; 3 2; 3 4.5").unwrap();
        assert_eq!(Polygon::parse_ring(&p.format_ring()).unwrap(), p);
        assert!(Polygon::parse_ring("1 2; 3").is_err());
    }
}
