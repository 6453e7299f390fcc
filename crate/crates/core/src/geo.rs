//! Geographic primitives and great-circle distance on a spherical Earth.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// IUGG mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A location in degrees. Longitude is kept in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Validates the latitude and normalizes the longitude.
    pub fn new(lat: f64, lon: f64) -> Result<Self, Error> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidArgument(format!(
                "latitude {lat} outside [-90, 90]"
            )));
        }
        if !lon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "longitude {lon} is not finite"
            )));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Maps any finite longitude into `[-180, 180)`; `180.0` becomes `-180.0`.
pub fn normalize_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360.0
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Geographic rectangle in degrees. Boxes crossing the antimeridian are not
/// supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub north: f64,
    pub west: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn new(south: f64, north: f64, west: f64, east: f64) -> Result<Self, Error> {
        let all_finite = [south, north, west, east].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument(
                "bounding box values must be finite".into(),
            ));
        }
        if !(-90.0..=90.0).contains(&south) || !(-90.0..=90.0).contains(&north) {
            return Err(Error::InvalidArgument(format!(
                "bounding box latitudes {south},{north} outside [-90, 90]"
            )));
        }
        if !(-180.0..=180.0).contains(&west) || !(-180.0..=180.0).contains(&east) {
            return Err(Error::InvalidArgument(format!(
                "bounding box longitudes {west},{east} outside [-180, 180]"
            )));
        }
        if south >= north {
            return Err(Error::InvalidArgument(format!(
                "bounding box south {south} must be below north {north}"
            )));
        }
        if west >= east {
            return Err(Error::InvalidArgument(format!(
                "bounding box west {west} must be below east {east}"
            )));
        }
        Ok(Self {
            south,
            north,
            west,
            east,
        })
    }

    /// Whole-globe box.
    pub fn world() -> Self {
        Self {
            south: -90.0,
            north: 90.0,
            west: -180.0,
            east: 180.0,
        }
    }

    /// Closed-interval containment test.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.south..=self.north).contains(&p.lat()) && (self.west..=self.east).contains(&p.lon())
    }

    /// Exact area of the box on the sphere, km².
    pub fn spherical_area_km2(&self) -> f64 {
        let dlon = (self.east - self.west).to_radians();
        EARTH_RADIUS_KM
            * EARTH_RADIUS_KM
            * dlon
            * (self.north.to_radians().sin() - self.south.to_radians().sin())
    }
}

/// `sin²(Δ/2)` for an angular difference given in degrees.
///
/// Depends only on `|Δ|`, so the result is the same for either argument order.
#[inline]
pub(crate) fn haversine_term(delta_deg: f64) -> f64 {
    let s = (delta_deg.abs().to_radians() * 0.5).sin();
    s * s
}

/// Longitude difference wrapped into `[-180, 180]`.
#[inline]
pub(crate) fn lon_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d > 180.0 {
        d - 360.0
    } else if d < -180.0 {
        d + 360.0
    } else {
        d
    }
}

/// The haversine `a = sin²(Δφ/2) + cos φ₁ cos φ₂ sin²(Δλ/2)`.
#[inline]
pub(crate) fn haversine_a(lat_term: f64, cos_product: f64, lon_term: f64) -> f64 {
    lat_term + cos_product * lon_term
}

/// Distance in km for a haversine `a`.
///
/// Both density paths build their distances through these helpers so that
/// identical inputs give identical bits.
#[inline]
pub(crate) fn distance_from_a(a: f64) -> f64 {
    2.0 * EARTH_RADIUS_KM * a.clamp(0.0, 1.0).sqrt().asin()
}

/// Great-circle distance in kilometres (haversine formula).
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_term = haversine_term(a.lat - b.lat);
    let lon_term = haversine_term(lon_delta(a.lon, b.lon));
    let cos_product = a.lat.to_radians().cos() * b.lat.to_radians().cos();
    distance_from_a(haversine_a(lat_term, cos_product, lon_term))
}
