//! Coordinate conversions between geodetic (WGS84), Earth-centered
//! Earth-fixed, and local east-north-up frames.
//!
//! All estimation runs in a local ENU frame anchored at a declared origin;
//! this module provides the frame anchoring and the conversions needed to
//! bring absolute receiver fixes into that frame. Angles are radians
//! internally; degrees appear only at I/O boundaries.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 inverse flattening.
pub const WGS84_INV_F: f64 = 298.257_223_563;
/// WGS84 first eccentricity squared, e² = f(2−f).
pub const WGS84_E2: f64 = 0.006_694_379_990_141_317;
/// WGS84 semi-minor axis in meters, b = a(1−f).
pub const WGS84_B: f64 = 6_356_752.314_245_179_5;

#[derive(Debug, Error, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} rad outside [-pi/2, pi/2]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} rad outside (-pi, pi]")]
    LongitudeOutOfRange(f64),
    #[error("non-finite coordinate component: {0}")]
    NonFinite(&'static str),
}

/// Geodetic position on the WGS84 ellipsoid. Latitude and longitude are in
/// radians, height in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub height: f64,
}

impl GeodeticPosition {
    /// Validating constructor: latitude in [−π/2, π/2], longitude in (−π, π].
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Result<Self, GeodesyError> {
        if !latitude.is_finite() || !longitude.is_finite() || !height.is_finite() {
            return Err(GeodesyError::NonFinite("geodetic position"));
        }
        if !(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&latitude) {
            return Err(GeodesyError::LatitudeOutOfRange(latitude));
        }
        if longitude <= -std::f64::consts::PI || longitude > std::f64::consts::PI {
            return Err(GeodesyError::LongitudeOutOfRange(longitude));
        }
        Ok(Self { latitude, longitude, height })
    }

    /// Constructor taking degrees, for config-file boundaries.
    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Result<Self, GeodesyError> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }
}

/// Position in a local east-north-up frame, meters relative to an [`EnuOrigin`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuPosition {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPosition {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.east, self.north, self.up)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self { east: v.x, north: v.y, up: v.z }
    }

    pub fn is_finite(&self) -> bool {
        self.east.is_finite() && self.north.is_finite() && self.up.is_finite()
    }
}

impl From<Vector3<f64>> for EnuPosition {
    fn from(v: Vector3<f64>) -> Self {
        Self::from_vector(v)
    }
}

impl From<EnuPosition> for Vector3<f64> {
    fn from(p: EnuPosition) -> Self {
        p.as_vector()
    }
}

impl std::ops::Sub for EnuPosition {
    type Output = Vector3<f64>;
    fn sub(self, rhs: Self) -> Vector3<f64> {
        self.as_vector() - rhs.as_vector()
    }
}

impl std::ops::Add<Vector3<f64>> for EnuPosition {
    type Output = EnuPosition;
    fn add(self, rhs: Vector3<f64>) -> EnuPosition {
        EnuPosition::from_vector(self.as_vector() + rhs)
    }
}

/// Local ENU frame anchor: the geodetic anchor point plus the precomputed
/// rotation taking ECEF deltas into ENU axes at that point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnuOrigin {
    anchor: GeodeticPosition,
    anchor_ecef: Vector3<f64>,
    /// Rows are the east, north, up unit vectors expressed in ECEF.
    ecef_to_enu: Matrix3<f64>,
}

impl EnuOrigin {
    pub fn new(anchor: GeodeticPosition) -> Self {
        let anchor_ecef = geodetic_to_ecef(anchor);
        let (sin_lat, cos_lat) = anchor.latitude.sin_cos();
        let (sin_lon, cos_lon) = anchor.longitude.sin_cos();
        let ecef_to_enu = Matrix3::new(
            -sin_lon,
            cos_lon,
            0.0,
            -sin_lat * cos_lon,
            -sin_lat * sin_lon,
            cos_lat,
            cos_lat * cos_lon,
            cos_lat * sin_lon,
            sin_lat,
        );
        Self { anchor, anchor_ecef, ecef_to_enu }
    }

    /// Anchor a session frame at the first valid absolute fix of a stream,
    /// the default when no origin is configured.
    pub fn from_first_fix<I>(fixes: I) -> Option<Self>
    where
        I: IntoIterator<Item = GeodeticPosition>,
    {
        fixes.into_iter().next().map(Self::new)
    }

    pub fn anchor(&self) -> GeodeticPosition {
        self.anchor
    }

    pub fn anchor_ecef(&self) -> Vector3<f64> {
        self.anchor_ecef
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.ecef_to_enu
    }
}

/// Closed-form WGS84 geodetic to ECEF conversion, meters.
pub fn geodetic_to_ecef(p: GeodeticPosition) -> Vector3<f64> {
    let (sin_lat, cos_lat) = p.latitude.sin_cos();
    let (sin_lon, cos_lon) = p.longitude.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + p.height) * cos_lat * cos_lon,
        (n + p.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + p.height) * sin_lat,
    )
}

/// ECEF to WGS84 geodetic by fixed-point iteration on the latitude.
/// Converges well below 1e-6 m for |lat| ≤ 89°.
pub fn ecef_to_geodetic(ecef: Vector3<f64>) -> GeodeticPosition {
    let longitude = ecef.y.atan2(ecef.x);
    let p = (ecef.x * ecef.x + ecef.y * ecef.y).sqrt();
    let mut latitude = ecef.z.atan2(p * (1.0 - WGS84_E2));
    let mut height = 0.0;
    for _ in 0..8 {
        let sin_lat = latitude.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        height = p / latitude.cos() - n;
        latitude = (ecef.z / p / (1.0 - WGS84_E2 * n / (n + height))).atan();
    }
    GeodeticPosition { latitude, longitude, height }
}

/// Express an ECEF point in the local ENU frame (rigid transform).
pub fn ecef_to_enu(ecef: Vector3<f64>, origin: &EnuOrigin) -> EnuPosition {
    EnuPosition::from_vector(origin.ecef_to_enu * (ecef - origin.anchor_ecef))
}

/// Inverse of [`ecef_to_enu`].
pub fn enu_to_ecef(p: EnuPosition, origin: &EnuOrigin) -> Vector3<f64> {
    origin.anchor_ecef + origin.ecef_to_enu.transpose() * p.as_vector()
}
