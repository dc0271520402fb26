//! Great-circle distance and initial bearing on a spherical Earth.

use crate::hexgrid::{GeoPoint, EARTH_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    /// Degrees clockwise from north, in `[0, 360)`.
    pub deg: f64,
    /// Set when the two points coincide; `deg` is then 0.
    pub degenerate: bool,
}

impl Bearing {
    pub fn sin_cos(&self) -> (f64, f64) {
        if self.degenerate {
            return (0.0, 0.0);
        }
        self.deg.to_radians().sin_cos()
    }
}

/// Initial bearing of the great circle from `from` towards `to`.
pub fn bearing_deg(from: &GeoPoint, to: &GeoPoint) -> Bearing {
    if from == to {
        return Bearing {
            deg: 0.0,
            degenerate: true,
        };
    }
    let (phi1, phi2) = (from.lat.to_radians(), to.lat.to_radians());
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    let mut deg = y.atan2(x).to_degrees().rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if deg >= 360.0 {
        deg = 0.0;
    }
    Bearing {
        deg,
        degenerate: false,
    }
}

/// Haversine distance in meters.
pub fn distance_m(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}
