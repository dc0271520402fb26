//! Local tangent-plane hexagonal grid.
//!
//! Points are projected onto an equirectangular plane centred on the grid
//! origin and binned into pointy-top hexagons addressed by axial `(q, r)`
//! coordinates. The plane uses x = east and y = north, so vertex rings
//! produced here are counter-clockwise on a map.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters used for every spherical computation.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Default hexagon edge length in meters (roughly H3 resolution 9).
pub const DEFAULT_EDGE_LEN_M: f64 = 200.0;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Axial neighbor offsets, counter-clockwise starting east.
pub const NEIGHBOR_OFFSETS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates latitude and normalizes longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::Argument(format!(
                "non-finite coordinate ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Argument(format!("latitude {lat} out of range")));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }
}

pub(crate) fn normalize_lon(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        lon
    } else {
        (lon + 180.0).rem_euclid(360.0) - 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarXY {
    pub x: f64,
    pub y: f64,
}

impl PlanarXY {
    pub fn dist(&self, other: &PlanarXY) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub origin: GeoPoint,
    pub edge_len_m: f64,
    pub earth_radius_m: f64,
}

impl GridConfig {
    pub fn new(origin: GeoPoint, edge_len_m: f64) -> Result<Self> {
        if !(edge_len_m.is_finite() && edge_len_m > 0.0) {
            return Err(Error::Config(format!(
                "edge_len_m must be > 0, got {edge_len_m}"
            )));
        }
        Ok(Self {
            origin,
            edge_len_m,
            earth_radius_m: EARTH_RADIUS_M,
        })
    }

    /// Same origin, edge length scaled by `factor`. Used for parent areas.
    pub fn coarsened(&self, factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Argument("coarse factor must be >= 1".into()));
        }
        Self::new(self.origin, self.edge_len_m * f64::from(factor))
    }
}

/// Tile identity in axial coordinates. Serialized as `"q:r"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HexCellId {
    pub q: i64,
    pub r: i64,
}

impl HexCellId {
    pub const fn new(q: i64, r: i64) -> Self {
        Self { q, r }
    }

    pub fn distance(&self, other: &HexCellId) -> i64 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    }
}

impl fmt::Display for HexCellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.q, self.r)
    }
}

impl FromStr for HexCellId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("malformed hex id {s:?}, expected \"q:r\""));
        let (q, r) = s.trim().split_once(':').ok_or_else(bad)?;
        Ok(Self {
            q: q.parse().map_err(|_| bad())?,
            r: r.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for HexCellId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HexCellId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn project(cfg: &GridConfig, p: &GeoPoint) -> PlanarXY {
    let phi0 = cfg.origin.lat.to_radians();
    let dlon = normalize_lon(p.lon - cfg.origin.lon).to_radians();
    let dlat = (p.lat - cfg.origin.lat).to_radians();
    PlanarXY {
        x: cfg.earth_radius_m * dlon * phi0.cos(),
        y: cfg.earth_radius_m * dlat,
    }
}

pub fn unproject(cfg: &GridConfig, xy: &PlanarXY) -> GeoPoint {
    let phi0 = cfg.origin.lat.to_radians();
    let lat = cfg.origin.lat + (xy.y / cfg.earth_radius_m).to_degrees();
    let lon = cfg.origin.lon + (xy.x / (cfg.earth_radius_m * phi0.cos())).to_degrees();
    GeoPoint {
        lat,
        lon: normalize_lon(lon),
    }
}

/// Planar center of a hexagon.
pub fn axial_to_planar(cfg: &GridConfig, c: HexCellId) -> PlanarXY {
    let s = cfg.edge_len_m;
    let (q, r) = (c.q as f64, c.r as f64);
    PlanarXY {
        x: s * SQRT_3 * (q + r / 2.0),
        y: s * 1.5 * r,
    }
}

/// Hexagon containing a planar point, via cube rounding.
pub fn planar_to_axial(cfg: &GridConfig, xy: &PlanarXY) -> HexCellId {
    let s = cfg.edge_len_m;
    let q = (SQRT_3 / 3.0 * xy.x - xy.y / 3.0) / s;
    let r = (2.0 / 3.0 * xy.y) / s;
    cube_round(q, r)
}

fn cube_round(fq: f64, fr: f64) -> HexCellId {
    let fs = -fq - fr;
    let (mut q, mut r, s) = (fq.round(), fr.round(), fs.round());
    let (dq, dr, ds) = ((q - fq).abs(), (r - fr).abs(), (s - fs).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    HexCellId::new(q as i64, r as i64)
}

pub fn point_to_cell(cfg: &GridConfig, p: &GeoPoint) -> HexCellId {
    planar_to_axial(cfg, &project(cfg, p))
}

pub fn cell_centroid(cfg: &GridConfig, c: HexCellId) -> GeoPoint {
    unproject(cfg, &axial_to_planar(cfg, c))
}

pub fn neighbors(c: HexCellId) -> [HexCellId; 6] {
    NEIGHBOR_OFFSETS.map(|(dq, dr)| HexCellId::new(c.q + dq, c.r + dr))
}

/// All cells within hex distance `k` of `c`, sorted by `(q, r)`.
pub fn k_ring(c: HexCellId, k: i64) -> Result<Vec<HexCellId>> {
    if k < 0 {
        return Err(Error::Argument(format!(
            "k_ring radius must be >= 0, got {k}"
        )));
    }
    let mut out = Vec::with_capacity((1 + 3 * k * (k + 1)) as usize);
    for dq in -k..=k {
        let lo = (-k).max(-dq - k);
        let hi = k.min(-dq + k);
        for dr in lo..=hi {
            out.push(HexCellId::new(c.q + dq, c.r + dr));
        }
    }
    Ok(out)
}

/// Planar vertices of a cell, counter-clockwise from the east-north-east corner.
pub fn cell_boundary_planar(cfg: &GridConfig, c: HexCellId) -> [PlanarXY; 6] {
    let center = axial_to_planar(cfg, c);
    std::array::from_fn(|i| {
        let angle = (30.0 + 60.0 * i as f64).to_radians();
        PlanarXY {
            x: center.x + cfg.edge_len_m * angle.cos(),
            y: center.y + cfg.edge_len_m * angle.sin(),
        }
    })
}

/// Geographic vertices of a cell. Exported rings repeat the first vertex.
pub fn cell_boundary(cfg: &GridConfig, c: HexCellId) -> [GeoPoint; 6] {
    cell_boundary_planar(cfg, c).map(|v| unproject(cfg, &v))
}

/// Every cell whose planar centroid lies within `radius_m` of the origin.
pub fn cells_in_disc(cfg: &GridConfig, radius_m: f64) -> Vec<HexCellId> {
    // A ring-k cell center is at least k * 1.5 * edge from the origin.
    let k = (radius_m / (1.5 * cfg.edge_len_m)).ceil() as i64 + 1;
    let origin = PlanarXY::default();
    k_ring(HexCellId::new(0, 0), k.max(0))
        .expect("k is non-negative")
        .into_iter()
        .filter(|&c| axial_to_planar(cfg, c).dist(&origin) <= radius_m)
        .collect()
}

/// Every cell whose centroid falls inside the planar bounding box of the given
/// cells' centroids, expanded by one cell width on each side.
pub fn fill_bounding_box(cfg: &GridConfig, cells: &[HexCellId]) -> Vec<HexCellId> {
    if cells.is_empty() {
        return Vec::new();
    }
    let pad = SQRT_3 * cfg.edge_len_m;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &c in cells {
        let p = axial_to_planar(cfg, c);
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (x0, y0, x1, y1) = (x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    let s = cfg.edge_len_m;
    let r_lo = (y0 / (1.5 * s)).floor() as i64;
    let r_hi = (y1 / (1.5 * s)).ceil() as i64;
    let mut out = Vec::new();
    for r in r_lo..=r_hi {
        let q_lo = (x0 / (SQRT_3 * s) - r as f64 / 2.0).floor() as i64;
        let q_hi = (x1 / (SQRT_3 * s) - r as f64 / 2.0).ceil() as i64;
        for q in q_lo..=q_hi {
            let c = HexCellId::new(q, r);
            let p = axial_to_planar(cfg, c);
            if p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1 {
                out.push(c);
            }
        }
    }
    out.sort();
    out
}
