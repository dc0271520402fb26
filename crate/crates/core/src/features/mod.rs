//! Per-tile feature engineering.
//!
//! Measurements joined to their serving cells are grouped by tile and
//! reduced to a [`TileFeatures`] record. Labels are computed separately so a
//! tile can be labeled while its measurement-derived inputs stay hidden from
//! the model (held-out and unmeasured tiles).

mod geodesy;
mod preprocess;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use geodesy::{bearing_deg, distance_m, Bearing};
pub use preprocess::{
    check_schema, ColumnKind, ColumnSpec, FeatureMatrix, MinMax, Preprocessor, DEFAULT_TOP_BRANDS,
    UNKNOWN,
};

use crate::hexgrid::{cell_centroid, point_to_cell, GridConfig, HexCellId};
use crate::ingest::{Measurement, RadioCell, Rat, TileAttributes};

/// RSRP coverage classes. Cut points are -120, -105 and -90 dBm; each cut
/// point belongs to the better class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoverageClass {
    VeryWeak = 0,
    Weak = 1,
    Average = 2,
    Good = 3,
}

impl CoverageClass {
    pub const ALL: [CoverageClass; 4] = [
        CoverageClass::VeryWeak,
        CoverageClass::Weak,
        CoverageClass::Average,
        CoverageClass::Good,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CoverageClass::VeryWeak => "very_weak",
            CoverageClass::Weak => "weak",
            CoverageClass::Average => "average",
            CoverageClass::Good => "good",
        }
    }
}

pub fn classify_rsrp(rsrp_dbm: f64) -> CoverageClass {
    if rsrp_dbm < -120.0 {
        CoverageClass::VeryWeak
    } else if rsrp_dbm < -105.0 {
        CoverageClass::Weak
    } else if rsrp_dbm < -90.0 {
        CoverageClass::Average
    } else {
        CoverageClass::Good
    }
}

/// Summary of the measurements visible for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStats {
    pub count: usize,
    pub rsrp_mean: f64,
    pub rsrp_min: f64,
    pub rsrp_max: f64,
    pub rsrq_mean: Option<f64>,
    pub rssi_mean: Option<f64>,
    pub sinr_mean: Option<f64>,
    pub distance_mean_m: f64,
    pub bearing_sin_mean: f64,
    pub bearing_cos_mean: f64,
    pub brand_counts: BTreeMap<String, usize>,
}

/// Configuration of the cell a tile is associated with.
#[derive(Debug, Clone, PartialEq)]
pub struct CellContext {
    pub global_cell_id: String,
    pub rat: Rat,
    pub channel_bandwidth_mhz: f64,
    pub earfcn_dl: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileFeatures {
    pub hex_id: HexCellId,
    /// `None` when the tile has no visible measurements.
    pub stats: Option<MeasurementStats>,
    /// Majority serving cell of the visible measurements, else the nearest cell.
    pub cell: Option<CellContext>,
    /// Distance and bearing from the nearest cell to the tile centroid.
    pub nearest_cell_distance_m: Option<f64>,
    pub nearest_cell_bearing: Option<Bearing>,
    pub terrain_type: Option<String>,
    pub functional_area: Option<String>,
}

impl TileFeatures {
    pub fn has_measurements(&self) -> bool {
        self.stats.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileLabel {
    pub rsrp_mean: f64,
    pub rsrq_mean: Option<f64>,
    pub class: CoverageClass,
}

pub type Observation<'a> = (&'a Measurement, &'a RadioCell);

/// Buckets joined measurements by the tile containing the measurement point.
pub fn group_by_tile<'a>(
    cfg: &GridConfig,
    obs: &[Observation<'a>],
) -> BTreeMap<HexCellId, Vec<Observation<'a>>> {
    let mut out: BTreeMap<HexCellId, Vec<Observation<'a>>> = BTreeMap::new();
    for &(m, c) in obs {
        out.entry(point_to_cell(cfg, &m.location))
            .or_default()
            .push((m, c));
    }
    out
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn measurement_stats(obs: &[Observation<'_>]) -> Option<MeasurementStats> {
    if obs.is_empty() {
        return None;
    }
    let n = obs.len() as f64;
    let mut rsrp_sum = 0.0;
    let (mut rsrp_min, mut rsrp_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut dist_sum, mut sin_sum, mut cos_sum) = (0.0, 0.0, 0.0);
    let mut brand_counts = BTreeMap::new();
    for (m, c) in obs {
        rsrp_sum += m.rsrp_dbm;
        rsrp_min = rsrp_min.min(m.rsrp_dbm);
        rsrp_max = rsrp_max.max(m.rsrp_dbm);
        dist_sum += distance_m(&c.location, &m.location);
        let (s, co) = bearing_deg(&c.location, &m.location).sin_cos();
        sin_sum += s;
        cos_sum += co;
        if let Some(b) = &m.device_brand {
            *brand_counts.entry(b.clone()).or_insert(0) += 1;
        }
    }
    Some(MeasurementStats {
        count: obs.len(),
        rsrp_mean: rsrp_sum / n,
        rsrp_min,
        rsrp_max,
        rsrq_mean: mean_of(obs.iter().map(|(m, _)| m.rsrq_db)),
        rssi_mean: mean_of(obs.iter().map(|(m, _)| m.rssi_dbm)),
        sinr_mean: mean_of(obs.iter().map(|(m, _)| m.sinr_db)),
        distance_mean_m: dist_sum / n,
        bearing_sin_mean: sin_sum / n,
        bearing_cos_mean: cos_sum / n,
        brand_counts,
    })
}

/// Regression and classification targets for a tile; `None` without measurements.
pub fn tile_label(obs: &[Observation<'_>]) -> Option<TileLabel> {
    if obs.is_empty() {
        return None;
    }
    let rsrp_mean = obs.iter().map(|(m, _)| m.rsrp_dbm).sum::<f64>() / obs.len() as f64;
    Some(TileLabel {
        rsrp_mean,
        rsrq_mean: mean_of(obs.iter().map(|(m, _)| m.rsrq_db)),
        class: classify_rsrp(rsrp_mean),
    })
}

fn context_of(c: &RadioCell) -> CellContext {
    CellContext {
        global_cell_id: c.global_cell_id.clone(),
        rat: c.rat,
        channel_bandwidth_mhz: c.channel_bandwidth_mhz,
        earfcn_dl: c.earfcn_dl,
    }
}

fn majority_cell<'a>(obs: &[Observation<'a>]) -> Option<&'a RadioCell> {
    let mut counts: BTreeMap<&str, (usize, &RadioCell)> = BTreeMap::new();
    for (_, c) in obs {
        counts.entry(c.global_cell_id.as_str()).or_insert((0, c)).0 += 1;
    }
    // Ids iterate in ascending order; ties keep the earlier id.
    counts
        .into_values()
        .fold(
            None,
            |best: Option<(usize, &RadioCell)>, (n, c)| match best {
                Some((bn, _)) if bn >= n => best,
                _ => Some((n, c)),
            },
        )
        .map(|(_, c)| c)
}

/// Builds the feature record for one tile from its visible observations.
///
/// Pass an empty slice for tiles whose measurements must stay hidden.
pub fn aggregate_tile(
    cfg: &GridConfig,
    hex_id: HexCellId,
    visible: &[Observation<'_>],
    cells: &[RadioCell],
    attrs: &HashMap<HexCellId, TileAttributes>,
) -> TileFeatures {
    let centroid = cell_centroid(cfg, hex_id);
    let nearest = cells
        .iter()
        .map(|c| (distance_m(&c.location, &centroid), c))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| a.1.global_cell_id.cmp(&b.1.global_cell_id))
        });
    let cell = majority_cell(visible)
        .or(nearest.map(|(_, c)| c))
        .map(context_of);
    let attr = attrs.get(&hex_id);
    TileFeatures {
        hex_id,
        stats: measurement_stats(visible),
        cell,
        nearest_cell_distance_m: nearest.map(|(d, _)| d),
        nearest_cell_bearing: nearest.map(|(_, c)| bearing_deg(&c.location, &centroid)),
        terrain_type: attr.map(|a| a.terrain_type.clone()),
        functional_area: attr.map(|a| a.functional_area.clone()),
    }
}
