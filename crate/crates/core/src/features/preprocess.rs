//! Min-max scaling, one-hot encoding and the frozen feature schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::TileFeatures;
use crate::error::{Error, Result};
use crate::hexgrid::HexCellId;
use crate::nn::Matrix;

pub const DEFAULT_TOP_BRANDS: usize = 5;

/// Bucket for tiles without an attribute row.
pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Min-max scaled continuous value; 0 when missing.
    Continuous,
    /// 0/1 presence flag for a group of optional values.
    Indicator,
    OneHot,
    /// Fraction in `[0, 1]`, not rescaled.
    Share,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if min > max {
            // no observations
            return Self { min: 0.0, max: 0.0 };
        }
        Self { min, max }
    }

    /// Scales into `[0, 1]`, clamping out-of-range inputs. Constant columns map to 0.
    pub fn scale(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.0;
        }
        ((x - self.min) / span).clamp(0.0, 1.0)
    }
}

const CONTINUOUS: [&str; 16] = [
    "rsrp_mean_dbm",
    "rsrp_min_dbm",
    "rsrp_max_dbm",
    "rsrq_mean_db",
    "rssi_mean_dbm",
    "sinr_mean_db",
    "meas_distance_mean_m",
    "meas_bearing_sin",
    "meas_bearing_cos",
    "meas_count",
    "cell_bandwidth_mhz",
    "cell_earfcn_dl",
    "nearest_cell_distance_m",
    "nearest_cell_log10_distance",
    "nearest_cell_bearing_sin",
    "nearest_cell_bearing_cos",
];

const INDICATORS: [&str; 4] = ["has_measurements", "has_rsrq", "has_rssi", "has_sinr"];

fn continuous_values(t: &TileFeatures) -> [Option<f64>; CONTINUOUS.len()] {
    let s = t.stats.as_ref();
    let bearing = t.nearest_cell_bearing.map(|b| b.sin_cos());
    [
        s.map(|s| s.rsrp_mean),
        s.map(|s| s.rsrp_min),
        s.map(|s| s.rsrp_max),
        s.and_then(|s| s.rsrq_mean),
        s.and_then(|s| s.rssi_mean),
        s.and_then(|s| s.sinr_mean),
        s.map(|s| s.distance_mean_m),
        s.map(|s| s.bearing_sin_mean),
        s.map(|s| s.bearing_cos_mean),
        s.map(|s| s.count as f64),
        t.cell.as_ref().map(|c| c.channel_bandwidth_mhz),
        t.cell.as_ref().map(|c| f64::from(c.earfcn_dl)),
        t.nearest_cell_distance_m,
        // distance floored at 1 m, as in log-distance path loss
        t.nearest_cell_distance_m.map(|d| d.max(1.0).log10()),
        bearing.map(|b| b.0),
        bearing.map(|b| b.1),
    ]
}

fn indicator_values(t: &TileFeatures) -> [bool; INDICATORS.len()] {
    let s = t.stats.as_ref();
    [
        s.is_some(),
        s.is_some_and(|s| s.rsrq_mean.is_some()),
        s.is_some_and(|s| s.rssi_mean.is_some()),
        s.is_some_and(|s| s.sinr_mean.is_some()),
    ]
}

fn terrain(t: &TileFeatures) -> &str {
    t.terrain_type.as_deref().unwrap_or(UNKNOWN)
}

fn area(t: &TileFeatures) -> &str {
    t.functional_area.as_deref().unwrap_or(UNKNOWN)
}

fn rat(t: &TileFeatures) -> Option<&'static str> {
    t.cell.as_ref().map(|c| c.rat.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Fitted {
    scales: Vec<MinMax>,
    rat_vocab: Vec<String>,
    terrain_vocab: Vec<String>,
    area_vocab: Vec<String>,
    brands: Vec<String>,
}

/// Learns scaling ranges and vocabularies from training tiles only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    top_brands: usize,
    fitted: Option<Fitted>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnSpec>,
    pub hex_ids: Vec<HexCellId>,
    pub values: Matrix,
}

impl Preprocessor {
    pub fn new(top_brands: usize) -> Self {
        Self {
            top_brands,
            fitted: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn fit<'a>(&mut self, training: impl IntoIterator<Item = &'a TileFeatures> + Clone) {
        let scales = (0..CONTINUOUS.len())
            .map(|j| {
                MinMax::fit(
                    training
                        .clone()
                        .into_iter()
                        .filter_map(|t| continuous_values(t)[j]),
                )
            })
            .collect();

        let mut rat_vocab = BTreeSet::new();
        let mut terrain_vocab = BTreeSet::from([UNKNOWN.to_string()]);
        let mut area_vocab = BTreeSet::from([UNKNOWN.to_string()]);
        let mut brand_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in training {
            if let Some(r) = rat(t) {
                rat_vocab.insert(r.to_string());
            }
            terrain_vocab.insert(terrain(t).to_string());
            area_vocab.insert(area(t).to_string());
            if let Some(s) = &t.stats {
                for (b, n) in &s.brand_counts {
                    *brand_counts.entry(b.as_str()).or_insert(0) += n;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = brand_counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let brands = ranked
            .into_iter()
            .take(self.top_brands)
            .map(|(b, _)| b.to_string())
            .collect();

        self.fitted = Some(Fitted {
            scales,
            rat_vocab: rat_vocab.into_iter().collect(),
            terrain_vocab: terrain_vocab.into_iter().collect(),
            area_vocab: area_vocab.into_iter().collect(),
            brands,
        });
    }

    /// Ordered column manifest of the matrices this preprocessor produces.
    pub fn schema(&self) -> Result<Vec<ColumnSpec>> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        let col = |name: String, kind| ColumnSpec { name, kind };
        let mut cols: Vec<ColumnSpec> = CONTINUOUS
            .iter()
            .map(|n| col(n.to_string(), ColumnKind::Continuous))
            .collect();
        cols.extend(
            INDICATORS
                .iter()
                .map(|n| col(n.to_string(), ColumnKind::Indicator)),
        );
        cols.extend(
            f.rat_vocab
                .iter()
                .map(|v| col(format!("rat={v}"), ColumnKind::OneHot)),
        );
        cols.extend(
            f.terrain_vocab
                .iter()
                .map(|v| col(format!("terrain={v}"), ColumnKind::OneHot)),
        );
        cols.extend(
            f.area_vocab
                .iter()
                .map(|v| col(format!("area={v}"), ColumnKind::OneHot)),
        );
        cols.extend(
            f.brands
                .iter()
                .map(|v| col(format!("brand={v}"), ColumnKind::Share)),
        );
        Ok(cols)
    }

    pub fn continuous_ranges(&self) -> Result<Vec<(&'static str, MinMax)>> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        Ok(CONTINUOUS
            .iter()
            .copied()
            .zip(f.scales.iter().copied())
            .collect())
    }

    pub fn apply(&self, tiles: &[TileFeatures]) -> Result<FeatureMatrix> {
        let f = self.fitted.as_ref().ok_or(Error::Unfitted)?;
        let columns = self.schema()?;
        let width = columns.len();
        let mut values = Matrix::zeros(tiles.len(), width);
        for (i, t) in tiles.iter().enumerate() {
            let row = values.row_mut(i);
            let mut j = 0;
            for (v, mm) in continuous_values(t).iter().zip(&f.scales) {
                row[j] = v.map_or(0.0, |x| mm.scale(x));
                j += 1;
            }
            for flag in indicator_values(t) {
                row[j] = if flag { 1.0 } else { 0.0 };
                j += 1;
            }
            let mut one_hot = |vocab: &[String], value: Option<&str>, j: &mut usize| {
                for v in vocab {
                    if Some(v.as_str()) == value {
                        row[*j] = 1.0;
                    }
                    *j += 1;
                }
            };
            one_hot(&f.rat_vocab, rat(t), &mut j);
            one_hot(&f.terrain_vocab, Some(terrain(t)), &mut j);
            one_hot(&f.area_vocab, Some(area(t)), &mut j);
            let total = t.stats.as_ref().map_or(0, |s| s.count);
            for b in &f.brands {
                let n = t
                    .stats
                    .as_ref()
                    .and_then(|s| s.brand_counts.get(b))
                    .copied()
                    .unwrap_or(0);
                row[j] = if total > 0 {
                    n as f64 / total as f64
                } else {
                    0.0
                };
                j += 1;
            }
            debug_assert_eq!(j, width);
        }
        Ok(FeatureMatrix {
            columns,
            hex_ids: tiles.iter().map(|t| t.hex_id).collect(),
            values,
        })
    }
}

/// Checks that a matrix was produced under the expected column manifest.
pub fn check_schema(expected: &[ColumnSpec], actual: &[ColumnSpec]) -> Result<()> {
    for (i, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e != a {
            return Err(Error::SchemaMismatch(format!(
                "column {i}: model expects `{}` ({:?}), input has `{}` ({:?})",
                e.name, e.kind, a.name, a.kind
            )));
        }
    }
    if expected.len() != actual.len() {
        let name = if expected.len() > actual.len() {
            format!("missing column `{}`", expected[actual.len()].name)
        } else {
            format!("unexpected column `{}`", actual[expected.len()].name)
        };
        return Err(Error::SchemaMismatch(name));
    }
    Ok(())
}
