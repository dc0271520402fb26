//! Output formats for per-tile estimates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::hexgrid::{cell_boundary, cell_centroid, GridConfig};
use crate::ingest::TimeWindow;
use crate::pipeline::TileEstimate;

pub const PREDICTION_COLUMNS: [&str; 8] = [
    "window",
    "window_start",
    "hex_id",
    "lat",
    "lon",
    "pred_rsrp_dbm",
    "pred_class",
    "labeled",
];

/// One row per tile and window; `pred_rsrp_dbm` is empty for classifiers.
pub fn predictions_csv(
    grid: &GridConfig,
    estimates: &BTreeMap<TimeWindow, Vec<TileEstimate>>,
) -> String {
    let mut s = PREDICTION_COLUMNS.join(",");
    s.push('\n');
    for (w, est) in estimates {
        for e in est {
            let c = cell_centroid(grid, e.hex_id);
            let rsrp = e.rsrp_dbm.map(|v| format!("{v:.4}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{:.7},{:.7},{rsrp},{},{}",
                w.index,
                w.start,
                e.hex_id,
                c.lat,
                c.lon,
                e.class.name(),
                e.labeled
            );
        }
    }
    s
}

/// FeatureCollection with one closed hexagon polygon per tile, in
/// `[lon, lat]` order.
pub fn geojson(grid: &GridConfig, estimates: &[TileEstimate]) -> Value {
    let features: Vec<Value> = estimates
        .iter()
        .map(|e| {
            let b = cell_boundary(grid, e.hex_id);
            let mut ring: Vec<[f64; 2]> = b.iter().map(|p| [p.lon, p.lat]).collect();
            ring.push(ring[0]);
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "hex_id": e.hex_id.to_string(),
                    "pred_rsrp_dbm": e.rsrp_dbm,
                    "pred_class": e.class.name(),
                    "labeled": e.labeled,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CoverageClass;
    use crate::hexgrid::{GeoPoint, HexCellId};

    fn est() -> Vec<TileEstimate> {
        vec![
            TileEstimate {
                hex_id: HexCellId::new(0, 0),
                rsrp_dbm: Some(-95.5),
                class: CoverageClass::Average,
                labeled: true,
            },
            TileEstimate {
                hex_id: HexCellId::new(1, -1),
                rsrp_dbm: None,
                class: CoverageClass::Good,
                labeled: false,
            },
        ]
    }

    #[test]
    fn geojson_shape() {
        let grid = GridConfig::new(GeoPoint::new(59.33, 18.06).unwrap(), 200.0).unwrap();
        let v = geojson(&grid, &est());
        assert_eq!(v["type"], "FeatureCollection");
        let f = v["features"].as_array().unwrap();
        assert_eq!(f.len(), 2);
        let ring = f[0]["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.len(), 7);
        assert_eq!(ring[0], ring[6]);
        // lon first
        assert!((ring[0][0].as_f64().unwrap() - 18.06).abs() < 0.01);
        assert_eq!(f[0]["properties"]["hex_id"], "0:0");
        assert_eq!(f[0]["properties"]["pred_class"], "average");
        assert!(f[1]["properties"]["pred_rsrp_dbm"].is_null());
        assert_eq!(f[1]["properties"]["labeled"], false);
    }

    #[test]
    fn csv_rows() {
        let grid = GridConfig::new(GeoPoint::new(59.33, 18.06).unwrap(), 200.0).unwrap();
        let w = TimeWindow {
            index: 1,
            start: 10,
            end: i64::MAX,
        };
        let s = predictions_csv(&grid, &BTreeMap::from([(w, est())]));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,10,0:0,59.3300000,18.0600000,-95.5000,average,true"));
        assert!(lines[2].ends_with(",,good,false"));
    }
}
