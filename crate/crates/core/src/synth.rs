//! Synthetic scenario generator with a known ground truth.
//!
//! Cells sit on a jittered hexagonal lattice; received power follows a
//! log-distance path-loss law plus a spatially correlated shadowing field
//! (white Gaussian noise per tile averaged over a k-ring and rescaled back
//! to the target variance). Output uses the ingest CSV schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{classify_rsrp, distance_m, CoverageClass};
use crate::hexgrid::{
    axial_to_planar, cell_centroid, cells_in_disc, k_ring, planar_to_axial, unproject, GeoPoint,
    GridConfig, HexCellId, PlanarXY,
};
use crate::ingest::{Measurement, RadioCell, Rat, TileAttributes};

/// Reportable RSRP range; simulated values are clamped into it.
pub const RSRP_REPORT_RANGE_DBM: (f64, f64) = (-140.0, -44.0);

const THERMAL_NOISE_PER_RE_DBM: f64 = -174.0 + 41.76 + 7.0; // kTB over 15 kHz plus 7 dB noise figure

const BRANDS: [(&str, u32); 7] = [
    ("acme", 30),
    ("bolt", 22),
    ("corvid", 15),
    ("delta", 12),
    ("ember", 9),
    ("fjord", 7),
    ("gale", 5),
];
const TERRAIN: [&str; 4] = ["urban", "suburban", "forest", "water"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub region_radius_m: f64,
    pub edge_len_m: f64,
    pub n_cells: usize,
    pub tx_power_dbm: f64,
    /// Path loss at 1 km.
    pub pl0_db: f64,
    /// dB per decade of distance.
    pub pl_slope_db: f64,
    pub shadowing_sigma_db: f64,
    pub shadowing_rings: u32,
    pub sensor_noise_db: f64,
    pub n_measurements: usize,
    pub labeled_fraction: f64,
    pub start_timestamp: i64,
    pub duration_s: i64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            origin_lat: 59.33,
            origin_lon: 18.06,
            region_radius_m: 4000.0,
            edge_len_m: 200.0,
            n_cells: 9,
            tx_power_dbm: 46.0,
            pl0_db: 128.1,
            pl_slope_db: 37.6,
            shadowing_sigma_db: 6.0,
            shadowing_rings: 2,
            sensor_noise_db: 1.0,
            n_measurements: 6000,
            labeled_fraction: 0.7,
            start_timestamp: 1_700_000_000,
            duration_s: 8 * 7 * 24 * 3600,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<GridConfig> {
        let origin = GeoPoint::new(self.origin_lat, self.origin_lon)
            .map_err(|e| Error::Config(e.to_string()))?;
        GridConfig::new(origin, self.edge_len_m)
    }

    pub fn path_loss(&self) -> PathLoss {
        PathLoss {
            pl0_db: self.pl0_db,
            slope_db: self.pl_slope_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("region_radius_m", self.region_radius_m),
            ("edge_len_m", self.edge_len_m),
            ("pl_slope_db", self.pl_slope_db),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("sensor_noise_db", self.sensor_noise_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.n_cells == 0 {
            return Err(Error::Config("n_cells must be >= 1".into()));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "labeled_fraction must be in (0, 1], got {}",
                self.labeled_fraction
            )));
        }
        if self.duration_s <= 0 || self.start_timestamp <= 0 {
            return Err(Error::Config("timestamps must be positive".into()));
        }
        self.grid().map(|_| ())
    }
}

/// `PL(d) = PL0 + S·log10(d / 1 km)`, with `d` clamped below at 1 m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub pl0_db: f64,
    pub slope_db: f64,
}

impl PathLoss {
    pub fn db(&self, d_m: f64) -> f64 {
        self.pl0_db + self.slope_db * (d_m.max(1.0) / 1000.0).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub hex_id: HexCellId,
    pub true_rsrp_dbm: f64,
    pub true_class: CoverageClass,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: GridConfig,
    pub cells: Vec<RadioCell>,
    pub measurements: Vec<Measurement>,
    pub tiles: Vec<(HexCellId, TileAttributes)>,
    pub truth: Vec<TruthRow>,
    /// Shadowing offset in dB for every region tile.
    pub shadowing: BTreeMap<HexCellId, f64>,
    /// Tiles that received measurements by construction.
    pub labeled_tiles: BTreeSet<HexCellId>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Shadowing field: white `N(0, σ²)` per tile, averaged over `k_ring(·, rings)`
/// and scaled by `sqrt(ring size)` so the marginal variance is back to `σ²`.
pub fn shadowing_field(
    tiles: &[HexCellId],
    sigma_db: f64,
    rings: u32,
    seed: u64,
) -> BTreeMap<HexCellId, f64> {
    let mut support = BTreeSet::new();
    for &t in tiles {
        support.extend(k_ring(t, i64::from(rings)).expect("non-negative"));
    }
    let mut rng = stream(seed, 1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: BTreeMap<HexCellId, f64> = support
        .into_iter()
        .map(|c| (c, normal.sample(&mut rng)))
        .collect();
    let ring_size = (1 + 3 * rings * (rings + 1)) as f64;
    tiles
        .iter()
        .map(|&t| {
            let sum: f64 = k_ring(t, i64::from(rings))
                .expect("non-negative")
                .iter()
                .map(|c| white[c])
                .sum();
            (t, sigma_db * sum / ring_size.sqrt())
        })
        .collect()
}

fn place_cells(
    cfg: &ScenarioConfig,
    grid: &GridConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RadioCell>> {
    let r = cfg.region_radius_m;
    let n = cfg.n_cells;
    let mut spacing = r * (2.0 * std::f64::consts::PI / (3f64.sqrt() * n as f64)).sqrt();
    let lattice = |s: f64| -> Vec<(f64, HexCellId, PlanarXY)> {
        let lattice_grid = GridConfig {
            edge_len_m: s / 3f64.sqrt(),
            ..*grid
        };
        let mut pts: Vec<_> = cells_in_disc(&lattice_grid, 0.9 * r)
            .into_iter()
            .map(|c| {
                let p = axial_to_planar(&lattice_grid, c);
                (p.x.hypot(p.y), c, p)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pts
    };
    let mut pts = lattice(spacing);
    while pts.len() < n {
        spacing *= 0.95;
        if spacing < 2.0 * cfg.edge_len_m {
            return Err(Error::Config(format!(
                "region radius {} m is too small for {n} cells at edge length {} m",
                r, cfg.edge_len_m
            )));
        }
        pts = lattice(spacing);
    }
    let jitter = 0.2 * spacing;
    Ok(pts
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (_, _, p))| {
            let (rho, theta) = (
                jitter * rng.random::<f64>().sqrt(),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let xy = PlanarXY {
                x: p.x + rho * theta.cos(),
                y: p.y + rho * theta.sin(),
            };
            let rat = if i % 3 == 2 { Rat::Nr } else { Rat::Lte };
            let (bw, earfcn) = match rat {
                Rat::Lte => (20.0, 6300),
                Rat::Nr => (100.0, 632_628),
            };
            RadioCell {
                global_cell_id: format!("cell-{i:03}"),
                location: round_point(&unproject(grid, &xy)),
                rat,
                channel_bandwidth_mhz: bw,
                earfcn_dl: earfcn,
            }
        })
        .collect())
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// Coordinates are written with 7 decimals; round in memory so files and
/// in-memory scenario agree.
fn round_point(p: &GeoPoint) -> GeoPoint {
    GeoPoint {
        lat: round_to(p.lat, 7),
        lon: round_to(p.lon, 7),
    }
}

fn db_to_mw(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Received power from every cell at `p`, in cell order.
fn received_dbm(cfg: &ScenarioConfig, cells: &[RadioCell], p: &GeoPoint) -> Vec<f64> {
    let pl = cfg.path_loss();
    cells
        .iter()
        .map(|c| cfg.tx_power_dbm - pl.db(distance_m(&c.location, p)))
        .collect()
}

fn strongest(rx: &[f64]) -> (usize, f64) {
    rx.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
}

fn clamp_rsrp(v: f64) -> f64 {
    v.clamp(RSRP_REPORT_RANGE_DBM.0, RSRP_REPORT_RANGE_DBM.1)
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let cells = place_cells(cfg, &grid, &mut stream(cfg.seed, 0))?;

    let region = cells_in_disc(&grid, cfg.region_radius_m);
    let shadowing = shadowing_field(
        &region,
        cfg.shadowing_sigma_db,
        cfg.shadowing_rings,
        cfg.seed,
    );

    let mut order = region.clone();
    order.shuffle(&mut stream(cfg.seed, 2));
    let n_labeled =
        ((cfg.labeled_fraction * region.len() as f64).round() as usize).clamp(1, region.len());
    let labeled_tiles: BTreeSet<HexCellId> = order.into_iter().take(n_labeled).collect();

    let mut rng = stream(cfg.seed, 3);
    let noise = Normal::new(0.0, cfg.sensor_noise_db.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let rsrq_noise = Normal::new(0.0, 0.5).expect("finite sigma");
    let brand_total: u32 = BRANDS.iter().map(|b| b.1).sum();
    let mut measurements = Vec::with_capacity(cfg.n_measurements);
    while measurements.len() < cfg.n_measurements {
        let rho = cfg.region_radius_m * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let xy = PlanarXY {
            x: rho * theta.cos(),
            y: rho * theta.sin(),
        };
        let tile = planar_to_axial(&grid, &xy);
        if !labeled_tiles.contains(&tile) {
            continue;
        }
        let location = round_point(&unproject(&grid, &xy));
        let rx = received_dbm(cfg, &cells, &location);
        let (serving, best) = strongest(&rx);
        let sensor = if cfg.sensor_noise_db > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let rsrp = round_to(clamp_rsrp(best + shadowing[&tile] + sensor), 2);
        let rsrq = round_to(
            (-10.5 + 0.12 * (rsrp + 100.0) + rsrq_noise.sample(&mut rng)).clamp(-30.0, 0.0),
            2,
        );
        let n_rb = cells[serving].channel_bandwidth_mhz * 5.0;
        let rssi = round_to(
            rsrp + 10.0 * (12.0 * n_rb).log10() + noise.sample(&mut rng) * 0.5,
            2,
        );
        let sinr = if rng.random_bool(0.5) {
            let interference: f64 = rx
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != serving)
                .map(|(_, v)| db_to_mw(*v - 30.8))
                .sum();
            let signal = best - 30.8;
            Some(round_to(
                signal - 10.0 * (interference + db_to_mw(THERMAL_NOISE_PER_RE_DBM)).log10(),
                2,
            ))
        } else {
            None
        };
        let mut pick = rng.random_range(0..brand_total);
        let brand = BRANDS
            .iter()
            .find(|(_, w)| {
                if pick < *w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .map(|(b, _)| b.to_string());
        measurements.push(Measurement {
            global_cell_id: cells[serving].global_cell_id.clone(),
            location,
            timestamp: cfg.start_timestamp + rng.random_range(0..cfg.duration_s),
            rsrp_dbm: rsrp,
            rsrq_db: Some(rsrq),
            rssi_dbm: Some(rssi),
            sinr_db: sinr,
            device_brand: brand,
        });
    }

    let mut attr_rng = stream(cfg.seed, 4);
    let tiles = region
        .iter()
        .map(|&t| {
            let p = axial_to_planar(&grid, t);
            let dist = p.x.hypot(p.y);
            let functional_area = if dist < 0.3 * cfg.region_radius_m {
                "commercial"
            } else if dist < 0.75 * cfg.region_radius_m {
                "residential"
            } else if attr_rng.random_bool(0.5) {
                "industrial"
            } else {
                "recreational"
            };
            let terrain_type = TERRAIN[attr_rng.random_range(0..TERRAIN.len())];
            (
                t,
                TileAttributes {
                    terrain_type: terrain_type.into(),
                    functional_area: functional_area.into(),
                },
            )
        })
        .collect();

    let truth = region
        .iter()
        .map(|&t| {
            let (_, best) = strongest(&received_dbm(cfg, &cells, &cell_centroid(&grid, t)));
            let v = round_to(clamp_rsrp(best + shadowing[&t]), 4);
            TruthRow {
                hex_id: t,
                true_rsrp_dbm: v,
                true_class: classify_rsrp(v),
            }
        })
        .collect();

    Ok(Scenario {
        config: cfg.clone(),
        grid,
        cells,
        measurements,
        tiles,
        truth,
        shadowing,
        labeled_tiles,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

impl Scenario {
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("global_cell_id,lat,lon,rat,channel_bandwidth_mhz,earfcn_dl\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{:.7},{:.7},{},{},{}",
                c.global_cell_id,
                c.location.lat,
                c.location.lon,
                c.rat.as_str(),
                c.channel_bandwidth_mhz,
                c.earfcn_dl
            );
        }
        s
    }

    pub fn measurements_csv(&self) -> String {
        let mut s =
            String::from("global_cell_id,lat,lon,timestamp,rsrp,rsrq,rssi,sinr,device_brand\n");
        for m in &self.measurements {
            let _ = writeln!(
                s,
                "{},{:.7},{:.7},{},{:.2},{},{},{},{}",
                m.global_cell_id,
                m.location.lat,
                m.location.lon,
                m.timestamp,
                m.rsrp_dbm,
                opt(m.rsrq_db),
                opt(m.rssi_dbm),
                opt(m.sinr_db),
                m.device_brand.as_deref().unwrap_or("")
            );
        }
        s
    }

    pub fn tiles_csv(&self) -> String {
        let mut s = String::from("hex_id,terrain_type,functional_area\n");
        for (t, a) in &self.tiles {
            let _ = writeln!(s, "{t},{},{}", a.terrain_type, a.functional_area);
        }
        s
    }

    pub fn truth_csv(&self) -> String {
        let mut s = String::from("hex_id,true_rsrp_dbm,true_class\n");
        for t in &self.truth {
            let _ = writeln!(
                s,
                "{},{:.4},{}",
                t.hex_id,
                t.true_rsrp_dbm,
                t.true_class.name()
            );
        }
        s
    }

    /// Writes `cells.csv`, `measurements.csv`, `tiles.csv` and `truth.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("cells.csv"), self.cells_csv())?;
        fs::write(dir.join("measurements.csv"), self.measurements_csv())?;
        fs::write(dir.join("tiles.csv"), self.tiles_csv())?;
        fs::write(dir.join("truth.csv"), self.truth_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_cell_inventory, parse_measurements, parse_tile_attributes};

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            region_radius_m: 1500.0,
            n_cells: 3,
            n_measurements: 400,
            ..Default::default()
        }
    }

    #[test]
    fn path_loss_anchors() {
        let pl = ScenarioConfig::default().path_loss();
        assert!((pl.db(1000.0) - 128.1).abs() < 1e-12);
        assert!((pl.db(10_000.0) - 165.7).abs() < 1e-9);
        assert_eq!(pl.db(0.2), pl.db(1.0));
        let mut prev = f64::NEG_INFINITY;
        for d in (1..20_000).step_by(37) {
            let v = pl.db(d as f64);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn closed_form_single_cell() {
        let cfg = ScenarioConfig {
            shadowing_sigma_db: 0.0,
            sensor_noise_db: 0.0,
            ..Default::default()
        };
        let cell = RadioCell {
            global_cell_id: "c".into(),
            location: GeoPoint::new(0.0, 0.0).unwrap(),
            rat: Rat::Lte,
            channel_bandwidth_mhz: 20.0,
            earfcn_dl: 1,
        };
        let one_km =
            GeoPoint::new((1000.0 / crate::hexgrid::EARTH_RADIUS_M).to_degrees(), 0.0).unwrap();
        let rx = received_dbm(&cfg, std::slice::from_ref(&cell), &one_km);
        assert!((rx[0] - -82.1).abs() < 1e-9);
        let ten_km = GeoPoint::new(
            (10_000.0 / crate::hexgrid::EARTH_RADIUS_M).to_degrees(),
            0.0,
        )
        .unwrap();
        let rx = received_dbm(&cfg, &[cell], &ten_km);
        assert!((rx[0] - -119.7).abs() < 1e-9);
        assert_eq!(classify_rsrp(rx[0]), CoverageClass::Weak);
    }

    #[test]
    fn deterministic_files() {
        let a = generate_scenario(&small()).unwrap();
        let b = generate_scenario(&small()).unwrap();
        assert_eq!(a.measurements_csv(), b.measurements_csv());
        assert_eq!(a.cells_csv(), b.cells_csv());
        assert_eq!(a.truth_csv(), b.truth_csv());
        let c = generate_scenario(&ScenarioConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.measurements_csv(), c.measurements_csv());
    }

    #[test]
    fn output_reingests_cleanly() {
        let s = generate_scenario(&small()).unwrap();
        let cells = parse_cell_inventory(s.cells_csv().as_bytes()).unwrap();
        let ms = parse_measurements(s.measurements_csv().as_bytes()).unwrap();
        let tiles = parse_tile_attributes(s.tiles_csv().as_bytes()).unwrap();
        assert!(cells.rejects.is_empty() && ms.rejects.is_empty() && tiles.rejects.is_empty());
        assert_eq!(cells.records, s.cells);
        assert_eq!(ms.records.len(), 400);
        assert_eq!(ms.records, s.measurements);
    }

    #[test]
    fn too_small_region_is_config_error() {
        let cfg = ScenarioConfig {
            region_radius_m: 300.0,
            n_cells: 50,
            ..Default::default()
        };
        assert!(matches!(generate_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn shadowing_statistics() {
        let grid = ScenarioConfig::default().grid().unwrap();
        let tiles = cells_in_disc(&grid, 9_000.0);
        assert!(tiles.len() >= 2000);
        let sigma = 6.0;
        let field = shadowing_field(&tiles, sigma, 2, 3);
        let n = field.len() as f64;
        let mean = field.values().sum::<f64>() / n;
        let var = field.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(
            (var - sigma * sigma).abs() / (sigma * sigma) < 0.15,
            "{var}"
        );

        // lag-1 correlation over neighbor pairs
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (t, v) in &field {
            for nb in crate::hexgrid::neighbors(*t) {
                if let Some(w) = field.get(&nb) {
                    num += (v - mean) * (w - mean);
                    pairs += 1.0;
                }
            }
        }
        assert!(num / pairs / var > 0.3);
    }
}
