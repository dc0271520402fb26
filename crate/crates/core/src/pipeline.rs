//! End-to-end workflow: files → tiles → graph → features → model → estimates.
//!
//! Labels come from the measurements of each tile. During training and
//! evaluation only training tiles expose measurement-derived features; test
//! tiles and unmeasured tiles see geometry and tile attributes only, so the
//! held-out metrics reflect estimation of tiles without data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    accuracy, confusion, constant_mean_baseline, macro_average_by_area, majority_class, r2, rmse,
    split_tiles, Baselines, EvalReport, DEFAULT_COARSE_FACTOR, DEFAULT_TEST_FRACTION,
};
use crate::features::{
    aggregate_tile, check_schema, classify_rsrp, tile_label, ColumnSpec, CoverageClass,
    Observation, Preprocessor, TileFeatures, TileLabel, DEFAULT_TOP_BRANDS,
};
use crate::graph::{
    build_tile_graph, normalized_adjacency, NormalizedAdjacency, TileGraph, DEFAULT_K_LEVEL,
};
use crate::hexgrid::{
    cells_in_disc, fill_bounding_box, point_to_cell, GeoPoint, GridConfig, HexCellId,
};
use crate::ingest::{
    bucket_by_window, parse_cell_inventory, parse_measurements, parse_tile_attributes, Measurement,
    RadioCell, RowReject, TileAttributes, TimeWindow, WindowSpec,
};
use crate::nn::{
    train_with_masking, Architecture, EpochRecord, FeatureMasking, LabelSet, Network, Prediction,
    Targets, Task, TrainConfig,
};

pub const MODEL_FORMAT: &str = "hexrem-model";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_FEATURE_MASK_RATE: f64 = 0.5;

/// Every knob of a train/evaluate/predict run. Flags and config files both
/// map onto these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub edge_len_m: f64,
    /// Node universe is the disc of this radius around the origin (plus any
    /// measured tile); without it, the bounding box of measured tiles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_radius_m: Option<f64>,
    pub k_level: u32,
    pub task: Task,
    pub architecture: Architecture,
    pub seed: u64,
    pub test_fraction: f64,
    pub coarse_factor: u32,
    pub top_brands: usize,
    /// Per-epoch probability that a tile's measurement features are hidden
    /// during training, so the model also learns to estimate unmeasured-looking
    /// tiles from their context.
    pub feature_mask_rate: f64,
    /// Fixed window length; pooled when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_s: Option<i64>,
    /// First window start; defaults to the earliest measurement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_start: Option<i64>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Defaults per architecture when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dims: Option<Vec<usize>>,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::for_arch(Architecture::Gcn);
        Self {
            origin_lat: 59.33,
            origin_lon: 18.06,
            edge_len_m: crate::hexgrid::DEFAULT_EDGE_LEN_M,
            region_radius_m: None,
            k_level: DEFAULT_K_LEVEL,
            task: Task::Regression,
            architecture: Architecture::Gcn,
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            coarse_factor: DEFAULT_COARSE_FACTOR,
            top_brands: DEFAULT_TOP_BRANDS,
            feature_mask_rate: DEFAULT_FEATURE_MASK_RATE,
            window_s: None,
            window_start: None,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            hidden_dims: None,
            dropout_rate: t.dropout_rate,
            weight_decay: t.weight_decay,
            patience: None,
        }
    }
}

impl PipelineConfig {
    pub fn grid(&self) -> Result<GridConfig> {
        let origin = GeoPoint::new(self.origin_lat, self.origin_lon)
            .map_err(|e| Error::Config(e.to_string()))?;
        GridConfig::new(origin, self.edge_len_m).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn window_spec(&self) -> WindowSpec {
        self.window_s
            .map_or(WindowSpec::Pool, |len_s| WindowSpec::Fixed { len_s })
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = TrainConfig::for_arch(self.architecture);
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
            hidden_dims: self.hidden_dims.clone().unwrap_or(base.hidden_dims),
            dropout_rate: self.dropout_rate,
            weight_decay: self.weight_decay,
            patience: self.patience,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.k_level == 0 {
            return Err(Error::Config("k_level must be >= 1".into()));
        }
        if self.coarse_factor == 0 {
            return Err(Error::Config("coarse_factor must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction must be in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.feature_mask_rate) {
            return Err(Error::Config(format!(
                "feature_mask_rate must be in [0, 1], got {}",
                self.feature_mask_rate
            )));
        }
        if let Some(r) = self.region_radius_m {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!(
                    "region_radius_m must be > 0, got {r}"
                )));
            }
        }
        if matches!(self.window_s, Some(w) if w <= 0) {
            return Err(Error::Config("window_s must be > 0".into()));
        }
        self.train_config().validate()
    }
}

/// Input file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFiles {
    pub measurements: PathBuf,
    pub cells: PathBuf,
    pub tiles: Option<PathBuf>,
}

impl DataFiles {
    /// `measurements.csv`, `cells.csv` and, if present, `tiles.csv` in `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        let tiles = dir.join("tiles.csv");
        Self {
            measurements: dir.join("measurements.csv"),
            cells: dir.join("cells.csv"),
            tiles: tiles.exists().then_some(tiles),
        }
    }
}

/// Rows dropped on the way in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    pub measurement_rejects: Vec<RowReject>,
    pub cell_rejects: Vec<RowReject>,
    pub tile_rejects: Vec<RowReject>,
    /// Measurements whose serving cell is not in the inventory.
    pub unmatched_measurements: usize,
    pub before_window_start: usize,
}

impl IngestSummary {
    pub fn total(&self) -> usize {
        self.measurement_rejects.len()
            + self.cell_rejects.len()
            + self.tile_rejects.len()
            + self.unmatched_measurements
            + self.before_window_start
    }
}

#[derive(Debug, Clone)]
pub struct RawData {
    pub measurements: Vec<Measurement>,
    pub cells: Vec<RadioCell>,
    pub tiles: Option<HashMap<HexCellId, TileAttributes>>,
    pub summary: IngestSummary,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn load(files: &DataFiles) -> Result<RawData> {
    let ms = parse_measurements(open(&files.measurements)?)?;
    let cells = parse_cell_inventory(open(&files.cells)?)?;
    let (tiles, tile_rejects) = match &files.tiles {
        Some(p) => {
            let t = parse_tile_attributes(open(p)?)?;
            (Some(t.records.into_iter().collect()), t.rejects)
        }
        None => (None, Vec::new()),
    };
    Ok(RawData {
        measurements: ms.records,
        cells: cells.records,
        tiles,
        summary: IngestSummary {
            measurement_rejects: ms.rejects,
            cell_rejects: cells.rejects,
            tile_rejects,
            ..Default::default()
        },
    })
}

/// Which tiles expose their measurement-derived features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    /// Training tiles only.
    Training,
    /// No tile.
    Hidden,
    /// Every measured tile.
    AllMeasured,
}

/// Per-window labels and split over the shared node set.
#[derive(Debug, Clone)]
pub struct WindowData {
    pub window: TimeWindow,
    /// `(measurement index, cell index)` pairs per node.
    pub node_obs: Vec<Vec<(usize, usize)>>,
    pub labels: Vec<Option<TileLabel>>,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl WindowData {
    pub fn labeled(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }
}

/// Static graph plus per-window data, borrowed from the raw inputs.
#[derive(Debug)]
pub struct Dataset<'a> {
    pub raw: &'a RawData,
    pub grid: GridConfig,
    pub graph: TileGraph,
    pub adj: NormalizedAdjacency,
    pub windows: Vec<WindowData>,
    empty_attrs: HashMap<HexCellId, TileAttributes>,
}

impl<'a> Dataset<'a> {
    /// Builds the node universe, graph, labels and seeded splits.
    ///
    /// The returned summary extends `raw.summary` with join and window drops.
    pub fn build(raw: &'a RawData, cfg: &PipelineConfig) -> Result<(Self, IngestSummary)> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let cell_index: HashMap<&str, usize> = raw
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.global_cell_id.as_str(), i))
            .collect();
        let mut summary = raw.summary.clone();
        let mut joined = Vec::with_capacity(raw.measurements.len());
        for (i, m) in raw.measurements.iter().enumerate() {
            match cell_index.get(m.global_cell_id.as_str()) {
                Some(&c) => joined.push((i, c)),
                None => summary.unmatched_measurements += 1,
            }
        }
        if joined.is_empty() {
            return Err(Error::Argument(
                "no measurement matches the cell inventory".into(),
            ));
        }

        let t0 = cfg.window_start.unwrap_or_else(|| {
            joined
                .iter()
                .map(|&(i, _)| raw.measurements[i].timestamp)
                .min()
                .expect("non-empty")
        });
        let bucketed = bucket_by_window(
            &joined,
            |&(i, _)| raw.measurements[i].timestamp,
            cfg.window_spec(),
            t0,
        )?;
        summary.before_window_start = bucketed.rejects.len();

        let measured: BTreeSet<HexCellId> = bucketed
            .windows
            .values()
            .flatten()
            .map(|&(i, _)| point_to_cell(&grid, &raw.measurements[i].location))
            .collect();
        if measured.is_empty() {
            return Err(Error::Argument(
                "no measurement falls at or after the window start".into(),
            ));
        }
        let measured: Vec<HexCellId> = measured.into_iter().collect();
        let universe: Vec<HexCellId> = match cfg.region_radius_m {
            Some(r) => {
                let mut u: BTreeSet<HexCellId> = cells_in_disc(&grid, r).into_iter().collect();
                u.extend(&measured);
                u.into_iter().collect()
            }
            None => fill_bounding_box(&grid, &measured),
        };
        let graph = build_tile_graph(&universe, cfg.k_level)?;
        let adj = normalized_adjacency(&graph);

        let mut windows = Vec::with_capacity(bucketed.windows.len());
        for (window, obs) in bucketed.windows {
            let mut node_obs = vec![Vec::new(); graph.len()];
            for (i, c) in obs {
                let hex = point_to_cell(&grid, &raw.measurements[i].location);
                node_obs[graph.index_of(hex).expect("universe covers measured tiles")].push((i, c));
            }
            let labels: Vec<Option<TileLabel>> = node_obs
                .iter()
                .map(|o| {
                    tile_label(
                        &o.iter()
                            .map(|&(i, c)| (&raw.measurements[i], &raw.cells[c]))
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let labeled: Vec<bool> = labels.iter().map(Option::is_some).collect();
            let (train_mask, test_mask) = split_tiles(&labeled, cfg.test_fraction, cfg.seed)
                .map_err(|e| Error::Argument(format!("window {}: {e}", window.index)))?;
            windows.push(WindowData {
                window,
                node_obs,
                labels,
                train_mask,
                test_mask,
            });
        }
        Ok((
            Self {
                raw,
                grid,
                graph,
                adj,
                windows,
                empty_attrs: HashMap::new(),
            },
            summary,
        ))
    }

    fn observations(&self, obs: &[(usize, usize)]) -> Vec<Observation<'a>> {
        obs.iter()
            .map(|&(i, c)| (&self.raw.measurements[i], &self.raw.cells[c]))
            .collect()
    }

    /// Feature records for every node of window `w`.
    pub fn features(&self, w: usize, visibility: Visibility) -> Vec<TileFeatures> {
        let wd = &self.windows[w];
        let attrs = self.raw.tiles.as_ref().unwrap_or(&self.empty_attrs);
        self.graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &hex)| {
                let visible = match visibility {
                    Visibility::Training => wd.train_mask[i],
                    Visibility::AllMeasured => true,
                    Visibility::Hidden => false,
                };
                let obs = if visible {
                    self.observations(&wd.node_obs[i])
                } else {
                    Vec::new()
                };
                aggregate_tile(&self.grid, hex, &obs, &self.raw.cells, attrs)
            })
            .collect()
    }
}

/// Regression targets are trained in standardized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNorm {
    pub mean: f64,
    pub std: f64,
}

impl TargetNorm {
    fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: if var > 0.0 { var.sqrt() } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowModel {
    pub window: TimeWindow,
    pub network: Network,
    pub preprocessor: Preprocessor,
    /// Feature manifest the network was trained on.
    pub schema: Vec<ColumnSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_norm: Option<TargetNorm>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

/// Serialized model: one network per time window plus everything needed to
/// rebuild the same graph and features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: PipelineConfig,
    pub grid: GridConfig,
    /// Whether the model was trained with a tile attribute file.
    pub tile_attributes: bool,
    pub models: Vec<WindowModel>,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| Error::Model(e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                m.format, m.version
            )));
        }
        for wm in &m.models {
            if wm.network.in_dim() != wm.schema.len() {
                return Err(Error::Model(format!(
                    "window {}: network takes {} inputs but the manifest lists {} columns",
                    wm.window.index,
                    wm.network.in_dim(),
                    wm.schema.len()
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_json(&s)
    }

    /// Checks that `raw` can feed this model.
    pub fn check_inputs(&self, raw: &RawData) -> Result<()> {
        if self.tile_attributes && raw.tiles.is_none() {
            return Err(Error::SchemaMismatch(
                "model was trained with tile attributes but no tiles file was given".into(),
            ));
        }
        if !self.tile_attributes && raw.tiles.is_some() {
            return Err(Error::SchemaMismatch(
                "model was trained without tile attributes but a tiles file was given".into(),
            ));
        }
        Ok(())
    }

    fn window_model(&self, window: &TimeWindow) -> Result<&WindowModel> {
        self.models
            .iter()
            .find(|m| m.window == *window)
            .ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "no trained model for window {} [{}, {})",
                    window.index, window.start, window.end
                ))
            })
    }
}

/// One window's training result together with its held-out report.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: ModelFile,
    pub reports: Vec<(TimeWindow, EvalReport)>,
    pub summary: IngestSummary,
}

fn adj_for(arch: Architecture, adj: &NormalizedAdjacency) -> Option<&crate::sparse::CsrMatrix> {
    (arch == Architecture::Gcn).then_some(&adj.matrix)
}

fn fit_window(ds: &Dataset<'_>, w: usize, cfg: &PipelineConfig) -> Result<WindowModel> {
    let wd = &ds.windows[w];
    let feats = ds.features(w, Visibility::Training);
    let mut pre = Preprocessor::new(cfg.top_brands);
    pre.fit(
        feats
            .iter()
            .zip(&wd.train_mask)
            .filter(|(_, &m)| m)
            .map(|(f, _)| f)
            .collect::<Vec<_>>(),
    );
    let x = pre.apply(&feats)?;
    let hidden = pre.apply(&ds.features(w, Visibility::Hidden))?;

    let (targets, target_norm) = match cfg.task {
        Task::Regression => {
            let train_y: Vec<f64> = wd
                .labels
                .iter()
                .zip(&wd.train_mask)
                .filter(|(_, &m)| m)
                .map(|(l, _)| l.expect("train tiles are labeled").rsrp_mean)
                .collect();
            let norm = TargetNorm::fit(&train_y);
            let y = wd
                .labels
                .iter()
                .map(|l| l.map_or(0.0, |l| (l.rsrp_mean - norm.mean) / norm.std))
                .collect();
            (Targets::Continuous(y), Some(norm))
        }
        Task::Classification => (
            Targets::Classes(
                wd.labels
                    .iter()
                    .map(|l| l.map_or(0, |l| l.class.index()))
                    .collect(),
            ),
            None,
        ),
    };
    let labels = LabelSet::new(targets, wd.train_mask.clone())?;
    let masking = (cfg.feature_mask_rate > 0.0).then_some(FeatureMasking {
        hidden: &hidden.values,
        rate: cfg.feature_mask_rate,
    });
    let out = train_with_masking(
        cfg.architecture,
        cfg.task,
        adj_for(cfg.architecture, &ds.adj),
        &x.values,
        masking,
        &labels,
        None,
        &cfg.train_config(),
    )?;
    Ok(WindowModel {
        window: wd.window,
        network: out.network,
        schema: x.columns,
        preprocessor: pre,
        target_norm,
        best_epoch: out.best_epoch,
        history: out.history,
    })
}

/// Per-node estimates of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct TileEstimate {
    pub hex_id: HexCellId,
    /// Regression models only.
    pub rsrp_dbm: Option<f64>,
    pub class: CoverageClass,
    pub labeled: bool,
}

fn estimate(
    ds: &Dataset<'_>,
    w: usize,
    wm: &WindowModel,
    visibility: Visibility,
) -> Result<Vec<TileEstimate>> {
    let feats = ds.features(w, visibility);
    let x = wm.preprocessor.apply(&feats)?;
    check_schema(&wm.schema, &x.columns)?;
    let labeled = ds.windows[w].labeled();
    let pred = wm
        .network
        .predict(adj_for(wm.network.arch, &ds.adj), &x.values)?;
    Ok(match pred {
        Prediction::Regression(v) => {
            let norm = wm
                .target_norm
                .ok_or_else(|| Error::Model("regression model without target scaling".into()))?;
            v.into_iter()
                .zip(&ds.graph.nodes)
                .zip(labeled)
                .map(|((z, &hex_id), labeled)| {
                    let rsrp = z * norm.std + norm.mean;
                    TileEstimate {
                        hex_id,
                        rsrp_dbm: Some(rsrp),
                        class: classify_rsrp(rsrp),
                        labeled,
                    }
                })
                .collect()
        }
        Prediction::Classification { classes, .. } => classes
            .into_iter()
            .zip(&ds.graph.nodes)
            .zip(labeled)
            .map(|((c, &hex_id), labeled)| TileEstimate {
                hex_id,
                rsrp_dbm: None,
                class: CoverageClass::ALL[c],
                labeled,
            })
            .collect(),
    })
}

fn report(ds: &Dataset<'_>, w: usize, wm: &WindowModel, model: &ModelFile) -> Result<EvalReport> {
    let cfg = &model.config;
    let wd = &ds.windows[w];
    let est = estimate(ds, w, wm, Visibility::Training)?;
    let pick = |mask: &[bool]| -> Vec<(usize, TileLabel)> {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| (i, wd.labels[i].expect("masked tiles are labeled")))
            .collect()
    };
    let (train, test) = (pick(&wd.train_mask), pick(&wd.test_mask));
    if test.is_empty() {
        return Err(Error::Undefined(
            "test set is empty; raise test_fraction".into(),
        ));
    }

    let train_classes: Vec<CoverageClass> = train.iter().map(|(_, l)| l.class).collect();
    let majority = majority_class(&train_classes);
    let test_classes: Vec<CoverageClass> = test.iter().map(|(_, l)| l.class).collect();
    let train_y: Vec<f64> = train.iter().map(|(_, l)| l.rsrp_mean).collect();
    let test_y: Vec<f64> = test.iter().map(|(_, l)| l.rsrp_mean).collect();

    let (metric, global, rmse_db, derived, macro_result, conf, baselines) = match cfg.task {
        Task::Regression => {
            let y_hat: Vec<f64> = test
                .iter()
                .map(|(i, _)| est[*i].rsrp_dbm.expect("regression"))
                .collect();
            let records: Vec<(HexCellId, f64, f64)> = test
                .iter()
                .zip(&y_hat)
                .map(|((i, l), &p)| (ds.graph.nodes[*i], l.rsrp_mean, p))
                .collect();
            (
                "r2",
                r2(&test_y, &y_hat)?,
                Some(rmse(&test_y, &y_hat)?),
                Some(accuracy(
                    &test_classes,
                    &test.iter().map(|(i, _)| est[*i].class).collect::<Vec<_>>(),
                )?),
                macro_average_by_area(&ds.grid, &records, cfg.coarse_factor, r2),
                None,
                Baselines {
                    constant_mean_r2: Some(constant_mean_baseline(&train_y, &test_y)?),
                    majority_class: None,
                    majority_class_accuracy: None,
                },
            )
        }
        Task::Classification => {
            let y_hat: Vec<CoverageClass> = test.iter().map(|(i, _)| est[*i].class).collect();
            let records: Vec<(HexCellId, CoverageClass, CoverageClass)> = test
                .iter()
                .zip(&y_hat)
                .map(|((i, l), &p)| (ds.graph.nodes[*i], l.class, p))
                .collect();
            let maj = majority.expect("training set is non-empty");
            (
                "accuracy",
                accuracy(&test_classes, &y_hat)?,
                None,
                None,
                macro_average_by_area(&ds.grid, &records, cfg.coarse_factor, accuracy),
                Some(confusion(&test_classes, &y_hat)?),
                Baselines {
                    constant_mean_r2: None,
                    majority_class: Some(maj),
                    majority_class_accuracy: Some(accuracy(
                        &test_classes,
                        &vec![maj; test_classes.len()],
                    )?),
                },
            )
        }
    };
    let (macro_average, macro_note) = match macro_result {
        Ok(m) => (Some(m), None),
        Err(Error::Undefined(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        task: cfg.task,
        architecture: cfg.architecture,
        metric: metric.into(),
        global,
        rmse_db,
        derived_class_accuracy: derived,
        macro_average,
        macro_note,
        confusion: conf,
        baselines,
        n_tiles: ds.graph.len(),
        n_labeled: wd.labels.iter().filter(|l| l.is_some()).count(),
        n_train: train.len(),
        n_test: test.len(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
    })
}

/// Trains one model per window and evaluates each on its held-out tiles.
pub fn train_and_evaluate(raw: &RawData, cfg: &PipelineConfig) -> Result<TrainRun> {
    let (ds, summary) = Dataset::build(raw, cfg)?;
    let models = (0..ds.windows.len())
        .map(|w| fit_window(&ds, w, cfg))
        .collect::<Result<Vec<_>>>()?;
    let model = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        config: cfg.clone(),
        grid: ds.grid,
        tile_attributes: raw.tiles.is_some(),
        models,
    };
    let reports = model
        .models
        .iter()
        .enumerate()
        .map(|(w, wm)| Ok((wm.window, report(&ds, w, wm, &model)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainRun {
        model,
        reports,
        summary,
    })
}

/// Rebuilds the training split from `raw` and the model's seed and reports
/// held-out metrics per window.
pub fn evaluate(model: &ModelFile, raw: &RawData) -> Result<Vec<(TimeWindow, EvalReport)>> {
    model.check_inputs(raw)?;
    let (ds, _) = Dataset::build(raw, &model.config)?;
    ds.windows
        .iter()
        .enumerate()
        .map(|(w, wd)| {
            Ok((
                wd.window,
                report(&ds, w, model.window_model(&wd.window)?, model)?,
            ))
        })
        .collect()
}

/// Estimates for every tile of every window, with all measured tiles visible.
pub fn predict(
    model: &ModelFile,
    raw: &RawData,
) -> Result<BTreeMap<TimeWindow, Vec<TileEstimate>>> {
    model.check_inputs(raw)?;
    let (ds, _) = Dataset::build(raw, &model.config)?;
    ds.windows
        .iter()
        .enumerate()
        .map(|(w, wd)| {
            Ok((
                wd.window,
                estimate(
                    &ds,
                    w,
                    model.window_model(&wd.window)?,
                    Visibility::AllMeasured,
                )?,
            ))
        })
        .collect()
}
