//! Config file layout and flag overrides. Flags win over file values.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hexrem::nn::{Architecture, Task};
use hexrem::pipeline::{DataFiles, PipelineConfig};
use hexrem::synth::ScenarioConfig;
use hexrem::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `measurements.csv`, `cells.csv` and optionally `tiles.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiles: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k_levels: Vec<u32>,
    pub edge_lens_m: Vec<f64>,
    pub hidden_dims: Vec<Vec<usize>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_levels: vec![1, 2],
            edge_lens_m: vec![200.0],
            hidden_dims: vec![vec![64]],
        }
    }
}

/// Top-level TOML layout: `[data]`, `[pipeline]`, `[scenario]`, `[sweep]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    pub pipeline: PipelineConfig,
    pub scenario: ScenarioConfig,
    pub sweep: SweepSection,
}

impl ConfigFile {
    /// Reads `path`; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let mut cfg: ConfigFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let d = &mut cfg.data;
        for p in [
            &mut d.dir,
            &mut d.measurements,
            &mut d.cells,
            &mut d.tiles,
            &mut d.model,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Gcn,
    Fcn,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Gcn => Architecture::Gcn,
            ArchArg::Fcn => Architecture::Fcn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory with `measurements.csv`, `cells.csv` and optional `tiles.csv`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[arg(long)]
    pub tiles: Option<PathBuf>,
}

impl DataArgs {
    /// Precedence: file flag, `--data-dir`, `[data]` file entry, `[data] dir`.
    pub fn resolve(&self, file: &DataSection) -> Result<DataFiles> {
        let flag_dir = self.data_dir.as_deref().map(DataFiles::in_dir);
        let file_dir = file.dir.as_deref().map(DataFiles::in_dir);
        let chain = |flag: &Option<PathBuf>,
                     entry: &Option<PathBuf>,
                     from_dir: fn(&DataFiles) -> Option<PathBuf>| {
            flag.clone()
                .or_else(|| flag_dir.as_ref().and_then(from_dir))
                .or_else(|| entry.clone())
                .or_else(|| file_dir.as_ref().and_then(from_dir))
        };
        let measurements = chain(&self.measurements, &file.measurements, |d| {
            Some(d.measurements.clone())
        })
        .ok_or_else(|| {
            Error::Config("no measurements file: pass --data-dir or --measurements".into())
        })?;
        let cells = chain(&self.cells, &file.cells, |d| Some(d.cells.clone()))
            .ok_or_else(|| Error::Config("no cell inventory: pass --data-dir or --cells".into()))?;
        let tiles = chain(&self.tiles, &file.tiles, |d| d.tiles.clone());
        Ok(DataFiles {
            measurements,
            cells,
            tiles,
        })
    }
}

fn parse_dims(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad width `{p}`: {e}"))
        })
        .collect()
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub k_level: Option<u32>,
    #[arg(long)]
    pub edge_len_m: Option<f64>,
    #[arg(long)]
    pub origin_lat: Option<f64>,
    #[arg(long)]
    pub origin_lon: Option<f64>,
    #[arg(long)]
    pub region_radius_m: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Comma-separated hidden layer widths, e.g. `64` or `256,512,128`.
    #[arg(long, value_parser = parse_dims)]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub feature_mask_rate: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub coarse_factor: Option<u32>,
    #[arg(long)]
    pub top_brands: Option<usize>,
    /// Window length in seconds; one model per window. Pooled when absent.
    #[arg(long)]
    pub window_s: Option<i64>,
    #[arg(long)]
    pub window_start: Option<i64>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v.into();
        }
    };
}

impl PipelineArgs {
    pub fn apply(&self, mut p: PipelineConfig, seed: Option<u64>) -> PipelineConfig {
        set!(p.architecture, self.arch);
        set!(p.task, self.task);
        set!(p.k_level, self.k_level);
        set!(p.edge_len_m, self.edge_len_m);
        set!(p.origin_lat, self.origin_lat);
        set!(p.origin_lon, self.origin_lon);
        set!(p.epochs, self.epochs);
        set!(p.learning_rate, self.learning_rate);
        set!(p.dropout_rate, self.dropout_rate);
        set!(p.weight_decay, self.weight_decay);
        set!(p.feature_mask_rate, self.feature_mask_rate);
        set!(p.test_fraction, self.test_fraction);
        set!(p.coarse_factor, self.coarse_factor);
        set!(p.top_brands, self.top_brands);
        set!(p.seed, seed);
        if self.region_radius_m.is_some() {
            p.region_radius_m = self.region_radius_m;
        }
        if self.hidden_dims.is_some() {
            p.hidden_dims = self.hidden_dims.clone();
        }
        if self.patience.is_some() {
            p.patience = self.patience;
        }
        if self.window_s.is_some() {
            p.window_s = self.window_s;
        }
        if self.window_start.is_some() {
            p.window_start = self.window_start;
        }
        p
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub origin_lat: Option<f64>,
    #[arg(long)]
    pub origin_lon: Option<f64>,
    #[arg(long)]
    pub region_radius_m: Option<f64>,
    #[arg(long)]
    pub edge_len_m: Option<f64>,
    #[arg(long)]
    pub n_cells: Option<usize>,
    #[arg(long)]
    pub tx_power_dbm: Option<f64>,
    #[arg(long)]
    pub shadowing_sigma_db: Option<f64>,
    #[arg(long)]
    pub shadowing_rings: Option<u32>,
    #[arg(long)]
    pub sensor_noise_db: Option<f64>,
    #[arg(long)]
    pub n_measurements: Option<usize>,
    #[arg(long)]
    pub labeled_fraction: Option<f64>,
}

impl ScenarioArgs {
    pub fn apply(&self, mut s: ScenarioConfig, seed: Option<u64>) -> ScenarioConfig {
        set!(s.origin_lat, self.origin_lat);
        set!(s.origin_lon, self.origin_lon);
        set!(s.region_radius_m, self.region_radius_m);
        set!(s.edge_len_m, self.edge_len_m);
        set!(s.n_cells, self.n_cells);
        set!(s.tx_power_dbm, self.tx_power_dbm);
        set!(s.shadowing_sigma_db, self.shadowing_sigma_db);
        set!(s.shadowing_rings, self.shadowing_rings);
        set!(s.sensor_noise_db, self.sensor_noise_db);
        set!(s.n_measurements, self.n_measurements);
        set!(s.labeled_fraction, self.labeled_fraction);
        set!(s.seed, seed);
        s
    }
}
