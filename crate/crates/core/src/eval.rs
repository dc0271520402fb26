//! Splits, metrics, per-area macro averages and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CoverageClass;
use crate::hexgrid::{cell_centroid, point_to_cell, GridConfig, HexCellId};
use crate::nn::{Architecture, Task, N_CLASSES};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_COARSE_FACTOR: u32 = 5;
pub const MIN_LABELED_FOR_SPLIT: usize = 5;

pub type Confusion = [[usize; N_CLASSES]; N_CLASSES];

/// Seeded split of the labeled nodes into `(train, test)` masks.
///
/// The test set has `round(test_fraction · n)` nodes; masks are disjoint and
/// their union is `labeled`.
pub fn split_tiles(
    labeled: &[bool],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<bool>, Vec<bool>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Argument(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    let mut idx: Vec<usize> = labeled
        .iter()
        .enumerate()
        .filter(|(_, &l)| l)
        .map(|(i, _)| i)
        .collect();
    if idx.len() < MIN_LABELED_FOR_SPLIT {
        return Err(Error::Argument(format!(
            "need at least {MIN_LABELED_FOR_SPLIT} labeled tiles to split, got {}",
            idx.len()
        )));
    }
    let n_test = (test_fraction * idx.len() as f64).round() as usize;
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = vec![false; labeled.len()];
    for &i in &idx[..n_test] {
        test[i] = true;
    }
    let train = labeled.iter().zip(&test).map(|(&l, &t)| l && !t).collect();
    Ok((train, test))
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Argument(format!(
            "r2: {} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::Undefined(format!(
            "r2 needs at least 2 samples, got {}",
            y.len()
        )));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2 with zero target variance".into()));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::Argument(format!(
            "rmse: {} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    Ok((y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt())
}

pub fn accuracy(y: &[CoverageClass], y_hat: &[CoverageClass]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Argument(format!(
            "accuracy: {} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Undefined("accuracy of zero samples".into()));
    }
    Ok(y.iter().zip(y_hat).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

/// Rows are true classes, columns predicted classes.
pub fn confusion(y: &[CoverageClass], y_hat: &[CoverageClass]) -> Result<Confusion> {
    if y.len() != y_hat.len() {
        return Err(Error::Argument(format!(
            "confusion: {} targets vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    let mut m = [[0; N_CLASSES]; N_CLASSES];
    for (a, b) in y.iter().zip(y_hat) {
        m[a.index()][b.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaMetric {
    /// Parent cell on the coarse grid.
    pub area: HexCellId,
    pub n_test: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub coarse_factor: u32,
    pub mean: f64,
    pub areas: Vec<AreaMetric>,
    /// Areas skipped for having too few test tiles or an undefined metric.
    pub excluded_areas: usize,
}

/// Unweighted mean of `metric` over coarse parent areas.
///
/// Tiles map to the parent containing their centroid on a grid with edge
/// `edge_len_m · coarse_factor` and the same origin. Areas with fewer than
/// two records, or where the metric is undefined, are excluded.
pub fn macro_average_by_area<T: Clone>(
    grid: &GridConfig,
    records: &[(HexCellId, T, T)],
    coarse_factor: u32,
    metric: impl Fn(&[T], &[T]) -> Result<f64>,
) -> Result<MacroAverage> {
    let coarse = grid.coarsened(coarse_factor)?;
    let mut groups: BTreeMap<HexCellId, (Vec<T>, Vec<T>)> = BTreeMap::new();
    for (tile, y, y_hat) in records {
        let parent = point_to_cell(&coarse, &cell_centroid(grid, *tile));
        let g = groups.entry(parent).or_default();
        g.0.push(y.clone());
        g.1.push(y_hat.clone());
    }
    let n_groups = groups.len();
    let mut areas = Vec::new();
    for (area, (y, y_hat)) in groups {
        if y.len() < 2 {
            continue;
        }
        match metric(&y, &y_hat) {
            Ok(value) => areas.push(AreaMetric {
                area,
                n_test: y.len(),
                value,
            }),
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if areas.is_empty() {
        return Err(Error::Undefined(format!(
            "no area with at least 2 test tiles and a defined metric ({} records in {n_groups} areas, coarse_factor {coarse_factor})",
            records.len()
        )));
    }
    let mean = areas.iter().map(|a| a.value).sum::<f64>() / areas.len() as f64;
    Ok(MacroAverage {
        coarse_factor,
        mean,
        excluded_areas: n_groups - areas.len(),
        areas,
    })
}

/// Predicts the training mean everywhere; R² on the test targets.
pub fn constant_mean_baseline(train_y: &[f64], test_y: &[f64]) -> Result<f64> {
    if train_y.is_empty() {
        return Err(Error::Argument(
            "constant-mean baseline needs training targets".into(),
        ));
    }
    let mean = train_y.iter().sum::<f64>() / train_y.len() as f64;
    r2(test_y, &vec![mean; test_y.len()])
}

/// Most frequent training class (ties to the lower class index).
pub fn majority_class(train_y: &[CoverageClass]) -> Option<CoverageClass> {
    let mut counts = [0usize; N_CLASSES];
    for c in train_y {
        counts[c.index()] += 1;
    }
    let (best, n) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |b, (i, &n)| if n > b.1 { (i, n) } else { b });
    (n > 0).then(|| CoverageClass::ALL[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub constant_mean_r2: Option<f64>,
    pub majority_class: Option<CoverageClass>,
    pub majority_class_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub architecture: Architecture,
    /// `"r2"` for regression, `"accuracy"` for classification.
    pub metric: String,
    pub global: f64,
    /// Regression only.
    pub rmse_db: Option<f64>,
    /// Regression only: accuracy of the classes implied by the estimates.
    pub derived_class_accuracy: Option<f64>,
    pub macro_average: Option<MacroAverage>,
    /// Why `macro_average` is absent, if it is.
    pub macro_note: Option<String>,
    pub confusion: Option<Confusion>,
    pub baselines: Baselines,
    pub n_tiles: usize,
    pub n_labeled: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Key/value lines followed by the per-area and confusion tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let task = match self.task {
            Task::Regression => "regression",
            Task::Classification => "classification",
        };
        let arch = match self.architecture {
            Architecture::Gcn => "gcn",
            Architecture::Fcn => "fcn",
        };
        let _ = writeln!(s, "task = {task}");
        let _ = writeln!(s, "architecture = {arch}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_tiles = {}", self.n_tiles);
        let _ = writeln!(s, "n_labeled = {}", self.n_labeled);
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let _ = writeln!(s, "{} = {:.6}", self.metric, self.global);
        if let Some(v) = self.rmse_db {
            let _ = writeln!(s, "rmse_db = {v:.6}");
        }
        if let Some(v) = self.derived_class_accuracy {
            let _ = writeln!(s, "derived_class_accuracy = {v:.6}");
        }
        if let Some(v) = self.baselines.constant_mean_r2 {
            let _ = writeln!(s, "baseline.constant_mean_r2 = {v:.6}");
        }
        if let (Some(c), Some(v)) = (
            self.baselines.majority_class,
            self.baselines.majority_class_accuracy,
        ) {
            let _ = writeln!(s, "baseline.majority_class = {}", c.name());
            let _ = writeln!(s, "baseline.majority_class_accuracy = {v:.6}");
        }
        match (&self.macro_average, &self.macro_note) {
            (Some(m), _) => {
                let _ = writeln!(s, "macro.coarse_factor = {}", m.coarse_factor);
                let _ = writeln!(s, "macro.{} = {:.6}", self.metric, m.mean);
                let _ = writeln!(s, "macro.areas = {}", m.areas.len());
                let _ = writeln!(s, "macro.excluded_areas = {}", m.excluded_areas);
                let _ = writeln!(s, "\n[areas]\narea\tn_test\t{}", self.metric);
                for a in &m.areas {
                    let _ = writeln!(s, "{}\t{}\t{:.6}", a.area, a.n_test, a.value);
                }
            }
            (None, Some(note)) => {
                let _ = writeln!(s, "macro = unavailable ({note})");
            }
            (None, None) => {}
        }
        if let Some(m) = &self.confusion {
            let _ = writeln!(
                s,
                "\n[confusion]\ntrue\\pred\t{}",
                CoverageClass::ALL.map(|c| c.name()).join("\t")
            );
            for (c, row) in CoverageClass::ALL.iter().zip(m) {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}\t{}", c.name(), cells.join("\t"));
            }
        }
        s
    }
}
