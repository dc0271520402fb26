//! Acceptance gate: one PASS/FAIL line per criterion; exits non-zero when
//! any hard criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hexrem::eval::EvalReport;
use hexrem::features::{bearing_deg, classify_rsrp, distance_m, CoverageClass};
use hexrem::graph::{build_tile_graph, normalized_adjacency};
use hexrem::hexgrid::{
    cell_centroid, k_ring, neighbors, point_to_cell, GeoPoint, GridConfig, HexCellId,
};
use hexrem::ingest::{parse_cell_inventory, parse_measurements, RejectReason};
use hexrem::nn::{Architecture, Task};
use hexrem::pipeline::{self, DataFiles, PipelineConfig, RawData};
use hexrem::synth::{generate_scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scenario seed, also used as the pipeline seed.
const SEED: u64 = 7;
/// Values from the first oracle-verified run of the fixed scenario.
const FROZEN_GCN_R2: f64 = 0.8392;
const FROZEN_GCN_ACCURACY: f64 = 0.8857;
const FROZEN_TOL: f64 = 0.02;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    ensure!(s < limit_s, "took {s:.2} s, limit {limit_s} s");
    Ok(())
}

fn c1_grid() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = GridConfig::new(GeoPoint::new(59.33, 18.06).unwrap(), 200.0).unwrap();
    for _ in 0..100 {
        let c = HexCellId::new(rng.random_range(-1000..1000), rng.random_range(-1000..1000));
        for k in 0..=10i64 {
            let n = k_ring(c, k).unwrap().len() as i64;
            ensure!(n == 1 + 3 * k * (k + 1), "k_ring({c}, {k}) has {n} cells");
        }
        ensure!(
            point_to_cell(&grid, &cell_centroid(&grid, c)) == c,
            "centroid of {c} maps elsewhere"
        );
        for n in neighbors(c) {
            ensure!(
                neighbors(n).contains(&c),
                "{n} does not list {c} as a neighbor"
            );
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "100 cells, k=0..10, {:.3} s",
        start.elapsed().as_secs_f64()
    ))
}

fn c2_geodesy() -> Outcome {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/data/geodesy_oracle.csv"
    );
    let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    let (mut worst_d, mut worst_b, mut n) = (0.0f64, 0.0f64, 0);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let (a, b) = (
            GeoPoint::new(v[0], v[1]).unwrap(),
            GeoPoint::new(v[2], v[3]).unwrap(),
        );
        worst_d = worst_d.max((distance_m(&a, &b) - v[4]).abs() / v[4]);
        let diff = (bearing_deg(&a, &b).deg - v[5]).abs();
        worst_b = worst_b.max(diff.min(360.0 - diff) / v[5]);
        n += 1;
    }
    ensure!(n == 1000, "oracle has {n} rows");
    ensure!(
        worst_d < 1e-6 && worst_b < 1e-6,
        "relative errors {worst_d:e} (distance), {worst_b:e} (bearing)"
    );
    let p = |lat, lon| GeoPoint::new(lat, lon).unwrap();
    let degree = distance_m(&p(0.0, 0.0), &p(1.0, 0.0));
    ensure!(
        (degree - 111_195.0).abs() <= 1.0,
        "1 degree of latitude is {degree} m"
    );
    let north = bearing_deg(&p(48.0, 2.0), &p(49.0, 2.0)).deg;
    ensure!(north == 0.0, "due north is {north}");
    let east = bearing_deg(&p(0.0, 0.0), &p(0.0, 1.0)).deg;
    ensure!((east - 90.0).abs() < 1e-12, "due east is {east}");
    Ok(format!(
        "max relative error {worst_d:.1e} distance, {worst_b:.1e} bearing; 1 deg = {degree:.3} m"
    ))
}

fn c3_classes() -> Outcome {
    use CoverageClass::*;
    for (v, c) in [
        (-121.0, VeryWeak),
        (-110.0, Weak),
        (-95.0, Average),
        (-80.0, Good),
    ] {
        ensure!(classify_rsrp(v) == c, "{v} dBm -> {:?}", classify_rsrp(v));
    }
    for (edge, class) in [(-120.0, Weak), (-105.0, Average), (-90.0, Good)] {
        ensure!(
            classify_rsrp(edge) == class,
            "cut point {edge} -> {:?}",
            classify_rsrp(edge)
        );
    }
    let mut prev = classify_rsrp(-200.0);
    for i in 0..=20_000 {
        let c = classify_rsrp(-200.0 + i as f64 * 0.01);
        ensure!(c >= prev, "not monotone near {}", -200.0 + i as f64 * 0.01);
        prev = c;
    }
    Ok("-121/-110/-95/-80 dBm and cut points -120/-105/-90 classify as expected; monotone".into())
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut kinked = 0;
    for arch in [Architecture::Gcn, Architecture::Fcn] {
        for task in [Task::Regression, Task::Classification] {
            for seed in 0..10 {
                let g = support::gradient_check(&support::grad_problem(arch, task, seed));
                ensure!(
                    g.rel_error < 1e-4,
                    "{arch:?}/{task:?} seed {seed}: relative error {:e}",
                    g.rel_error
                );
                ensure!(
                    g.n_kinked * 20 <= g.n_params,
                    "{arch:?}/{task:?} seed {seed}: {} kinked",
                    g.n_kinked
                );
                worst = worst.max(g.rel_error);
                kinked += g.n_kinked;
            }
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "40 checks, max relative error {worst:.1e}, {kinked} ReLU-kink parameters skipped, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn c5_adjacency() -> Outcome {
    let g = build_tile_graph(&[HexCellId::new(0, 0), HexCellId::new(0, 1)], 1).unwrap();
    let a = normalized_adjacency(&g).matrix.to_dense();
    ensure!(
        a.data().iter().all(|v| (v - 0.5).abs() < 1e-12),
        "2-node operator {:?}",
        a.data()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=50);
        let k = rng.random_range(1..=3);
        let g = support::random_graph(&mut rng, n, 5, k);
        let dense = support::dense_adjacency(&g);
        let diff = support::max_abs_diff(&normalized_adjacency(&g), &dense);
        ensure!(
            diff < 1e-12,
            "operator differs from dense oracle by {diff:e}"
        );
        let rho = support::spectral_radius(&dense);
        ensure!(rho <= 1.0 + 1e-9, "spectral radius {rho}");
        worst = worst.max(rho);
    }
    Ok(format!(
        "2-node closed form exact; max spectral radius {worst:.12} over 20 graphs"
    ))
}

fn scenario_config(seed: u64) -> PipelineConfig {
    let s = ScenarioConfig::default();
    PipelineConfig {
        origin_lat: s.origin_lat,
        origin_lon: s.origin_lon,
        edge_len_m: s.edge_len_m,
        region_radius_m: Some(s.region_radius_m),
        seed,
        ..PipelineConfig::default()
    }
}

fn run(raw: &RawData, arch: Architecture, task: Task) -> Result<EvalReport, String> {
    let cfg = PipelineConfig {
        architecture: arch,
        task,
        ..scenario_config(SEED)
    };
    let mut run = pipeline::train_and_evaluate(raw, &cfg).map_err(|e| e.to_string())?;
    ensure!(run.reports.len() == 1, "expected one pooled window");
    Ok(run.reports.remove(0).1)
}

/// Also returns the GCN regression R2 for reuse by criterion 7.
fn c6_benchmark(raw: &RawData) -> (Outcome, Option<f64>) {
    let start = Instant::now();
    let reg = match run(raw, Architecture::Gcn, Task::Regression) {
        Ok(r) => r,
        Err(e) => return (Err(e), None),
    };
    let r2 = Some(reg.global);
    let cls = match run(raw, Architecture::Gcn, Task::Classification) {
        Ok(r) => r,
        Err(e) => return (Err(e), r2),
    };
    let elapsed = start.elapsed();
    let baseline = reg.baselines.constant_mean_r2.unwrap_or(f64::NAN);
    let majority = cls.baselines.majority_class_accuracy.unwrap_or(f64::NAN);
    let summary = format!(
        "GCN R2 {:.4} (constant-mean {baseline:.4}); accuracy {:.4} (majority {majority:.4}, margin {:.4}); n_test {}; {:.1} s",
        reg.global,
        cls.global,
        cls.global - majority,
        reg.n_test,
        elapsed.as_secs_f64()
    );
    let fail = |why: String| (Err(format!("{summary}: {why}")), r2);
    if reg.global < 0.6 {
        return fail("R2 below 0.6".into());
    }
    if reg.global <= baseline {
        return fail("R2 does not exceed the constant-mean baseline".into());
    }
    if cls.global < 0.75 {
        return fail("accuracy below 0.75".into());
    }
    // 1e-12 absorbs rounding in `majority + 0.10`
    if cls.global < majority + 0.10 - 1e-12 {
        return fail("accuracy not 0.10 above the majority-class baseline".into());
    }
    if (reg.global - FROZEN_GCN_R2).abs() > FROZEN_TOL
        || (cls.global - FROZEN_GCN_ACCURACY).abs() > FROZEN_TOL
    {
        return fail(format!(
            "drifted from frozen values R2 {FROZEN_GCN_R2}, accuracy {FROZEN_GCN_ACCURACY}"
        ));
    }
    if elapsed.as_secs_f64() >= 60.0 {
        return fail("over 60 s".into());
    }
    (Ok(summary), r2)
}

fn c7_ordering(raw: &RawData, gcn_r2: Option<f64>) -> Outcome {
    let gcn = match gcn_r2 {
        Some(v) => v,
        None => run(raw, Architecture::Gcn, Task::Regression)?.global,
    };
    let fcn = run(raw, Architecture::Fcn, Task::Regression)?.global;
    ensure!(
        gcn >= fcn - 0.02,
        "GCN R2 {gcn:.4} < FCN R2 {fcn:.4} - 0.02"
    );
    Ok(format!("GCN R2 {gcn:.4} vs FCN R2 {fcn:.4}"))
}

fn hexrem(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_hexrem"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn c8_determinism(data: &Path, root: &Path) -> Outcome {
    let cfg = data.join("config.toml");
    let mut outputs = Vec::new();
    for (name, threads) in [("t1a", "1"), ("t1b", "1"), ("t4", "4")] {
        let out = root.join(name);
        let o = hexrem(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ])?;
        ensure!(
            o.status.success(),
            "train --threads {threads}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let read = |f: &str| fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((
            read("model.json")?,
            read("report.json")?,
            read("report.txt")?,
        ));
    }
    ensure!(outputs[0] == outputs[1], "two single-thread runs differ");
    ensure!(
        outputs[0] == outputs[2],
        "--threads 1 and --threads 4 differ"
    );
    Ok(format!(
        "model.json ({} bytes) and reports bit-identical across 3 runs",
        outputs[0].0.len()
    ))
}

fn c9_ingest(data: &Path, raw: &RawData, root: &Path) -> Outcome {
    ensure!(
        raw.summary.total() == 0,
        "synth output re-ingested with {} rejects",
        raw.summary.total()
    );
    ensure!(
        raw.summary.unmatched_measurements == 0,
        "{} unmatched measurements",
        raw.summary.unmatched_measurements
    );

    let measurements =
        fs::read_to_string(data.join("measurements.csv")).map_err(|e| e.to_string())?;
    let column = |name: &str| {
        measurements
            .lines()
            .next()
            .unwrap()
            .split(',')
            .position(|h| h == name)
            .unwrap()
    };
    let (lat, rsrp) = (column("lat"), column("rsrp"));
    let bad_lat: String = measurements
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 1 {
                let mut f: Vec<&str> = l.split(',').collect();
                f[lat] = "95.0";
                f.join(",") + "\n"
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let parsed = parse_measurements(bad_lat.as_bytes()).map_err(|e| e.to_string())?;
    ensure!(
        parsed.rejects.len() == 1 && parsed.rejects[0].reason == RejectReason::LatitudeOutOfRange,
        "bad latitude gave {:?}",
        parsed.rejects
    );

    let cells = fs::read_to_string(data.join("cells.csv")).map_err(|e| e.to_string())?;
    let dup = format!("{cells}{}\n", cells.lines().nth(1).unwrap());
    let dup_kind = parse_cell_inventory(dup.as_bytes()).err().map(|e| e.kind());
    ensure!(
        dup_kind == Some("duplicate_cell_id"),
        "duplicate cell id gave {dup_kind:?}"
    );

    let cut: String = measurements
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(rsrp);
            f.join(",") + "\n"
        })
        .collect();
    let missing_kind = parse_measurements(cut.as_bytes()).err().map(|e| e.kind());
    ensure!(
        missing_kind == Some("missing_column"),
        "missing rsrp column gave {missing_kind:?}"
    );

    let mutated = root.join("mutated");
    fs::create_dir_all(&mutated).map_err(|e| e.to_string())?;
    fs::write(mutated.join("measurements.csv"), &measurements).map_err(|e| e.to_string())?;
    fs::write(mutated.join("cells.csv"), &dup).map_err(|e| e.to_string())?;
    let o = hexrem(&[
        "train",
        "--data-dir",
        mutated.to_str().unwrap(),
        "--out-dir",
        root.join("m").to_str().unwrap(),
    ])?;
    let line = String::from_utf8_lossy(&o.stderr)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string();
    ensure!(
        o.status.code() == Some(1) && line.starts_with("error: kind=duplicate_cell_id msg="),
        "cli reported {line:?}"
    );
    Ok("0 rejects on synth output; latitude_out_of_range / duplicate_cell_id / missing_column as documented".into())
}

fn main() -> ExitCode {
    let tmp = tempfile::TempDir::new().expect("temp dir");
    let data = tmp.path().join("scenario");
    let scenario = ScenarioConfig {
        seed: SEED,
        ..ScenarioConfig::default()
    };
    let raw = generate_scenario(&scenario)
        .and_then(|s| s.write_to(&data))
        .and_then(|()| pipeline::load(&DataFiles::in_dir(&data)));
    let raw = match raw {
        Ok(r) => r,
        Err(e) => {
            println!("setup FAIL: {e}");
            return ExitCode::FAILURE;
        }
    };
    let cfg_toml = format!(
        "[data]\ndir = \".\"\n\n[pipeline]\norigin_lat = {}\norigin_lon = {}\nedge_len_m = {}\nregion_radius_m = {}\nseed = {SEED}\n",
        scenario.origin_lat, scenario.origin_lon, scenario.edge_len_m, scenario.region_radius_m
    );
    fs::write(data.join("config.toml"), cfg_toml).expect("config");

    let mut hard_failures = 0;
    let mut report = |n: u32, soft: bool, o: Outcome| match o {
        Ok(msg) => println!("criterion {n} PASS: {msg}"),
        Err(msg) if soft => println!("criterion {n} FAIL (soft, warning only): {msg}"),
        Err(msg) => {
            hard_failures += 1;
            println!("criterion {n} FAIL: {msg}");
        }
    };
    report(1, false, c1_grid());
    report(2, false, c2_geodesy());
    report(3, false, c3_classes());
    report(4, false, c4_gradients());
    report(5, false, c5_adjacency());
    let (c6, gcn_r2) = c6_benchmark(&raw);
    report(6, false, c6);
    report(7, true, c7_ordering(&raw, gcn_r2));
    report(8, false, c8_determinism(&data, tmp.path()));
    report(9, false, c9_ingest(&data, &raw, tmp.path()));
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{hard_failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
