//! `hexrem` command-line front end.
//!
//! Every failure ends with one stderr line `error: kind=<kind> msg=<text>`
//! and a nonzero exit status.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hexrem::eval::EvalReport;
use hexrem::export::{geojson, predictions_csv};
use hexrem::ingest::TimeWindow;
use hexrem::pipeline::{self, DataFiles, IngestSummary, ModelFile, PipelineConfig, RawData};
use hexrem::synth::generate_scenario;
use hexrem::{Error, Result};

use config::{CommonArgs, ConfigFile, DataArgs, DataSection, PipelineArgs, ScenarioArgs};

#[derive(Debug, Parser)]
#[command(
    name = "hexrem",
    version,
    about = "Radio environment maps on a hexagonal tile graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground truth.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Train a model and report held-out metrics.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Estimate every tile of the region with a trained model.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Recompute the held-out report of a trained model.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write estimates as GeoJSON hexagons.
    ExportGeojson {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// 1-based window index.
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Train and evaluate over a grid of k_level, edge length and hidden widths.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Comma-separated k levels.
        #[arg(long, value_delimiter = ',')]
        k_levels: Option<Vec<u32>>,
        /// Comma-separated edge lengths in metres.
        #[arg(long, value_delimiter = ',')]
        edge_lens_m: Option<Vec<f64>>,
        /// Hidden width lists separated by `;`, e.g. `64;128;64,64`.
        #[arg(long)]
        hidden_grid: Option<String>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Synth { common, .. }
            | Command::Train { common, .. }
            | Command::Predict { common, .. }
            | Command::Evaluate { common, .. }
            | Command::ExportGeojson { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report_summary(summary: &IngestSummary) {
    eprintln!(
        "ingest: measurement_rejects={} cell_rejects={} tile_rejects={} unmatched_measurements={} before_window_start={}",
        summary.measurement_rejects.len(),
        summary.cell_rejects.len(),
        summary.tile_rejects.len(),
        summary.unmatched_measurements,
        summary.before_window_start
    );
}

fn rejects_csv(summary: &IngestSummary) -> String {
    let mut s = String::from("file,line,reason\n");
    for (file, rejects) in [
        ("measurements", &summary.measurement_rejects),
        ("cells", &summary.cell_rejects),
        ("tiles", &summary.tile_rejects),
    ] {
        for r in rejects {
            let _ = writeln!(
                s,
                "{file},{},\"{}\"",
                r.line,
                r.reason.to_string().replace('"', "\"\"")
            );
        }
    }
    s
}

fn report_stem(reports: &[(TimeWindow, EvalReport)], w: &TimeWindow) -> String {
    if reports.len() == 1 {
        "report".into()
    } else {
        format!("report-w{}", w.index)
    }
}

fn write_reports(dir: &Path, reports: &[(TimeWindow, EvalReport)]) -> Result<()> {
    for (w, r) in reports {
        let stem = report_stem(reports, w);
        write(&dir.join(format!("{stem}.json")), r.to_json()?)?;
        write(&dir.join(format!("{stem}.txt")), r.to_text())?;
        println!(
            "window={} {}={:.6} n_test={} task={:?} arch={:?}",
            w.index, r.metric, r.global, r.n_test, r.task, r.architecture
        );
    }
    Ok(())
}

fn history_csv(model: &ModelFile) -> String {
    let mut s = String::from("window,epoch,train_loss,val_loss\n");
    for wm in &model.models {
        for h in &wm.history {
            let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{val}", wm.window.index, h.epoch, h.train_loss);
        }
    }
    s
}

fn load_data(files: &DataFiles) -> Result<RawData> {
    let raw = pipeline::load(files)?;
    report_summary(&raw.summary);
    Ok(raw)
}

fn model_path(flag: &Option<PathBuf>, data: &DataSection) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| data.model.clone())
        .ok_or_else(|| Error::Config("no model file: pass --model or set [data] model".into()))
}

/// Loads the model and checks that `--seed`, if given, agrees with it.
fn load_model(path: &Path, seed: Option<u64>) -> Result<ModelFile> {
    let model = ModelFile::load(path)?;
    if let Some(s) = seed {
        if s != model.config.seed {
            return Err(Error::Config(format!(
                "--seed {s} differs from the model's seed {}; the split is fixed at training time",
                model.config.seed
            )));
        }
    }
    Ok(model)
}

fn cmd_synth(common: &CommonArgs, file: ConfigFile, args: &ScenarioArgs) -> Result<()> {
    let scenario = args.apply(file.scenario, common.seed);
    let s = generate_scenario(&scenario)?;
    create_out_dir(&common.out_dir)?;
    s.write_to(&common.out_dir)?;
    let run_config = ConfigFile {
        data: DataSection {
            dir: Some(".".into()),
            ..Default::default()
        },
        pipeline: PipelineConfig {
            origin_lat: scenario.origin_lat,
            origin_lon: scenario.origin_lon,
            edge_len_m: scenario.edge_len_m,
            region_radius_m: Some(scenario.region_radius_m),
            seed: scenario.seed,
            ..Default::default()
        },
        scenario: scenario.clone(),
        ..Default::default()
    };
    write(&common.out_dir.join("config.toml"), run_config.to_toml()?)?;
    println!(
        "cells={} measurements={} tiles={} labeled_tiles={} seed={}",
        s.cells.len(),
        s.measurements.len(),
        s.truth.len(),
        s.labeled_tiles.len(),
        scenario.seed
    );
    Ok(())
}

fn cmd_train(
    common: &CommonArgs,
    file: ConfigFile,
    data: &DataArgs,
    args: &PipelineArgs,
) -> Result<()> {
    let cfg = args.apply(file.pipeline, common.seed);
    cfg.validate()?;
    let raw = load_data(&data.resolve(&file.data)?)?;
    let run = pipeline::train_and_evaluate(&raw, &cfg)?;
    create_out_dir(&common.out_dir)?;
    run.model.save(&common.out_dir.join("model.json"))?;
    write(&common.out_dir.join("history.csv"), history_csv(&run.model))?;
    write(
        &common.out_dir.join("rejects.csv"),
        rejects_csv(&run.summary),
    )?;
    write_reports(&common.out_dir, &run.reports)
}

fn cmd_evaluate(
    common: &CommonArgs,
    file: ConfigFile,
    data: &DataArgs,
    model: &Option<PathBuf>,
) -> Result<()> {
    let model = load_model(&model_path(model, &file.data)?, common.seed)?;
    let raw = load_data(&data.resolve(&file.data)?)?;
    let reports = pipeline::evaluate(&model, &raw)?;
    create_out_dir(&common.out_dir)?;
    write_reports(&common.out_dir, &reports)
}

fn cmd_predict(
    common: &CommonArgs,
    file: ConfigFile,
    data: &DataArgs,
    model: &Option<PathBuf>,
) -> Result<()> {
    let model = load_model(&model_path(model, &file.data)?, common.seed)?;
    let raw = load_data(&data.resolve(&file.data)?)?;
    let est = pipeline::predict(&model, &raw)?;
    create_out_dir(&common.out_dir)?;
    write(
        &common.out_dir.join("predictions.csv"),
        predictions_csv(&model.grid, &est),
    )?;
    let n: usize = est.values().map(Vec::len).sum();
    println!("windows={} rows={n}", est.len());
    Ok(())
}

fn cmd_export(
    common: &CommonArgs,
    file: ConfigFile,
    data: &DataArgs,
    model: &Option<PathBuf>,
    window: usize,
) -> Result<()> {
    let model = load_model(&model_path(model, &file.data)?, common.seed)?;
    let raw = load_data(&data.resolve(&file.data)?)?;
    let est = pipeline::predict(&model, &raw)?;
    let (_, tiles) = est.iter().find(|(w, _)| w.index == window).ok_or_else(|| {
        Error::Argument(format!(
            "window {window} not present ({} windows)",
            est.len()
        ))
    })?;
    create_out_dir(&common.out_dir)?;
    let body = serde_json::to_string(&geojson(&model.grid, tiles))?;
    write(&common.out_dir.join("map.geojson"), body + "\n")?;
    println!("features={}", tiles.len());
    Ok(())
}

fn parse_hidden_grid(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|g| {
            g.split(',')
                .map(|w| {
                    w.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Argument(format!("hidden grid `{g}`: {e}")))
                })
                .collect()
        })
        .collect()
}

fn cmd_sweep(
    common: &CommonArgs,
    file: ConfigFile,
    data: &DataArgs,
    args: &PipelineArgs,
    grid: (&Option<Vec<u32>>, &Option<Vec<f64>>, &Option<String>),
) -> Result<()> {
    let base = args.apply(file.pipeline, common.seed);
    base.validate()?;
    let k_levels = grid.0.clone().unwrap_or(file.sweep.k_levels);
    let edges = grid.1.clone().unwrap_or(file.sweep.edge_lens_m);
    let hidden = match grid.2 {
        Some(s) => parse_hidden_grid(s)?,
        None => file.sweep.hidden_dims,
    };
    if k_levels.is_empty() || edges.is_empty() || hidden.is_empty() {
        return Err(Error::Config("sweep grid has an empty axis".into()));
    }
    let raw = load_data(&data.resolve(&file.data)?)?;
    let mut out = String::from("k_level,edge_len_m,hidden_dims,metric,global,macro,baseline\n");
    for &k in &k_levels {
        for &edge in &edges {
            for h in &hidden {
                let cfg = PipelineConfig {
                    k_level: k,
                    edge_len_m: edge,
                    hidden_dims: Some(h.clone()),
                    ..base.clone()
                };
                let run = pipeline::train_and_evaluate(&raw, &cfg)?;
                let dims: Vec<String> = h.iter().map(|d| d.to_string()).collect();
                for (_, r) in &run.reports {
                    let macro_v = r
                        .macro_average
                        .as_ref()
                        .map(|m| m.mean.to_string())
                        .unwrap_or_default();
                    let baseline = r
                        .baselines
                        .constant_mean_r2
                        .or(r.baselines.majority_class_accuracy)
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{k},{edge},{},{},{},{macro_v},{baseline}",
                        dims.join(" "),
                        r.metric,
                        r.global
                    );
                    println!(
                        "k_level={k} edge_len_m={edge} hidden={} {}={:.6}",
                        dims.join(","),
                        r.metric,
                        r.global
                    );
                }
            }
        }
    }
    create_out_dir(&common.out_dir)?;
    write(&common.out_dir.join("sweep.csv"), out)
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let file = ConfigFile::load_or_default(common.config.as_deref())?;
    match &cli.command {
        Command::Synth { common, scenario } => cmd_synth(common, file, scenario),
        Command::Train {
            common,
            data,
            pipeline,
        } => cmd_train(common, file, data, pipeline),
        Command::Predict {
            common,
            data,
            model,
        } => cmd_predict(common, file, data, model),
        Command::Evaluate {
            common,
            data,
            model,
        } => cmd_evaluate(common, file, data, model),
        Command::ExportGeojson {
            common,
            data,
            model,
            window,
        } => cmd_export(common, file, data, model, *window),
        Command::Sweep {
            common,
            data,
            pipeline,
            k_levels,
            edge_lens_m,
            hidden_grid,
        } => cmd_sweep(
            common,
            file,
            data,
            pipeline,
            (k_levels, edge_lens_m, hidden_grid),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            eprintln!(
                "error: kind=usage msg={}",
                one_line(msg.strip_prefix("error: ").unwrap_or(&msg))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} msg={}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
