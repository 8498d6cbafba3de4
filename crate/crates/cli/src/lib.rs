//! `htgnn` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 training
//! divergence, 4 data or shape mismatch.

pub mod config;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use htgnn_core::checkpoint::{self, Dtype};
use htgnn_core::data::{
    generate_bearing_like, generate_bridge_like, BearingGenConfig, BridgeGenConfig, Dataset, DatasetKind,
    OperatingCondition, SensorWindow,
};
use htgnn_core::experiment;
use htgnn_core::model::{build_variant, Model, Normalizer, Variant};
use htgnn_core::signal::amplitude_spectrum;
use htgnn_core::train::{
    aggregate_runs, evaluate_by_category, evaluate_loss, train, AggregateCategory, CategoryKey, Metrics, TrainConfig,
};
use htgnn_core::Error;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DivergedLoss { .. } => 3,
            Error::InvalidConfig(_) | Error::InvalidVariant(_) | Error::InvalidStep(_) | Error::EmptyGrid => 2,
            Error::Io(_) => 1,
            _ => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::internal(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "htgnn", version, about = "Heterogeneous temporal graph networks for virtual sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    BearingLike,
    BridgeLike,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Bars,
    Timeline,
    Spectrum,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Generate {
        #[arg(long, value_enum)]
        dataset: DatasetArg,
        /// Generator overrides (JSON object).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant; several seeds give sibling `seed_<n>` directories.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: String,
        /// Seed or comma-separated seed list.
        #[arg(long, default_value = "0")]
        seed: String,
        #[arg(long)]
        out: PathBuf,
        /// `{"model": {...}, "train": {...}}` overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed of the train/val/test split.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Per-category metrics of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// speed, temperature or condition.
        #[arg(long)]
        by: Option<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Report path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-window true and predicted values as CSV.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Train ablation variants over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated seeds (at least two).
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variants; all ablation variants by default.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        by: Option<String>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Static SVG figures from reports.
    Plot {
        /// Ablation report (bars), predictions CSV (timeline) or dataset directory (spectrum).
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        /// Target column for timelines.
        #[arg(long, default_value_t = 0)]
        target: usize,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate {
            dataset,
            config,
            seed,
            out,
        } => cmd_generate(dataset, config.as_deref(), seed, &out),
        Command::Train {
            data,
            variant,
            seed,
            out,
            config,
            split_seed,
        } => cmd_train(&data, &variant, &parse_seeds(&seed)?, &out, config.as_deref(), split_seed),
        Command::Evaluate {
            checkpoint,
            data,
            by,
            split,
            split_seed,
            out,
            predictions,
        } => cmd_evaluate(&checkpoint, &data, by.as_deref(), split, split_seed, out.as_deref(), predictions.as_deref()),
        Command::Ablate {
            data,
            seeds,
            out,
            variants,
            config,
            by,
            split_seed,
        } => {
            let variants = match variants {
                Some(v) => v.split(',').map(parse_variant).collect::<Result<Vec<_>, _>>()?,
                None => Variant::ABLATION.to_vec(),
            };
            cmd_ablate(&data, &parse_seeds(&seeds)?, &variants, &out, config.as_deref(), by.as_deref(), split_seed)
        }
        Command::Plot {
            report,
            kind,
            out,
            target,
        } => {
            let kind = PlotKind::from_str(&kind, true).map_err(|_| {
                CliError::usage(format!("unknown plot kind `{kind}` (expected bars, timeline or spectrum)"))
            })?;
            cmd_plot(&report, kind, &out, target)
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let seeds = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|_| CliError::usage(format!("invalid seed `{t}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(CliError::usage("seed list is empty"));
    }
    Ok(seeds)
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    s.trim().parse::<Variant>().map_err(|e| CliError::usage(e.to_string()))
}

fn parse_key(by: Option<&str>, kind: DatasetKind) -> Result<CategoryKey, CliError> {
    match by {
        Some(s) => s.parse().map_err(|e: Error| CliError::usage(e.to_string())),
        None => Ok(experiment::default_category(kind)),
    }
}

/// Worker count from `HTGNN_THREADS`, default 1.
pub fn thread_count() -> usize {
    std::env::var("HTGNN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::internal)? + "\n";
    fs::write(path, text).map_err(io_err(path))
}

fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    Dataset::read(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

pub fn cmd_generate(dataset: DatasetArg, config: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    let patch = config.map(config::read_json).transpose()?;
    let ds = match dataset {
        DatasetArg::BearingLike => {
            let cfg = config::overlay(&BearingGenConfig::default(), patch.as_ref(), "generator")?;
            generate_bearing_like(&cfg, seed)?
        }
        DatasetArg::BridgeLike => {
            let cfg = config::overlay(&BridgeGenConfig::default(), patch.as_ref(), "generator")?;
            generate_bridge_like(&cfg, seed)?
        }
    };
    ds.write(out).map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;
    eprintln!(
        "wrote {} conditions, {} windows to {}",
        ds.series.len(),
        ds.windows()?.len(),
        out.display()
    );
    Ok(())
}

/// Deterministic part of a run report.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    pub split: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timing {
    pub runtime_s: f64,
}

fn seed_dirs(out: &Path, seeds: &[u64]) -> Vec<PathBuf> {
    if seeds.len() == 1 {
        vec![out.to_path_buf()]
    } else {
        seeds.iter().map(|s| out.join(format!("seed_{s}"))).collect()
    }
}

pub fn cmd_train(
    data: &Path,
    variant: &str,
    seeds: &[u64],
    out: &Path,
    config: Option<&Path>,
    split_seed: u64,
) -> Result<(), CliError> {
    let variant = parse_variant(variant)?;
    let ds = read_dataset(data)?;
    let kind = ds.manifest.kind;
    let (model_cfg, base_train) = config::run_configs(
        config,
        experiment::model_config(kind, variant),
        experiment::train_config(kind),
    )?;
    let split = ds.split(split_seed)?;
    let key = experiment::default_category(kind);
    for (&seed, dir) in seeds.iter().zip(seed_dirs(out, seeds)) {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let tcfg = TrainConfig { seed, ..base_train.clone() };
        let mut model = build_variant(&model_cfg, &ds.graph, seed)?;
        model.normalizer = Normalizer::fit(&split.train)?;
        let state = train(&mut model, &split.train, &split.val, &tcfg)?;
        checkpoint::save(&model, &dir.join("model.json"), Dtype::F64)?;
        let history = dir.join("history.csv");
        fs::write(&history, state.history_csv()).map_err(io_err(&history))?;
        let report = RunReport {
            variant,
            seed,
            split: "val".into(),
            epochs: state.epoch,
            best_epoch: state.stopping.best_epoch,
            stopped_early: state.stopped_early,
            loss: evaluate_loss(&model, &split.val, 256)?,
            metrics: evaluate_by_category(&model, &split.val, key, &ds.manifest.targets)?,
        };
        write_json(&dir.join("metrics.json"), &report)?;
        write_json(&dir.join("timing.json"), &Timing { runtime_s: state.seconds })?;
        eprintln!(
            "{} seed {seed}: {} epochs, val loss {:.5}, {:.1}s -> {}",
            variant.name(),
            state.epoch,
            report.loss,
            state.seconds,
            dir.display()
        );
    }
    Ok(())
}

fn select(ds: &Dataset, split: SplitArg, seed: u64) -> Result<Vec<SensorWindow>, CliError> {
    Ok(match split {
        SplitArg::All => ds.windows()?,
        s => {
            let parts = ds.split(seed)?;
            match s {
                SplitArg::Train => parts.train,
                SplitArg::Val => parts.val,
                _ => parts.test,
            }
        }
    })
}

fn check_compatible(model: &Model, ds: &Dataset, windows: &[SensorWindow]) -> Result<(), CliError> {
    if model.graph.to_json() != ds.manifest.graph {
        return Err(CliError::data("checkpoint graph does not match the dataset graph"));
    }
    if model.config.d_y != ds.manifest.targets.len() || model.config.n_exo != ds.manifest.exogenous.len() {
        return Err(CliError::data("checkpoint targets or exogenous variables do not match the dataset"));
    }
    for w in windows {
        model.check_window(w)?;
    }
    Ok(())
}

pub fn cmd_evaluate(
    checkpoint_path: &Path,
    data: &Path,
    by: Option<&str>,
    split: SplitArg,
    split_seed: u64,
    out: Option<&Path>,
    predictions: Option<&Path>,
) -> Result<(), CliError> {
    let model = checkpoint::load(checkpoint_path).map_err(|e| CliError::data(e.to_string()))?;
    let ds = read_dataset(data)?;
    let key = parse_key(by, ds.manifest.kind)?;
    let windows = select(&ds, split, split_seed)?;
    check_compatible(&model, &ds, &windows)?;
    let metrics = evaluate_by_category(&model, &windows, key, &ds.manifest.targets)?;
    if let Some(path) = predictions {
        let preds = model.predict(&windows)?;
        let mut w = csv::Writer::from_path(path).map_err(CliError::internal)?;
        let mut header = vec!["window".to_string(), "condition".into(), "start".into()];
        for t in &ds.manifest.targets {
            header.push(format!("{t}_true"));
            header.push(format!("{t}_pred"));
        }
        w.write_record(&header).map_err(CliError::internal)?;
        for (i, (win, p)) in windows.iter().zip(&preds).enumerate() {
            let mut row = vec![i.to_string(), win.meta.condition.to_string(), win.meta.start.to_string()];
            for (t, v) in win.y.iter().zip(p) {
                row.push(t.to_string());
                row.push(v.to_string());
            }
            w.write_record(&row).map_err(CliError::internal)?;
        }
        w.flush().map_err(CliError::internal)?;
    }
    let text = serde_json::to_string_pretty(&metrics).map_err(CliError::internal)? + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(io_err(path))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// One (variant, seed) cell of an ablation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationSummary {
    pub variant: String,
    pub runs: usize,
    pub categories: Vec<AggregateCategory>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub key: CategoryKey,
    pub targets: Vec<String>,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<AblationSummary>,
    pub failures: usize,
}

pub fn cmd_ablate(
    data: &Path,
    seeds: &[u64],
    variants: &[Variant],
    out: &Path,
    config: Option<&Path>,
    by: Option<&str>,
    split_seed: u64,
) -> Result<(), CliError> {
    if seeds.len() < 2 {
        return Err(CliError::usage("ablation needs at least two seeds"));
    }
    let ds = read_dataset(data)?;
    let kind = ds.manifest.kind;
    let key = parse_key(by, kind)?;
    let split = ds.split(split_seed)?;
    let mut cells = Vec::new();
    for &v in variants {
        let (m, t) = config::run_configs(config, experiment::model_config(kind, v), experiment::train_config(kind))?;
        for &s in seeds {
            cells.push((v, s, m.clone(), TrainConfig { seed: s, ..t.clone() }));
        }
    }

    let results: Mutex<BTreeMap<usize, AblationRow>> = Mutex::new(BTreeMap::new());
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..thread_count().min(cells.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some((v, seed, m, t)) = cells.get(i) else { break };
                let row = match experiment::run(&ds, &split, m, t, key) {
                    Ok(r) => {
                        eprintln!(
                            "{} seed {seed}: {} epochs, test loss {:.5}",
                            v.name(),
                            r.summary.epochs,
                            r.summary.test_loss
                        );
                        AblationRow {
                            variant: v.name().into(),
                            seed: *seed,
                            status: "ok".into(),
                            error: None,
                            epochs: Some(r.summary.epochs),
                            test_loss: Some(r.summary.test_loss),
                            metrics: Some(r.summary.metrics),
                        }
                    }
                    Err(e) => {
                        eprintln!("warning: {} seed {seed} failed: {e}", v.name());
                        AblationRow {
                            variant: v.name().into(),
                            seed: *seed,
                            status: "failed".into(),
                            error: Some(e.to_string()),
                            epochs: None,
                            test_loss: None,
                            metrics: None,
                        }
                    }
                };
                results.lock().unwrap().insert(i, row);
            });
        }
    });
    let rows: Vec<AblationRow> = results.into_inner().unwrap().into_values().collect();
    let failures = rows.iter().filter(|r| r.status != "ok").count();

    let mut summary = Vec::new();
    for &v in variants {
        let metrics: Vec<Metrics> = rows
            .iter()
            .filter(|r| r.variant == v.name())
            .filter_map(|r| r.metrics.clone())
            .collect();
        if metrics.is_empty() {
            continue;
        }
        summary.push(AblationSummary {
            variant: v.name().into(),
            runs: metrics.len(),
            categories: aggregate_runs(&metrics)?,
        });
    }
    let report = AblationReport {
        key,
        targets: ds.manifest.targets.clone(),
        seeds: seeds.to_vec(),
        rows,
        summary,
        failures,
    };
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_json(&out.join("report.json"), &report)?;
    write_summary_csv(&out.join("summary.csv"), &report)?;
    if failures > 0 {
        eprintln!("warning: {failures} of {} runs failed", report.rows.len());
    }
    Ok(())
}

fn write_summary_csv(path: &Path, report: &AblationReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::internal)?;
    w.write_record([
        "variant", "category", "target", "runs", "nrmse_mean", "nrmse_ci95", "mape_mean", "mape_ci95",
    ])
    .map_err(CliError::internal)?;
    for s in &report.summary {
        for c in &s.categories {
            for (k, t) in report.targets.iter().enumerate() {
                w.write_record([
                    s.variant.clone(),
                    c.category.clone(),
                    t.clone(),
                    s.runs.to_string(),
                    c.nrmse[k].mean.to_string(),
                    c.nrmse[k].ci95.to_string(),
                    c.mape[k].mean.to_string(),
                    c.mape[k].ci95.to_string(),
                ])
                .map_err(CliError::internal)?;
            }
        }
    }
    w.flush().map_err(CliError::internal)
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    out.with_file_name(format!("{stem}_{suffix}.svg"))
}

pub fn cmd_plot(report: &Path, kind: PlotKind, out: &Path, target: usize) -> Result<(), CliError> {
    match kind {
        PlotKind::Bars => {
            let text = fs::read_to_string(report).map_err(|e| CliError::usage(format!("{}: {e}", report.display())))?;
            let r: AblationReport =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", report.display())))?;
            let groups: Vec<String> = r
                .summary
                .first()
                .map(|s| s.categories.iter().map(|c| c.category.clone()).collect())
                .unwrap_or_default();
            for (k, t) in r.targets.iter().enumerate() {
                let series: Vec<svg::BarSeries> = r
                    .summary
                    .iter()
                    .map(|s| svg::BarSeries {
                        name: s.variant.clone(),
                        values: s.categories.iter().map(|c| (c.mape[k].mean, c.mape[k].ci95)).collect(),
                    })
                    .collect();
                let path = with_suffix(out, &t.replace(|c: char| !c.is_ascii_alphanumeric(), "_"));
                let svg = svg::grouped_bars(&format!("MAPE of {t} by {:?}", r.key), "MAPE [%]", &groups, &series);
                fs::write(&path, svg).map_err(io_err(&path))?;
            }
        }
        PlotKind::Timeline => {
            let mut rd = csv::Reader::from_path(report).map_err(|e| CliError::usage(format!("{}: {e}", report.display())))?;
            let header = rd.headers().map_err(|e| CliError::usage(e.to_string()))?.clone();
            let (ti, pi) = (3 + 2 * target, 4 + 2 * target);
            if pi >= header.len() {
                return Err(CliError::usage(format!("target {target} not in {}", report.display())));
            }
            let name = header[ti].trim_end_matches("_true").to_string();
            let (mut truth, mut pred) = (Vec::new(), Vec::new());
            for rec in rd.records() {
                let rec = rec.map_err(|e| CliError::usage(e.to_string()))?;
                let num = |i: usize| rec[i].parse::<f64>().map_err(|_| CliError::usage(format!("bad number `{}`", &rec[i])));
                let x = num(0)?;
                truth.push((x, num(ti)?));
                pred.push((x, num(pi)?));
            }
            let n = truth.len().max(1) as f64;
            let rmse = (truth.iter().zip(&pred).map(|(t, p)| (t.1 - p.1).powi(2)).sum::<f64>() / n).sqrt();
            let band: Vec<(f64, f64, f64)> = pred.iter().map(|&(x, y)| (x, y - 1.96 * rmse, y + 1.96 * rmse)).collect();
            let svg = svg::lines(
                &format!("{name}: true vs predicted (band ±1.96 RMSE)"),
                "window",
                &name,
                &[
                    svg::Line {
                        name: "true".into(),
                        points: truth,
                    },
                    svg::Line {
                        name: "predicted".into(),
                        points: pred,
                    },
                ],
                Some(&band),
            );
            fs::write(out, svg).map_err(io_err(out))?;
        }
        PlotKind::Spectrum => {
            let ds = read_dataset(report)?;
            let mut seen: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
            for s in &ds.series {
                let label = match s.condition {
                    OperatingCondition::Bearing { speed, .. } => speed.round() as i64,
                    OperatingCondition::Bridge { speed_class, .. } => speed_class as i64,
                };
                if seen.contains_key(&label) || s.x_h.rows() == 0 {
                    continue;
                }
                let spec = amplitude_spectrum(s.x_h.row(0));
                let n = s.x_h.cols() as f64;
                seen.insert(label, spec.iter().enumerate().map(|(k, a)| (k as f64 / n, *a)).collect());
            }
            let unit = match ds.manifest.kind {
                DatasetKind::BearingLike => "speed",
                DatasetKind::BridgeLike => "speed class",
            };
            let lines: Vec<svg::Line> = seen
                .into_iter()
                .map(|(k, points)| svg::Line {
                    name: format!("{unit} {k}"),
                    points,
                })
                .collect();
            let svg = svg::lines(
                "Amplitude spectrum of the first H sensor",
                "frequency [cycles/sample]",
                "amplitude",
                &lines,
                None,
            );
            fs::write(out, svg).map_err(io_err(out))?;
        }
    }
    Ok(())
}
