//! Synthetic sensor streams, preprocessing, windowing and splits.
//!
//! Two generators stand in for the case studies:
//!
//! * bearing-like: a grid of (axial load, radial load, speed) conditions.
//!   Vibration is a harmonic series whose fundamental follows the speed and
//!   whose amplitude falls with axial load. Temperature rates follow
//!   `c · s · (F_x + F_y · z_i)` where `z_i` peaks in the radial load zone, so
//!   only the temperature field carries the radial load.
//! * bridge-like: train passages over several days. Displacements follow the
//!   load, accelerations ring at modal frequencies that rise with
//!   temperature.
//!
//! Low-frequency channels are produced at a reduced rate and upsampled by
//! linear interpolation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BearingLayout, BridgeLayout, GraphJson, HeteroTemporalGraph, NodeType, T_IR};
use crate::tensor::Matrix;

pub const GENERATOR_VERSION: &str = "1";

/// Exogenous settings and targets of one generated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatingCondition {
    Bearing {
        /// Axial load in kN.
        f_x: f64,
        /// Radial load in kN.
        f_y: f64,
        /// Rotational speed in r/min.
        speed: f64,
    },
    Bridge {
        /// Train load in kg.
        load: f64,
        speed_class: usize,
        speed: f64,
        /// Ambient temperature in °C.
        temperature: f64,
        day: u32,
        run: u32,
    },
}

/// Synchronized channels of one condition or run.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub condition: OperatingCondition,
    /// Grouping key for splits: condition id or day.
    pub group: u32,
    pub x_l: Matrix,
    pub x_h: Matrix,
    pub w: Matrix,
    /// One row per target.
    pub y: Matrix,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.y.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Provenance of a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    /// Index of the source series.
    pub condition: usize,
    pub group: u32,
    /// First time index of the window within its series.
    pub start: usize,
    pub speed: Option<f64>,
    pub temperature: Option<f64>,
}

/// One sample: sensor windows, context window and target.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorWindow {
    /// `N_L × L`
    pub x_l: Matrix,
    /// `N_H × L`
    pub x_h: Matrix,
    /// `N_w × L`
    pub w: Matrix,
    pub y: Vec<f64>,
    pub meta: WindowMeta,
}

fn check_snr(snr_db: f64) -> Result<()> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    Ok(())
}

/// Adds white Gaussian noise with power `P_signal / 10^(snr_db/10)`.
///
/// `snr_db = +inf` returns the series unchanged.
pub fn add_noise(series: &[f64], snr_db: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_snr(snr_db)?;
    if snr_db == f64::INFINITY {
        return Ok(series.to_vec());
    }
    let power = series.iter().map(|x| x * x).sum::<f64>() / series.len().max(1) as f64;
    if power <= 0.0 {
        return Err(Error::ZeroPowerSignal);
    }
    let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Ok(series.iter().map(|x| x + normal.sample(rng)).collect())
}

/// Centered moving average with the window clipped at the ends.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let n = series.len();
    let before = (window.max(1) - 1) / 2;
    let after = window.max(1) / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Moving average followed by the change per sample over `horizon` samples.
///
/// The first `horizon` entries repeat the first available rate.
pub fn preprocess_low_freq(series: &[f64], ma_window: usize, horizon: usize) -> Result<Vec<f64>> {
    let required = ma_window + horizon + 1;
    if series.len() < required {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            required,
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("rate horizon must be positive".into()));
    }
    let m = moving_average(series, ma_window);
    let h = horizon as f64;
    let first = (m[horizon] - m[0]) / h;
    Ok((0..m.len())
        .map(|t| if t < horizon { first } else { (m[t] - m[t - horizon]) / h })
        .collect())
}

/// Linear interpolation of a coarse series sampled every `ratio` steps.
pub fn upsample_linear(coarse: &[f64], ratio: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let pos = t as f64 / ratio as f64;
            let i = (pos.floor() as usize).min(coarse.len() - 1);
            let j = (i + 1).min(coarse.len() - 1);
            let frac = pos - i as f64;
            coarse[i] * (1.0 - frac.min(1.0)) + coarse[j] * frac.min(1.0)
        })
        .collect()
}

/// Number of windows of length `len` with the given stride.
pub fn window_count(n: usize, len: usize, stride: usize) -> usize {
    if n < len || stride == 0 {
        0
    } else {
        (n - len) / stride + 1
    }
}

fn cols(m: &Matrix, start: usize, len: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), len);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
    }
    out
}

/// Sliding windows over one series; targets are taken at each window's last index.
pub fn window_dataset(series: &RawSeries, condition: usize, len: usize, stride: usize) -> Result<Vec<SensorWindow>> {
    if len == 0 || stride == 0 {
        return Err(Error::InvalidConfig("window length and stride must be positive".into()));
    }
    let n = series.len();
    if n < len {
        return Err(Error::SeriesTooShort { len: n, required: len });
    }
    let (speed, temperature) = match series.condition {
        OperatingCondition::Bearing { speed, .. } => (Some(speed), None),
        OperatingCondition::Bridge { temperature, speed, .. } => (Some(speed), Some(temperature)),
    };
    Ok((0..window_count(n, len, stride))
        .map(|k| {
            let start = k * stride;
            let last = start + len - 1;
            SensorWindow {
                x_l: cols(&series.x_l, start, len),
                x_h: cols(&series.x_h, start, len),
                w: cols(&series.w, start, len),
                y: (0..series.y.rows()).map(|r| series.y.get(r, last)).collect(),
                meta: WindowMeta {
                    condition,
                    group: series.group,
                    start,
                    speed,
                    temperature,
                },
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Leading part of every condition for training and validation.
    Bearing,
    /// Odd days for training and validation, even days for testing.
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    /// Share of each group used for training and validation (bearing mode).
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Windows dropped between the training part and the test part.
    pub purge: usize,
    pub min_group: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::Bearing,
            train_fraction: 0.5,
            val_fraction: 0.2,
            purge: 0,
            min_group: 5,
        }
    }
}

impl SplitConfig {
    pub fn new(mode: SplitMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Split {
    pub train: Vec<SensorWindow>,
    pub val: Vec<SensorWindow>,
    pub test: Vec<SensorWindow>,
}

/// Temporal train/validation/test split by group.
pub fn temporal_split(windows: Vec<SensorWindow>, config: &SplitConfig, seed: u64) -> Result<Split> {
    let mut groups: BTreeMap<u32, Vec<SensorWindow>> = BTreeMap::new();
    for w in windows {
        groups.entry(w.meta.group).or_default().push(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split::default();
    for (key, mut list) in groups {
        if list.len() < config.min_group {
            return Err(Error::GroupTooSmall {
                key,
                len: list.len(),
                min: config.min_group,
            });
        }
        list.sort_by_key(|w| (w.meta.condition, w.meta.start));
        let n = list.len();
        let (pool, test) = match config.mode {
            SplitMode::Bearing => {
                let n_tv = ((n as f64 * config.train_fraction).floor() as usize).min(n);
                let mut rest = list.split_off(n_tv);
                let drop = config.purge.min(rest.len());
                (list, rest.split_off(drop))
            }
            SplitMode::Bridge if key % 2 == 1 => (list, Vec::new()),
            SplitMode::Bridge => (Vec::new(), list),
        };
        let n_val = (pool.len() as f64 * config.val_fraction).round() as usize;
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let mut is_val = vec![false; pool.len()];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        for (w, v) in pool.into_iter().zip(is_val) {
            if v {
                split.val.push(w);
            } else {
                split.train.push(w);
            }
        }
        split.test.extend(test);
    }
    Ok(split)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    BearingLike,
    BridgeLike,
}

impl DatasetKind {
    pub fn split_mode(self) -> SplitMode {
        match self {
            DatasetKind::BearingLike => SplitMode::Bearing,
            DatasetKind::BridgeLike => SplitMode::Bridge,
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bearing-like" => Ok(DatasetKind::BearingLike),
            "bridge-like" => Ok(DatasetKind::BridgeLike),
            _ => Err(Error::InvalidConfig(format!(
                "unknown dataset `{s}` (expected bearing-like or bridge-like)"
            ))),
        }
    }
}

/// Sensor column description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorInfo {
    pub name: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub subtype: String,
    pub rate_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub id: usize,
    pub file: String,
    pub group: u32,
    pub condition: OperatingCondition,
}

/// `manifest.json` of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: DatasetKind,
    pub generator_version: String,
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub sensors: Vec<SensorInfo>,
    pub exogenous: Vec<String>,
    pub targets: Vec<String>,
    pub graph: GraphJson,
    pub conditions: Vec<ConditionEntry>,
}

/// A generated or loaded dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub graph: HeteroTemporalGraph,
    pub series: Vec<RawSeries>,
}

fn sensor_infos(graph: &HeteroTemporalGraph, rate_l: f64, rate_h: f64) -> Vec<SensorInfo> {
    graph
        .nodes()
        .iter()
        .map(|n| SensorInfo {
            name: format!("{} {}", n.subtype, n.index),
            node_type: n.node_type,
            subtype: n.subtype.clone(),
            rate_hz: if n.node_type == NodeType::L { rate_l } else { rate_h },
        })
        .collect()
}

impl Dataset {
    fn new(
        kind: DatasetKind,
        seed: u64,
        window: usize,
        stride: usize,
        graph: HeteroTemporalGraph,
        sensors: Vec<SensorInfo>,
        exogenous: &[&str],
        targets: &[&str],
        series: Vec<RawSeries>,
    ) -> Self {
        let conditions = series
            .iter()
            .enumerate()
            .map(|(id, s)| ConditionEntry {
                id,
                file: format!("condition_{id:03}.csv"),
                group: s.group,
                condition: s.condition.clone(),
            })
            .collect();
        Self {
            manifest: Manifest {
                kind,
                generator_version: GENERATOR_VERSION.into(),
                seed,
                window,
                stride,
                sensors,
                exogenous: exogenous.iter().map(|s| s.to_string()).collect(),
                targets: targets.iter().map(|s| s.to_string()).collect(),
                graph: graph.to_json(),
                conditions,
            },
            graph,
            series,
        }
    }

    /// All windows in condition order.
    pub fn windows(&self) -> Result<Vec<SensorWindow>> {
        let mut out = Vec::new();
        for (i, s) in self.series.iter().enumerate() {
            out.extend(window_dataset(s, i, self.manifest.window, self.manifest.stride)?);
        }
        Ok(out)
    }

    /// Windows split according to the dataset kind.
    pub fn split(&self, seed: u64) -> Result<Split> {
        temporal_split(self.windows()?, &SplitConfig::new(self.manifest.kind.split_mode()), seed)
    }

    /// Writes `manifest.json` and one CSV per series into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(dir.join("manifest.json"), manifest + "\n")?;
        let m = &self.manifest;
        for (entry, s) in m.conditions.iter().zip(&self.series) {
            let mut w = csv::Writer::from_path(dir.join(&entry.file))?;
            let header: Vec<&str> = m
                .sensors
                .iter()
                .map(|s| s.name.as_str())
                .chain(m.exogenous.iter().map(String::as_str))
                .chain(m.targets.iter().map(String::as_str))
                .collect();
            w.write_record(&header)?;
            let blocks = [&s.x_l, &s.x_h, &s.w, &s.y];
            for t in 0..s.len() {
                let row: Vec<String> = blocks
                    .iter()
                    .flat_map(|b| (0..b.rows()).map(move |r| b.get(r, t).to_string()))
                    .collect();
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Reads a directory written by [`Dataset::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| Error::Dataset(format!("{}: {e}", dir.join("manifest.json").display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let graph = HeteroTemporalGraph::from_json(manifest.graph.clone())?;
        if manifest.sensors.len() != graph.num_nodes() {
            return Err(Error::Dataset("sensor list does not match the graph".into()));
        }
        let n_l = graph.count(NodeType::L);
        let n_h = graph.count(NodeType::H);
        let n_w = manifest.exogenous.len();
        let n_y = manifest.targets.len();
        let width = n_l + n_h + n_w + n_y;
        let mut series = Vec::with_capacity(manifest.conditions.len());
        for entry in &manifest.conditions {
            let mut r = csv::Reader::from_path(dir.join(&entry.file))?;
            let header = r.headers()?.clone();
            if header.len() != width {
                return Err(Error::Dataset(format!(
                    "{}: {} columns, expected {width}",
                    entry.file,
                    header.len()
                )));
            }
            let mut columns = vec![Vec::new(); width];
            for rec in r.records() {
                let rec = rec?;
                for (c, field) in rec.iter().enumerate() {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| Error::Dataset(format!("{}: bad number `{field}`", entry.file)))?;
                    columns[c].push(v);
                }
            }
            let n = columns[0].len();
            let block = |range: std::ops::Range<usize>| {
                let rows = range.len();
                let data: Vec<f64> = columns[range].iter().flatten().copied().collect();
                Matrix::from_vec(rows, n, data)
            };
            series.push(RawSeries {
                condition: entry.condition.clone(),
                group: entry.group,
                x_l: block(0..n_l),
                x_h: block(n_l..n_l + n_h),
                w: block(n_l + n_h..n_l + n_h + n_w),
                y: block(n_l + n_h + n_w..width),
            });
        }
        Ok(Self {
            manifest,
            graph,
            series,
        })
    }
}

/// Bearing-like generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BearingGenConfig {
    pub layout: BearingLayout,
    pub speeds: Vec<f64>,
    /// (axial, radial) load pairs in kN.
    pub loads: Vec<[f64; 2]>,
    /// Samples per condition.
    pub length: usize,
    /// Fundamental vibration frequency per unit speed, in cycles per sample.
    pub freq_per_speed: f64,
    pub harmonics: Vec<f64>,
    /// Vibration amplitude scales with `1 / (1 + sensitivity · F_x)`.
    pub load_sensitivity: f64,
    pub thermal_gain: f64,
    /// Low-frequency channels are generated every `lf_ratio` samples.
    pub lf_ratio: usize,
    pub lf_noise_std: f64,
    /// Vibration SNR in dB; `null` disables noise on every channel.
    pub snr_db: Option<f64>,
    pub window: usize,
    pub stride: usize,
}

impl Default for BearingGenConfig {
    fn default() -> Self {
        Self {
            layout: BearingLayout::default(),
            speeds: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            loads: vec![
                [5.0, 20.0],
                [5.0, 40.0],
                [10.0, 10.0],
                [10.0, 30.0],
                [10.0, 50.0],
                [15.0, 20.0],
                [15.0, 40.0],
                [20.0, 10.0],
                [20.0, 30.0],
                [20.0, 50.0],
                [25.0, 25.0],
            ],
            length: 65,
            freq_per_speed: 0.003,
            harmonics: vec![1.0, 0.5, 0.25],
            load_sensitivity: 0.05,
            thermal_gain: 0.001,
            lf_ratio: 10,
            lf_noise_std: 0.01,
            snr_db: Some(35.0),
            window: 30,
            stride: 1,
        }
    }
}

impl BearingGenConfig {
    pub fn noiseless(mut self) -> Self {
        self.snr_db = None;
        self
    }

    /// Speed-major grid of operating conditions.
    pub fn conditions(&self) -> Vec<OperatingCondition> {
        self.speeds
            .iter()
            .flat_map(|&speed| {
                self.loads.iter().map(move |&[f_x, f_y]| OperatingCondition::Bearing { f_x, f_y, speed })
            })
            .collect()
    }
}

/// Radial-load weight of a temperature node: 1 at the load zone (270°),
/// 0 opposite it, 0.5 for inner-ring sensors.
fn load_zone_weight(position: &str, subtype: &str) -> f64 {
    if subtype == T_IR {
        return 0.5;
    }
    let angle = position
        .rsplit('@')
        .next()
        .and_then(|a| a.parse::<f64>().ok())
        .unwrap_or(0.0);
    0.5 * (1.0 + (angle - 270.0).to_radians().cos())
}

fn bearing_of(position: &str) -> usize {
    position
        .strip_prefix('B')
        .and_then(|p| p.split('@').next())
        .and_then(|b| b.parse::<usize>().ok())
        .unwrap_or(1)
}

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Series of one bearing condition; pure in `(config, graph, condition, seed, id)`.
pub fn bearing_series(
    config: &BearingGenConfig,
    graph: &HeteroTemporalGraph,
    condition: &OperatingCondition,
    seed: u64,
    id: usize,
) -> Result<RawSeries> {
    let OperatingCondition::Bearing { f_x, f_y, speed } = *condition else {
        return Err(Error::InvalidConfig("bearing generator needs a bearing condition".into()));
    };
    let n = config.length;
    if n == 0 || config.lf_ratio == 0 {
        return Err(Error::InvalidConfig("length and lf_ratio must be positive".into()));
    }
    let mut rng = noise_rng(seed, id as u64);
    let f0 = config.freq_per_speed * speed;
    let amp = (speed / 50.0) / (1.0 + config.load_sensitivity * f_x);
    let coarse_n = (n - 1) / config.lf_ratio + 2;
    let lf_noise = Normal::new(0.0, config.lf_noise_std.max(0.0)).expect("valid std");
    let mut x_l = Vec::new();
    let mut x_h = Vec::new();
    for node in graph.nodes() {
        let bearing_gain = if bearing_of(&node.position) == 1 { 1.0 } else { 0.9 };
        match node.node_type {
            NodeType::L => {
                let z = load_zone_weight(&node.position, &node.subtype);
                let level = config.thermal_gain * speed * (f_x + f_y * z) * bearing_gain;
                let coarse: Vec<f64> = (0..coarse_n)
                    .map(|_| {
                        let e = if config.snr_db.is_some() { lf_noise.sample(&mut rng) } else { 0.0 };
                        level + e
                    })
                    .collect();
                x_l.extend(upsample_linear(&coarse, config.lf_ratio, n));
            }
            NodeType::H => {
                let gain = bearing_gain * if node.subtype == crate::graph::V_RA { 0.7 } else { 1.0 };
                let phases: Vec<f64> = config.harmonics.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
                let clean: Vec<f64> = (0..n)
                    .map(|t| {
                        config
                            .harmonics
                            .iter()
                            .zip(&phases)
                            .enumerate()
                            .map(|(k, (a, ph))| {
                                gain * amp * a * (2.0 * PI * (k + 1) as f64 * f0 * t as f64 + ph).sin()
                            })
                            .sum()
                    })
                    .collect();
                let noisy = match config.snr_db {
                    Some(snr) => add_noise(&clean, snr, &mut rng)?,
                    None => clean,
                };
                x_h.extend(noisy);
            }
        }
    }
    let n_l = graph.count(NodeType::L);
    let n_h = graph.count(NodeType::H);
    Ok(RawSeries {
        condition: condition.clone(),
        group: id as u32,
        x_l: Matrix::from_vec(n_l, n, x_l),
        x_h: Matrix::from_vec(n_h, n, x_h),
        w: Matrix::filled(1, n, speed),
        y: Matrix::from_rows(&[vec![f_x; n], vec![f_y; n]]),
    })
}

/// Bearing-like dataset over the configured condition grid.
pub fn generate_bearing_like(config: &BearingGenConfig, seed: u64) -> Result<Dataset> {
    let conditions = config.conditions();
    if conditions.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let graph = config.layout.build()?;
    let series = conditions
        .iter()
        .enumerate()
        .map(|(i, c)| bearing_series(config, &graph, c, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let sensors = sensor_infos(&graph, 1.0 / config.lf_ratio as f64, 1.0);
    Ok(Dataset::new(
        DatasetKind::BearingLike,
        seed,
        config.window,
        config.stride,
        graph,
        sensors,
        &["speed"],
        &["F_x", "F_y"],
        series,
    ))
}

/// Bridge-like generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeGenConfig {
    pub layout: BridgeLayout,
    pub days: u32,
    pub runs_per_day: u32,
    pub length: usize,
    /// Train load range in kg.
    pub load_range: [f64; 2],
    /// Range of daily mean temperatures in °C.
    pub temperature_range: [f64; 2],
    pub temperature_jitter: f64,
    /// Train speed per speed class.
    pub speeds: Vec<f64>,
    /// First modal frequency at 0 °C, cycles per sample.
    pub base_freq: f64,
    /// Relative frequency change per °C.
    pub temp_coeff: f64,
    pub second_mode_ratio: f64,
    /// Mid-span deflection per kg.
    pub deflection_per_kg: f64,
    /// Deflection per °C.
    pub thermal_deflection: f64,
    /// Length of the entry and exit ramps as a fraction of a passage.
    pub ramp_fraction: f64,
    pub lf_ratio: usize,
    pub snr_db: Option<f64>,
    pub window: usize,
    pub stride: usize,
}

impl Default for BridgeGenConfig {
    fn default() -> Self {
        Self {
            layout: BridgeLayout::default(),
            days: 12,
            runs_per_day: 4,
            length: 255,
            load_range: [42100.0, 53500.0],
            temperature_range: [-10.0, 30.0],
            temperature_jitter: 2.0,
            speeds: vec![60.0, 80.0, 100.0],
            base_freq: 0.05,
            temp_coeff: 0.01,
            second_mode_ratio: 2.5,
            deflection_per_kg: 1e-4,
            thermal_deflection: 0.002,
            ramp_fraction: 0.05,
            lf_ratio: 10,
            snr_db: Some(35.0),
            window: 60,
            stride: 5,
        }
    }
}

impl BridgeGenConfig {
    pub fn noiseless(mut self) -> Self {
        self.snr_db = None;
        self
    }

    /// Seeded draws of load, speed and temperature for every run. Days come
    /// in pairs (one odd, one even) whose mean temperatures are spread evenly
    /// over the range, so both parities see the whole climate.
    pub fn conditions(&self, seed: u64) -> Result<Vec<OperatingCondition>> {
        if self.days == 0 || self.runs_per_day == 0 || self.speeds.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let [lo, hi] = self.load_range;
        let [t_lo, t_hi] = self.temperature_range;
        if !(lo <= hi && t_lo <= t_hi) {
            return Err(Error::InvalidConfig("ranges must be ordered".into()));
        }
        let mut rng = noise_rng(seed, u64::MAX);
        let pairs = self.days.div_ceil(2) as f64;
        let mut out = Vec::new();
        for day in 1..=self.days {
            let pair = ((day - 1) / 2) as f64;
            let day_temp = t_lo + (t_hi - t_lo) * (pair + rng.random_range(0.35..=0.65)) / pairs;
            for run in 0..self.runs_per_day {
                let speed_class = rng.random_range(0..self.speeds.len());
                let jitter = rng.random_range(-1.0..=1.0) * self.temperature_jitter;
                out.push(OperatingCondition::Bridge {
                    load: rng.random_range(lo..=hi),
                    speed_class,
                    speed: self.speeds[speed_class],
                    temperature: day_temp + jitter,
                    day,
                    run,
                });
            }
        }
        Ok(out)
    }
}

/// Fraction of the train on the span at time `t`: ramps in, plateau, ramps out.
fn span_occupancy(t: usize, n: usize, ramp_fraction: f64) -> f64 {
    let ramp = (n as f64 * ramp_fraction).max(1.0);
    let x = (t as f64 / ramp).min((n - 1 - t) as f64 / ramp).clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Series of one bridge run; pure in `(config, graph, condition, seed, id)`.
pub fn bridge_series(
    config: &BridgeGenConfig,
    graph: &HeteroTemporalGraph,
    condition: &OperatingCondition,
    seed: u64,
    id: usize,
) -> Result<RawSeries> {
    let OperatingCondition::Bridge {
        load,
        speed,
        temperature,
        day,
        ..
    } = *condition
    else {
        return Err(Error::InvalidConfig("bridge generator needs a bridge condition".into()));
    };
    let n = config.length;
    if n == 0 || config.lf_ratio == 0 {
        return Err(Error::InvalidConfig("length and lf_ratio must be positive".into()));
    }
    let mut rng = noise_rng(seed, id as u64);
    let n_l = graph.count(NodeType::L);
    let n_h = graph.count(NodeType::H);
    let f1 = config.base_freq * (1.0 + config.temp_coeff * temperature);
    let f2 = f1 * config.second_mode_ratio;
    let coarse_n = (n - 1) / config.lf_ratio + 2;
    let mut x_l = Vec::with_capacity(n_l * n);
    let mut x_h = Vec::with_capacity(n_h * n);
    for (g, node) in graph.nodes().iter().enumerate() {
        let local = graph.local_index(g);
        let count = if node.node_type == NodeType::L { n_l } else { n_h };
        let x = (local + 1) as f64 / (count + 1) as f64;
        let clean: Vec<f64> = match node.node_type {
            NodeType::L => {
                let coarse: Vec<f64> = (0..coarse_n)
                    .map(|k| {
                        let t = (k * config.lf_ratio).min(n - 1);
                        config.deflection_per_kg * load * (PI * x).sin() * span_occupancy(t, n, config.ramp_fraction)
                            + config.thermal_deflection * temperature
                    })
                    .collect();
                upsample_linear(&coarse, config.lf_ratio, n)
            }
            NodeType::H => {
                let a1 = (speed / 100.0) * (load / 50_000.0) * (PI * x).sin();
                let a2 = 0.5 * (speed / 100.0) * (2.0 * PI * x).sin().abs().max(0.2);
                let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
                (0..n)
                    .map(|t| {
                        let tt = t as f64;
                        span_occupancy(t, n, config.ramp_fraction)
                            * (a1 * (2.0 * PI * f1 * tt + p1).sin() + a2 * (2.0 * PI * f2 * tt + p2).sin())
                    })
                    .collect()
            }
        };
        let series = match config.snr_db {
            Some(snr) => add_noise(&clean, snr, &mut rng)?,
            None => clean,
        };
        if node.node_type == NodeType::L {
            x_l.extend(series);
        } else {
            x_h.extend(series);
        }
    }
    Ok(RawSeries {
        condition: condition.clone(),
        group: day,
        x_l: Matrix::from_vec(n_l, n, x_l),
        x_h: Matrix::from_vec(n_h, n, x_h),
        w: Matrix::from_rows(&[vec![temperature; n], vec![speed; n]]),
        y: Matrix::from_rows(&[vec![load; n]]),
    })
}

/// Bridge-like dataset of `days × runs_per_day` passages.
pub fn generate_bridge_like(config: &BridgeGenConfig, seed: u64) -> Result<Dataset> {
    let conditions = config.conditions(seed)?;
    let graph = config.layout.build()?;
    let series = conditions
        .iter()
        .enumerate()
        .map(|(i, c)| bridge_series(config, &graph, c, seed, i))
        .collect::<Result<Vec<_>>>()?;
    let sensors = sensor_infos(&graph, 10.0, 100.0);
    Ok(Dataset::new(
        DatasetKind::BridgeLike,
        seed,
        config.window,
        config.stride,
        graph,
        sensors,
        &["temperature", "speed"],
        &["load"],
        series,
    ))
}
