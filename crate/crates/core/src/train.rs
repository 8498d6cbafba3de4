//! Optimization, learning-rate schedule, early stopping, metrics and
//! gradient verification.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::SensorWindow;
use crate::error::{Error, Result};
use crate::model::{Mode, Model};
use crate::params::{Bound, ParamStore};
use crate::tensor::Matrix;

/// Anything trainable by minibatch gradient descent.
pub trait Objective {
    type Sample;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Mean loss over `samples`; `rng` is present in training mode and
    /// drives stochastic layers.
    fn batch_loss(
        &self,
        tape: &mut Tape,
        p: &Bound,
        samples: &[&Self::Sample],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var>;
}

impl Objective for Model {
    type Sample = SensorWindow;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(
        &self,
        tape: &mut Tape,
        p: &Bound,
        samples: &[&SensorWindow],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let batch = self.make_batch(samples)?;
        let mut mode = match rng {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        Ok(self.loss(tape, p, &batch, &mut mode))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub max_epochs: usize,
    pub min_epochs: usize,
    pub patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub warmup_iters: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Wall-clock budget; training ends after the epoch that exceeds it.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-3,
            lr_min: 1e-4,
            max_epochs: 150,
            min_epochs: 50,
            patience: 20,
            plateau_factor: 0.9,
            plateau_patience: 10,
            warmup_iters: 200,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            seed: 0,
            max_seconds: None,
        }
    }
}

impl TrainConfig {
    /// Bridge runs warm up over 500 iterations.
    pub fn bridge() -> Self {
        Self {
            warmup_iters: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) {
            return Err(Error::InvalidConfig("need 0 < lr_min <= lr0".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidConfig("patience must be below max_epochs".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Plateau-driven steady learning rate with a warm-up blend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub lr_min: f64,
    pub factor: f64,
    pub patience: usize,
    pub warmup_iters: usize,
    /// Rate the plateau logic has settled on.
    pub steady: f64,
    pub bad_epochs: usize,
    pub decays: usize,
}

impl LrSchedule {
    pub fn new(c: &TrainConfig) -> Self {
        Self {
            lr0: c.lr0,
            lr_min: c.lr_min,
            factor: c.plateau_factor,
            patience: c.plateau_patience,
            warmup_iters: c.warmup_iters,
            steady: c.lr0,
            bad_epochs: 0,
            decays: 0,
        }
    }

    /// Rate at a global iteration: during warm-up a linear blend from `lr0`
    /// to the steady rate, afterwards the steady rate.
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let lr = if iteration < self.warmup_iters {
            let frac = iteration as f64 / self.warmup_iters as f64;
            self.lr0 + (self.steady - self.lr0) * frac
        } else {
            self.steady
        };
        lr.clamp(self.lr_min, self.lr0)
    }

    /// Multiplies the steady rate by the factor, floored at `lr_min`.
    pub fn decay(&mut self) {
        self.steady = (self.steady * self.factor).max(self.lr_min);
        self.decays += 1;
    }

    /// Records one epoch's outcome; decays after `patience` bad epochs.
    pub fn end_epoch(&mut self, improved: bool) {
        if improved {
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.decay();
                self.bad_epochs = 0;
            }
        }
    }
}

/// Learning rate for `iteration` given the schedule state.
pub fn lr_at(iteration: usize, _epoch: usize, schedule: &LrSchedule) -> f64 {
    schedule.lr_at(iteration)
}

/// Best-validation tracking and stopping rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_epochs: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_epochs: usize) -> Self {
        Self {
            patience,
            min_epochs,
            best: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Records the validation loss of 1-based `epoch`; returns whether it improved.
    pub fn observe(&mut self, epoch: usize, val: f64) -> bool {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch >= self.min_epochs && self.since_improvement >= self.patience
    }
}

/// Decoupled-weight-decay Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore, c: &TrainConfig) -> Self {
        let zeros: Vec<Matrix> = params.values().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            weight_decay: c.weight_decay,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.values_mut().iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *w -= lr * self.weight_decay * *w;
                *w -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Optimizer, schedule and stopping state after training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub optimizer: AdamW,
    pub schedule: LrSchedule,
    pub stopping: EarlyStopping,
    pub epoch: usize,
    pub iteration: usize,
    pub lr: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub out_of_time: bool,
    pub seconds: f64,
}

impl TrainState {
    /// Loss history as CSV: `epoch,train_loss,val_loss,lr`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
        }
        s
    }
}

fn loss_and_grads<O: Objective>(
    obj: &O,
    samples: &[&O::Sample],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let p = obj.params().bind(&mut tape);
    let loss = obj.batch_loss(&mut tape, &p, samples, rng)?;
    let value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss);
    let g = p
        .vars()
        .iter()
        .zip(obj.params().values())
        .map(|(&v, m)| grads.get_or_zeros(v, m.shape()))
        .collect();
    Ok((value, g))
}

/// Mean loss over `samples` in evaluation mode, weighted by chunk size.
pub fn evaluate_loss<O: Objective>(obj: &O, samples: &[O::Sample], chunk: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to evaluate".into()));
    }
    let mut total = 0.0;
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&O::Sample> = part.iter().collect();
        let mut tape = Tape::new();
        let p = obj.params().bind(&mut tape);
        let loss = obj.batch_loss(&mut tape, &p, &refs, None)?;
        total += tape.value(loss).get(0, 0) * part.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch training with early stopping; leaves the best-validation
/// parameters in `obj`.
pub fn train<O: Objective>(
    obj: &mut O,
    train_set: &[O::Sample],
    val_set: &[O::Sample],
    config: &TrainConfig,
) -> Result<TrainState> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Dataset("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut state = TrainState {
        optimizer: AdamW::new(obj.params(), config),
        schedule: LrSchedule::new(config),
        stopping: EarlyStopping::new(config.patience, config.min_epochs),
        epoch: 0,
        iteration: 0,
        lr: config.lr0,
        history: Vec::new(),
        stopped_early: false,
        out_of_time: false,
        seconds: 0.0,
    };
    let mut best = obj.params().clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut last_loss = f64::NAN;
    for epoch in 1..=config.max_epochs {
        state.epoch = epoch;
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for (k, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&O::Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let lr = state.schedule.lr_at(state.iteration);
            let (loss, grads) = loss_and_grads(obj, &refs, Some(&mut dropout_rng))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss {
                    epoch,
                    iteration: k,
                    lr,
                    loss: last_loss,
                });
            }
            last_loss = loss;
            state.lr = lr;
            state.optimizer.step(obj.params_mut(), &grads, lr);
            state.iteration += 1;
            sum += loss * chunk.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = evaluate_loss(obj, val_set, 256)?;
        if !val_loss.is_finite() {
            return Err(Error::DivergedLoss {
                epoch,
                iteration: state.iteration,
                lr: state.lr,
                loss: last_loss,
            });
        }
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: state.lr,
        });
        let improved = state.stopping.observe(epoch, val_loss);
        if improved {
            best = obj.params().clone();
        }
        state.schedule.end_epoch(improved);
        if state.stopping.should_stop(epoch) {
            state.stopped_early = epoch < config.max_epochs;
            break;
        }
        if config.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() > s) {
            state.out_of_time = true;
            break;
        }
    }
    *obj.params_mut() = best;
    state.seconds = start.elapsed().as_secs_f64();
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter and flat index of the worst entry.
    pub worst: (String, usize),
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences on a random 5%
/// (at least 50) of the parameter entries, in evaluation mode.
pub fn grad_check<O: Objective>(obj: &mut O, samples: &[O::Sample], step: f64, seed: u64) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidStep(step));
    }
    let refs: Vec<&O::Sample> = samples.iter().collect();
    let (_, grads) = loss_and_grads(obj, &refs, None)?;
    let sizes: Vec<usize> = obj.params().values().iter().map(Matrix::len).collect();
    let total: usize = sizes.iter().sum();
    let want = ((total as f64 * 0.05).ceil() as usize).max(50).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, total, want).into_vec();
    picks.sort_unstable();
    let eval = |obj: &O| -> Result<f64> {
        let mut tape = Tape::new();
        let p = obj.params().bind(&mut tape);
        let loss = obj.batch_loss(&mut tape, &p, &refs, None)?;
        Ok(tape.value(loss).get(0, 0))
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: picks.len(),
        worst: (String::new(), 0),
    };
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for s in &sizes {
        offsets.push(acc);
        acc += s;
    }
    for flat in picks {
        let k = offsets.partition_point(|&o| o <= flat) - 1;
        let i = flat - offsets[k];
        let orig = obj.params().values()[k].data()[i];
        obj.params_mut().values_mut()[k].data_mut()[i] = orig + step;
        let up = eval(obj)?;
        obj.params_mut().values_mut()[k].data_mut()[i] = orig - step;
        let down = eval(obj)?;
        obj.params_mut().values_mut()[k].data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let rel = relative_error(grads[k].data()[i], numeric);
        if rel > report.max_rel_error || report.worst.0.is_empty() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = (obj.params().names()[k].clone(), i);
        }
    }
    Ok(report)
}

/// RMSE divided by the range of the true values.
pub fn nrmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() < 2 {
        return Err(Error::DegenerateRange);
    }
    let (lo, hi) = y_true
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    nrmse_with_range(y_true, y_pred, hi - lo)
}

/// RMSE divided by a given normalizer.
pub fn nrmse_with_range(y_true: &[f64], y_pred: &[f64], range: f64) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} true values against {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    let mse = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y_true.len() as f64;
    Ok(mse.sqrt() / range)
}

/// Mean absolute percentage error in percent.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} true values against {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(&v) = y_true.iter().find(|v| v.abs() <= 1e-8) {
        return Err(Error::NearZeroTruth(v));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y_true.len() as f64 * 100.0)
}

/// Produces predictions in original units.
pub trait Predictor {
    fn predict(&self, windows: &[SensorWindow]) -> Result<Vec<Vec<f64>>>;
}

impl Predictor for Model {
    fn predict(&self, windows: &[SensorWindow]) -> Result<Vec<Vec<f64>>> {
        Model::predict(self, windows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKey {
    Speed,
    Temperature,
    Condition,
}

impl std::str::FromStr for CategoryKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speed" => Ok(CategoryKey::Speed),
            "temperature" | "temperature-bin" => Ok(CategoryKey::Temperature),
            "condition" => Ok(CategoryKey::Condition),
            _ => Err(Error::InvalidConfig(format!(
                "unknown category key `{s}` (expected speed, temperature or condition)"
            ))),
        }
    }
}

/// Temperature bins in °C: below 0, [0, 10), [10, 20), 20 and above.
pub const TEMPERATURE_BINS: [&str; 4] = ["<0", "0-10", "10-20", ">20"];

pub fn temperature_bin(t: f64) -> usize {
    if t < 0.0 {
        0
    } else if t < 10.0 {
        1
    } else if t < 20.0 {
        2
    } else {
        3
    }
}

/// Sort rank and label of a window's category.
pub fn category_of(w: &SensorWindow, key: CategoryKey) -> Result<(i64, String)> {
    match key {
        CategoryKey::Speed => {
            let s = w
                .meta
                .speed
                .ok_or_else(|| Error::InvalidConfig("windows carry no speed".into()))?;
            Ok(((s * 1000.0).round() as i64, format!("{s}")))
        }
        CategoryKey::Temperature => {
            let t = w
                .meta
                .temperature
                .ok_or_else(|| Error::InvalidConfig("windows carry no temperature".into()))?;
            let b = temperature_bin(t);
            Ok((b as i64, TEMPERATURE_BINS[b].to_string()))
        }
        CategoryKey::Condition => Ok((w.meta.condition as i64, format!("{}", w.meta.condition))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: String,
    pub n: usize,
    /// Per target.
    pub nrmse: Vec<f64>,
    pub mape: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub key: CategoryKey,
    pub targets: Vec<String>,
    /// Per-target range of the true values used as NRMSE normalizer.
    pub ranges: Vec<f64>,
    pub categories: Vec<CategoryMetrics>,
    /// Unweighted mean over categories.
    pub average: CategoryMetrics,
}

/// Per-category NRMSE and MAPE, normalized by the range over all windows.
pub fn evaluate_by_category(
    predictor: &dyn Predictor,
    windows: &[SensorWindow],
    key: CategoryKey,
    targets: &[String],
) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::EmptyCategory("all".into()));
    }
    let preds = predictor.predict(windows)?;
    let d = targets.len();
    if preds.len() != windows.len() || preds.iter().any(|p| p.len() != d) || windows.iter().any(|w| w.y.len() != d) {
        return Err(Error::ShapeMismatch("predictions do not match targets".into()));
    }
    let ranges: Vec<f64> = (0..d)
        .map(|k| {
            let (lo, hi) = windows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w.y[k]), hi.max(w.y[k])));
            hi - lo
        })
        .collect();
    let mut groups: BTreeMap<(i64, String), Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        groups.entry(category_of(w, key)?).or_default().push(i);
    }
    let mut categories = Vec::with_capacity(groups.len());
    for ((_, label), idx) in groups {
        if idx.is_empty() {
            return Err(Error::EmptyCategory(label));
        }
        let mut nr = Vec::with_capacity(d);
        let mut mp = Vec::with_capacity(d);
        for k in 0..d {
            let t: Vec<f64> = idx.iter().map(|&i| windows[i].y[k]).collect();
            let p: Vec<f64> = idx.iter().map(|&i| preds[i][k]).collect();
            nr.push(nrmse_with_range(&t, &p, ranges[k])?);
            mp.push(mape(&t, &p)?);
        }
        categories.push(CategoryMetrics {
            category: label,
            n: idx.len(),
            nrmse: nr,
            mape: mp,
        });
    }
    let c = categories.len() as f64;
    let average = CategoryMetrics {
        category: "avg".into(),
        n: windows.len(),
        nrmse: (0..d).map(|k| categories.iter().map(|m| m.nrmse[k]).sum::<f64>() / c).collect(),
        mape: (0..d).map(|k| categories.iter().map(|m| m.mape[k]).sum::<f64>() / c).collect(),
    };
    Ok(Metrics {
        key,
        targets: targets.to_vec(),
        ranges,
        categories,
        average,
    })
}

/// Mean and 95% normal-approximation half-width over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            ci95: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci95 = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    MeanCi { mean, ci95, n }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCategory {
    pub category: String,
    pub nrmse: Vec<MeanCi>,
    pub mape: Vec<MeanCi>,
}

/// Combines per-run metrics sharing the same categories.
pub fn aggregate_runs(runs: &[Metrics]) -> Result<Vec<AggregateCategory>> {
    let first = runs.first().ok_or_else(|| Error::EmptyCategory("no runs".into()))?;
    let d = first.targets.len();
    let mut rows: Vec<&CategoryMetrics> = first.categories.iter().collect();
    rows.push(&first.average);
    rows.iter()
        .map(|row| {
            let pick = |m: &Metrics| -> Result<CategoryMetrics> {
                if row.category == "avg" {
                    return Ok(m.average.clone());
                }
                m.categories
                    .iter()
                    .find(|c| c.category == row.category)
                    .cloned()
                    .ok_or_else(|| Error::EmptyCategory(row.category.clone()))
            };
            let cats = runs.iter().map(pick).collect::<Result<Vec<_>>>()?;
            Ok(AggregateCategory {
                category: row.category.clone(),
                nrmse: (0..d).map(|k| mean_ci(&cats.iter().map(|c| c.nrmse[k]).collect::<Vec<_>>())).collect(),
                mape: (0..d).map(|k| mean_ci(&cats.iter().map(|c| c.mape[k]).collect::<Vec<_>>())).collect(),
            })
        })
        .collect()
}
