//! End-to-end runs: fit normalization, train, evaluate on the test split.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind, Split};
use crate::error::Result;
use crate::model::{build_variant, Model, ModelConfig, Normalizer, Variant};
use crate::train::{evaluate_by_category, evaluate_loss, train, CategoryKey, Metrics, TrainConfig, TrainState};

/// Default model configuration for a dataset kind.
pub fn model_config(kind: DatasetKind, variant: Variant) -> ModelConfig {
    match kind {
        DatasetKind::BearingLike => ModelConfig::bearing(variant),
        DatasetKind::BridgeLike => ModelConfig::bridge(variant),
    }
}

/// Default training configuration for a dataset kind.
pub fn train_config(kind: DatasetKind) -> TrainConfig {
    match kind {
        DatasetKind::BearingLike => TrainConfig::default(),
        DatasetKind::BridgeLike => TrainConfig::bridge(),
    }
}

/// Category used for reporting on a dataset kind.
pub fn default_category(kind: DatasetKind) -> CategoryKey {
    match kind {
        DatasetKind::BearingLike => CategoryKey::Speed,
        DatasetKind::BridgeLike => CategoryKey::Temperature,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub seconds: f64,
    /// Standardized MSE on the test split.
    pub test_loss: f64,
    pub metrics: Metrics,
}

pub struct RunResult {
    pub model: Model,
    pub state: TrainState,
    pub summary: RunSummary,
}

/// Builds, trains and evaluates one model; `train_cfg.seed` seeds both the
/// initialization and the training loop.
pub fn run(
    dataset: &Dataset,
    split: &Split,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    key: CategoryKey,
) -> Result<RunResult> {
    let mut model = build_variant(model_cfg, &dataset.graph, train_cfg.seed)?;
    model.normalizer = Normalizer::fit(&split.train)?;
    let state = train(&mut model, &split.train, &split.val, train_cfg)?;
    let test_loss = evaluate_loss(&model, &split.test, 256)?;
    let metrics = evaluate_by_category(&model, &split.test, key, &dataset.manifest.targets)?;
    let summary = RunSummary {
        variant: model_cfg.variant,
        seed: train_cfg.seed,
        epochs: state.epoch,
        best_epoch: state.stopping.best_epoch,
        seconds: state.seconds,
        test_loss,
        metrics,
    };
    Ok(RunResult { model, state, summary })
}
