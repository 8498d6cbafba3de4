mod common;

use std::sync::Arc;

use htgnn_core::autodiff::{Tape, Var};
use htgnn_core::checkpoint::{self, Dtype};
use htgnn_core::model::{build_variant, Variant};
use htgnn_core::params::{Bound, ParamStore};
use htgnn_core::tensor::Matrix;
use htgnn_core::train::{
    evaluate_by_category, evaluate_loss, grad_check, train, AdamW, CategoryKey, Objective, Predictor, TrainConfig,
};
use htgnn_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{toy_config, toy_graph, toy_windows};

/// `y = x·w + b` fitted by mean squared error.
struct Linear(ParamStore);

impl Linear {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut p = ParamStore::new();
        p.insert_uniform("w", 3, 1, 3, rng);
        p.insert_zeros("b", 1, 1);
        Self(p)
    }
}

impl Objective for Linear {
    type Sample = ([f64; 3], f64);

    fn params(&self) -> &ParamStore {
        &self.0
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.0
    }

    fn batch_loss(&self, tape: &mut Tape, p: &Bound, samples: &[&Self::Sample], _: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let x = Matrix::from_rows(&samples.iter().map(|s| s.0.to_vec()).collect::<Vec<_>>());
        let y = Matrix::from_vec(samples.len(), 1, samples.iter().map(|s| s.1).collect());
        let xv = tape.leaf(x);
        let pred = tape.affine(xv, p.get("w"), p.get("b"));
        Ok(tape.mse(pred, Arc::new(y)))
    }
}

fn linear_data(n: usize, seed: u64) -> Vec<([f64; 3], f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (x, 0.8 * x[0] - 1.2 * x[1] + 0.5 * x[2] + 0.3)
        })
        .collect()
}

/// `(w - 100)²` from `w = 0`: the loss falls every epoch for a long time.
struct FarTarget(ParamStore);

impl Objective for FarTarget {
    type Sample = ();

    fn params(&self) -> &ParamStore {
        &self.0
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.0
    }

    fn batch_loss(&self, tape: &mut Tape, p: &Bound, _: &[&()], _: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let t = tape.leaf(Matrix::filled(1, 1, 100.0));
        let d = tape.sub(p.get("w"), t);
        let sq = tape.mul(d, d);
        Ok(tape.sum(sq))
    }
}

#[test]
fn linear_regression_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Linear::new(&mut rng);
    let (tr, va) = (linear_data(256, 1), linear_data(64, 2));
    let initial = evaluate_loss(&model, &tr, 256).unwrap();
    let state = train(&mut model, &tr, &va, &TrainConfig::default()).unwrap();
    let last = evaluate_loss(&model, &tr, 256).unwrap();
    assert!(last < 1e-3 * initial, "{last} vs {initial} after {} epochs", state.epoch);
}

#[test]
fn improving_validation_runs_all_epochs() {
    let mut p = ParamStore::new();
    p.insert("w", Matrix::filled(1, 1, 0.0));
    let mut obj = FarTarget(p);
    let cfg = TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    };
    let state = train(&mut obj, &[()], &[()], &cfg).unwrap();
    assert_eq!(state.epoch, cfg.max_epochs);
    assert!(!state.stopped_early);
    assert!(state.history.windows(2).all(|h| h[1].val_loss < h[0].val_loss));
}

#[test]
fn lr_is_non_increasing_after_warm_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = Linear::new(&mut rng);
    let cfg = TrainConfig {
        warmup_iters: 16,
        plateau_patience: 2,
        max_epochs: 60,
        ..TrainConfig::default()
    };
    // noisy labels keep the validation loss on a plateau so decays happen
    let mut noisy = linear_data(64, 4);
    for (i, s) in noisy.iter_mut().enumerate() {
        s.1 += if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let state = train(&mut model, &noisy, &linear_data(16, 5), &cfg).unwrap();
    let after: Vec<f64> = state.history.iter().skip(8).map(|r| r.lr).collect();
    assert!(after.windows(2).all(|w| w[1] <= w[0]));
    assert!(state.history.iter().all(|r| r.lr >= cfg.lr_min && r.lr <= cfg.lr0));
}

#[test]
fn linear_gradients_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = Linear::new(&mut rng);
    let r = grad_check(&mut model, &linear_data(8, 7), 1e-5, 0).unwrap();
    assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
}

proptest! {
    #[test]
    fn one_adamw_step_reduces_a_quadratic(w0 in -50.0f64..50.0, lr in 1e-5f64..1e-2) {
        prop_assume!((w0 - 100.0).abs() > 1.0);
        let mut p = ParamStore::new();
        p.insert("w", Matrix::filled(1, 1, w0));
        let obj = FarTarget(p.clone());
        let before = evaluate_loss(&obj, &[()], 1).unwrap();
        let grad = Matrix::filled(1, 1, 2.0 * (w0 - 100.0));
        let mut opt = AdamW::new(&p, &TrainConfig::default());
        opt.step(&mut p, &[grad], lr);
        let after = evaluate_loss(&FarTarget(p), &[()], 1).unwrap();
        prop_assert!(after < before);
    }
}

#[test]
fn f32_checkpoints_round_trip_within_single_precision() {
    let model = build_variant(&toy_config(Variant::Htgnn), &toy_graph(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    checkpoint::save(&model, &path, Dtype::F32).unwrap();
    let back = checkpoint::load(&path).unwrap();
    for (a, b) in model.params.values().iter().zip(back.params.values()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
        }
    }
    assert!(checkpoint::load(&dir.path().join("missing.json")).is_err());
}

/// Returns the truth plus a per-category offset.
struct Offset;

impl Predictor for Offset {
    fn predict(&self, windows: &[htgnn_core::data::SensorWindow]) -> Result<Vec<Vec<f64>>> {
        Ok(windows
            .iter()
            .map(|w| {
                let off = if w.meta.condition == 0 { 0.02 } else { 0.04 };
                w.y.iter().map(|y| y + off).collect()
            })
            .collect())
    }
}

#[test]
fn category_average_is_unweighted() {
    let mut windows = toy_windows(6, 8);
    for (i, w) in windows.iter_mut().enumerate() {
        w.meta.condition = usize::from(i >= 2);
        w.y = vec![10.0 + i as f64, 11.0 + i as f64];
    }
    let targets = vec!["a".to_string(), "b".to_string()];
    let m = evaluate_by_category(&Offset, &windows, CategoryKey::Condition, &targets).unwrap();
    // range 5 per target: NRMSE 0.02/5 and 0.04/5
    assert_eq!(m.categories.len(), 2);
    for k in 0..2 {
        assert!((m.categories[0].nrmse[k] - 0.004).abs() < 1e-12);
        assert!((m.categories[1].nrmse[k] - 0.008).abs() < 1e-12);
        assert!((m.average.nrmse[k] - 0.006).abs() < 1e-12);
    }
    assert!(evaluate_by_category(&Offset, &[], CategoryKey::Condition, &targets).is_err());
}
