#![allow(dead_code)]

use htgnn_core::data::{SensorWindow, WindowMeta};
use htgnn_core::graph::{toy_topology, HeteroTemporalGraph};
use htgnn_core::model::{ModelConfig, Variant};
use htgnn_core::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_graph() -> HeteroTemporalGraph {
    toy_topology(4, 2).unwrap()
}

/// Small model over the 4 L / 2 H toy graph with 12-step windows.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        window: 12,
        ..ModelConfig::bearing(variant)
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Random windows for the toy graph with positive targets.
pub fn toy_windows(n: usize, seed: u64) -> Vec<SensorWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SensorWindow {
            x_l: random_matrix(&mut rng, 4, 12),
            x_h: random_matrix(&mut rng, 2, 12),
            w: random_matrix(&mut rng, 1, 12),
            y: vec![rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0)],
            meta: WindowMeta {
                condition: i,
                group: i as u32,
                start: 0,
                speed: Some(10.0),
                temperature: None,
            },
        })
        .collect()
}
