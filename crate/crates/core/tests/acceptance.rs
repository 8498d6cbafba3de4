//! Acceptance criteria. Each test prints one PASS/FAIL line.
//!
//! Tests take a global lock so timing checks run without contention.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use htgnn_core::autodiff::{Tape, Var};
use htgnn_core::checkpoint::{self, Dtype};
use htgnn_core::data::{
    bridge_series, generate_bearing_like, generate_bridge_like, window_count, window_dataset, BearingGenConfig,
    BridgeGenConfig, Dataset, OperatingCondition, RawSeries, SensorWindow, Split,
};
use htgnn_core::encoders::{
    encode_high_freq, encode_low_freq, gate_values, GateMode, GruEncoder, GruInit, MultiScaleDims,
    MultiScaleEncoder,
};
use htgnn_core::experiment::{self, RunSummary};
use htgnn_core::graph::{bearing_topology, NodeType};
use htgnn_core::interaction::{
    hetero_layer, inter_attention, intra_message, Aggregation, AttentionParams, HeteroStack, LayerOptions,
    NodeStateMap, Relation, Topology,
};
use htgnn_core::model::{build_variant, Variant};
use htgnn_core::params::{Bound, ParamStore};
use htgnn_core::signal::{dominant_bin, spectral_centroid};
use htgnn_core::tensor::Matrix;
use htgnn_core::train::{
    category_of, evaluate_by_category, grad_check, lr_at, mape, nrmse, temperature_bin, train, CategoryKey, EarlyStopping, LrSchedule,
    Objective, Predictor, TrainConfig, TEMPERATURE_BINS,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_matrix, toy_config, toy_graph, toy_windows};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: u32, title: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} [{status}] {title}: {detail}");
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[test]
fn criterion_01_gradient_fidelity() {
    let _g = serial();
    let start = Instant::now();
    let graph = toy_graph();
    let windows = toy_windows(4, 3);
    let mut worst = (0.0f64, String::new());
    let mut lines = Vec::new();
    for v in Variant::ALL {
        let mut model = build_variant(&toy_config(v), &graph, 7).unwrap();
        let r = grad_check(&mut model, &windows, 1e-5, 11).unwrap();
        lines.push(format!("{}={:.1e}", v.name(), r.max_rel_error));
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, format!("{} {}[{}]", v.name(), r.worst.0, r.worst.1));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst.0 < 1e-4 && secs < 60.0;
    report(
        1,
        "gradient fidelity",
        ok,
        &format!("max rel err {:.2e} < 1e-4 ({}), {secs:.1}s < 60s; {}", worst.0, worst.1, lines.join(" ")),
    );
    assert!(ok);
}

fn random_symmetric_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    edges
}

fn random_directed_edges(rng: &mut ChaCha8Rng, n_src: usize, n_dst: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for j in 0..n_src {
        for i in 0..n_dst {
            if rng.random_bool(p) {
                edges.push((j, i));
            }
        }
    }
    edges
}

/// `SiLU(N · D^{-1/2} A D^{-1/2} H W)` with `D = in-degree + 1` and `N` the
/// optional neighbor-mean scaling, by explicit loops.
fn dense_gcn(n: usize, edges: &[(usize, usize)], h: &Matrix, w: &Matrix, mean: bool) -> Matrix {
    let mut a = vec![vec![0.0; n]; n];
    for &(j, i) in edges {
        a[i][j] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a[i].iter().sum::<f64>() + 1.0).collect();
    let d = w.cols();
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        let scale = if mean && deg[i] > 1.0 { 1.0 / (deg[i] - 1.0) } else { 1.0 };
        for c in 0..d {
            let mut s = 0.0;
            for j in 0..n {
                if a[i][j] == 0.0 {
                    continue;
                }
                let hw: f64 = (0..h.cols()).map(|k| h.get(j, k) * w.get(k, c)).sum();
                s += a[i][j] / (deg[i].sqrt() * deg[j].sqrt()) * hw;
            }
            out.set(i, c, silu(scale * s));
        }
    }
    out
}

/// Per-node loop over relations using the single-edge primitives.
fn naive_layer(stack: &HeteroStack, store: &ParamStore, states: &NodeStateMap) -> Vec<Matrix> {
    let topo = &stack.topology;
    let dim = stack.options.dim;
    let mut out = Vec::new();
    for (slot, &count) in topo.counts.iter().enumerate() {
        let mut m = Matrix::zeros(count, dim);
        for i in 0..count {
            let mut pre = vec![0.0; dim];
            for rel in topo.relations.iter().filter(|r| r.target == slot) {
                let nbrs: Vec<usize> = rel.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
                if nbrs.is_empty() {
                    continue;
                }
                let k = nbrs.len() as f64;
                let w = store.get(&stack.param_name(0, &rel.name, "w")).unwrap();
                match rel.kind {
                    Aggregation::Gcn => {
                        let in_deg = |node: usize| rel.edges.iter().filter(|e| e.1 == node).count() as f64 + 1.0;
                        for &j in &nbrs {
                            let msg = intra_message(states.get(rel.source, j), in_deg(i), in_deg(j), w).unwrap();
                            for (p, v) in pre.iter_mut().zip(msg) {
                                *p += v / k;
                            }
                        }
                    }
                    Aggregation::Attention => {
                        let hs: Vec<Vec<f64>> = nbrs.iter().map(|&j| states.get(rel.source, j).to_vec()).collect();
                        let a = store.get(&stack.param_name(0, &rel.name, "a")).unwrap();
                        let params = AttentionParams {
                            a: a.data(),
                            w_att_target: store.get(&stack.param_name(0, &rel.name, "w_att_target")).unwrap(),
                            w_att_source: store.get(&stack.param_name(0, &rel.name, "w_att_source")).unwrap(),
                            w_msg: w,
                        };
                        let (_, msgs) = inter_attention(states.get(slot, i), &hs, params).unwrap();
                        for msg in msgs {
                            for (p, v) in pre.iter_mut().zip(msg) {
                                *p += v / k;
                            }
                        }
                    }
                }
            }
            for (c, p) in pre.iter().enumerate() {
                m.set(i, c, silu(*p) + states.get(slot, i)[c]);
            }
        }
        out.push(m);
    }
    out
}

fn attention_sums(stack: &HeteroStack, store: &ParamStore, states: &NodeStateMap) -> f64 {
    let mut worst = 0.0f64;
    for rel in stack.topology.relations.iter().filter(|r| r.kind == Aggregation::Attention) {
        let alpha = stack.attention_weights(store, states, 0, &rel.name).unwrap();
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for (&(_, i), a) in rel.edges.iter().zip(&alpha) {
            *sums.entry(i).or_default() += a;
        }
        for s in sums.values() {
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

#[test]
fn criterion_02_message_passing_oracles() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 4;
    let (mut dense_err, mut naive_err, mut sum_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..10 {
        // homogeneous GCN layer against the dense matrix product
        let n = rng.random_range(2..=6);
        let edges = random_symmetric_edges(&mut rng, n, 0.5);
        let h = random_matrix(&mut rng, n, dim);
        for single_norm in [true, false] {
            let options = LayerOptions {
                dim,
                att_dim: 3,
                residual: false,
                single_norm,
            };
            let stack = HeteroStack::new(
                "g",
                Topology::homogeneous("N", n, edges.clone(), Aggregation::Gcn),
                options,
                1,
            );
            let mut store = ParamStore::new();
            stack.register(&mut store, &mut rng);
            let got = hetero_layer(&stack, &NodeStateMap::new(vec![h.clone()]), &store, 0).unwrap();
            let want = dense_gcn(n, &edges, &h, store.get("g.0.NN.w").unwrap(), !single_norm);
            dense_err = dense_err.max(got.states[0].max_abs_diff(&want));
        }

        // two node types, four relations, naive loop against the batched layer
        let n_l = rng.random_range(1..=3);
        let n_h = 6 - n_l - rng.random_range(0..=2);
        let mut relations = Vec::new();
        let specs = [
            ("LL", 0, 0, Aggregation::Gcn),
            ("HH", 1, 1, Aggregation::Gcn),
            ("LH", 0, 1, Aggregation::Attention),
            ("HL", 1, 0, Aggregation::Attention),
        ];
        for (name, s, t, kind) in specs {
            let counts = [n_l, n_h];
            let edges = if s == t {
                random_symmetric_edges(&mut rng, counts[s], 0.6)
            } else {
                random_directed_edges(&mut rng, counts[s], counts[t], 0.6)
            };
            if !edges.is_empty() {
                relations.push(Relation {
                    name: name.into(),
                    source: s,
                    target: t,
                    edges,
                    kind,
                });
            }
        }
        let topo = Topology {
            slot_names: vec!["L".into(), "H".into()],
            counts: vec![n_l, n_h],
            relations,
        };
        let stack = HeteroStack::new(
            "g",
            topo,
            LayerOptions {
                dim,
                att_dim: 3,
                residual: true,
                single_norm: false,
            },
            1,
        );
        let mut store = ParamStore::new();
        stack.register(&mut store, &mut rng);
        let states = NodeStateMap::new(vec![random_matrix(&mut rng, n_l, dim), random_matrix(&mut rng, n_h, dim)]);
        let got = hetero_layer(&stack, &states, &store, 0).unwrap();
        let want = naive_layer(&stack, &store, &states);
        for (g, w) in got.states.iter().zip(&want) {
            naive_err = naive_err.max(g.max_abs_diff(w));
        }
        sum_err = sum_err.max(attention_sums(&stack, &store, &states));
        let _ = case;
    }
    // attention normalization on the full bearing topology
    let graph = bearing_topology();
    let stack = HeteroStack::new(
        "g",
        Topology::from_graph(&graph),
        LayerOptions {
            dim,
            att_dim: 3,
            residual: true,
            single_norm: false,
        },
        1,
    );
    let mut store = ParamStore::new();
    stack.register(&mut store, &mut rng);
    let states = NodeStateMap::new(vec![
        random_matrix(&mut rng, graph.count(NodeType::L), dim),
        random_matrix(&mut rng, graph.count(NodeType::H), dim),
    ]);
    sum_err = sum_err.max(attention_sums(&stack, &store, &states));

    let ok = dense_err <= 1e-10 && naive_err <= 1e-10 && sum_err <= 1e-6;
    report(
        2,
        "message-passing oracles",
        ok,
        &format!("dense GCN err {dense_err:.1e} <= 1e-10, naive loop err {naive_err:.1e} <= 1e-10, |sum(alpha)-1| {sum_err:.1e} <= 1e-6"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_equivariance() {
    let _g = serial();
    let graph = bearing_topology();
    let config = htgnn_core::model::ModelConfig::bearing(Variant::Htgnn);
    let model = build_variant(&config, &graph, 5).unwrap();
    let (n_l, n_h) = (graph.count(NodeType::L), graph.count(NodeType::H));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let windows: Vec<_> = (0..2)
        .map(|_| {
            let mut w = toy_windows(1, rng.random())[0].clone();
            w.x_l = random_matrix(&mut rng, n_l, config.window);
            w.x_h = random_matrix(&mut rng, n_h, config.window);
            w.w = random_matrix(&mut rng, 1, config.window);
            w
        })
        .collect();
    let refs: Vec<_> = windows.iter().collect();
    let base = model.inspect(&refs).unwrap();
    let counts = [n_l, n_h];
    let mut exact = 0;
    for _ in 0..20 {
        let perms: Vec<Vec<usize>> = counts
            .iter()
            .map(|&n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let permuted = model.permute_nodes(&perms).unwrap();
        let moved: Vec<_> = windows
            .iter()
            .map(|w| {
                let mut m = w.clone();
                for (i, &pi) in perms[0].iter().enumerate() {
                    m.x_l.row_mut(pi).copy_from_slice(w.x_l.row(i));
                }
                for (i, &pi) in perms[1].iter().enumerate() {
                    m.x_h.row_mut(pi).copy_from_slice(w.x_h.row(i));
                }
                m
            })
            .collect();
        let moved_refs: Vec<_> = moved.iter().collect();
        let out = permuted.inspect(&moved_refs).unwrap();
        let mut same = true;
        for (slot, &n) in counts.iter().enumerate() {
            for b in 0..windows.len() {
                for i in 0..n {
                    let want = base.states[slot].row(b * n + i);
                    let got = out.states[slot].row(b * n + perms[slot][i]);
                    same &= want.iter().zip(got).all(|(x, y)| x.to_bits() == y.to_bits());
                }
            }
        }
        exact += usize::from(same);
    }
    let ok = exact == 20;
    report(3, "equivariance", ok, &format!("{exact}/20 permutations bit-equal"));
    assert!(ok);
}

#[test]
fn criterion_04_encoder_contracts() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = MultiScaleDims::default();
    let d_w = 5;
    let gated = MultiScaleEncoder::new("enc", &dims, 30, 5, 5, Some(d_w));
    let plain = MultiScaleEncoder::new("enc", &dims, 30, 5, 5, None);
    let mut store = ParamStore::new();
    gated.register(&mut store, &mut rng);

    let (mut g_min, mut g_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let h_w: Vec<f64> = (0..d_w).map(|_| rng.random_range(-3.0..3.0)).collect();
        for layer in gated.small.layers.iter().chain(&gated.large.layers) {
            for g in gate_values(&h_w, layer, &store).unwrap() {
                g_min = g_min.min(g);
                g_max = g_max.max(g);
            }
        }
    }
    let gate_ok = g_min > 0.0 && g_max < 1.0;

    let mut unit_err = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h_w: Vec<f64> = (0..d_w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let forced = encode_high_freq(&x, &h_w, &gated, &store, GateMode::Unit).unwrap();
        let ungated = encode_high_freq(&x, &[], &plain, &store, GateMode::Conditioned).unwrap();
        for (a, b) in forced.iter().zip(&ungated) {
            unit_err = unit_err.max((a - b).abs());
        }
    }

    let gru = GruEncoder::new("gru", 1, 10, GruInit::Exogenous { d_w }, true);
    let mut gstore = ParamStore::new();
    gru.register(&mut gstore, &mut rng);
    // initial-state influence decays geometrically, keep the window short
    let x: Vec<f64> = (0..8).map(|t| (t as f64 * 0.3).sin()).collect();
    let h1 = vec![0.1, -0.2, 0.3, 0.0, 0.5];
    let h2 = vec![-0.4, 0.2, 0.1, 0.6, -0.1];
    let o1 = encode_low_freq(&x, &h1, &gru, &gstore).unwrap();
    let o2 = encode_low_freq(&x, &h2, &gru, &gstore).unwrap();
    let gru_gap = o1.iter().zip(&o2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let ok = gate_ok && unit_err <= 1e-12 && gru_gap > 1e-8;
    report(
        4,
        "encoder contracts",
        ok,
        &format!("gate range [{g_min:.4}, {g_max:.4}] in (0,1); unit gate vs ungated {unit_err:.1e} <= 1e-12; GRU init gap {gru_gap:.3e} > 1e-8"),
    );
    assert!(ok);
}

fn split_keys(windows: &[SensorWindow]) -> HashSet<(usize, usize)> {
    windows.iter().map(|w| (w.meta.condition, w.meta.start)).collect()
}

fn leakage_free(split: &Split) -> bool {
    let (tr, va, te) = (split_keys(&split.train), split_keys(&split.val), split_keys(&split.test));
    let disjoint = tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te);
    // within every group, train/val windows precede test windows or live on other days
    let mut last_fit: BTreeMap<usize, usize> = BTreeMap::new();
    for w in split.train.iter().chain(&split.val) {
        let e = last_fit.entry(w.meta.condition).or_default();
        *e = (*e).max(w.meta.start);
    }
    let ordered = split
        .test
        .iter()
        .all(|w| last_fit.get(&w.meta.condition).is_none_or(|&s| s < w.meta.start));
    disjoint && ordered
}

#[test]
fn criterion_05_data_pipeline() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts_ok = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=300);
        let len = rng.random_range(1..=n);
        let stride = rng.random_range(1..=10);
        let series = RawSeries {
            condition: OperatingCondition::Bearing {
                f_x: 1.0,
                f_y: 1.0,
                speed: 10.0,
            },
            group: 0,
            x_l: Matrix::zeros(1, n),
            x_h: Matrix::zeros(1, n),
            w: Matrix::zeros(1, n),
            y: Matrix::zeros(1, n),
        };
        let expected = (n - len) / stride + 1;
        let got = window_dataset(&series, 0, len, stride).unwrap().len();
        counts_ok += usize::from(got == expected && window_count(n, len, stride) == expected);
    }

    let bearing = generate_bearing_like(&BearingGenConfig::default(), 0).unwrap();
    let bridge = generate_bridge_like(&BridgeGenConfig::default(), 0).unwrap();
    let mut leak_ok = true;
    for seed in 0..3 {
        leak_ok &= leakage_free(&bearing.split(seed).unwrap());
        let s = bridge.split(seed).unwrap();
        leak_ok &= leakage_free(&s);
        leak_ok &= s.test.iter().all(|w| w.meta.group % 2 == 0);
        leak_ok &= s.train.iter().chain(&s.val).all(|w| w.meta.group % 2 == 1);
    }

    let split = bearing.split(0).unwrap();
    let per_condition = |ws: &[SensorWindow]| {
        let mut m: BTreeMap<usize, usize> = BTreeMap::new();
        for w in ws {
            *m.entry(w.meta.condition).or_default() += 1;
        }
        m
    };
    let (tr, va, te) = (per_condition(&split.train), per_condition(&split.val), per_condition(&split.test));
    let n_cond = bearing.series.len();
    let mut fractions_ok = true;
    for c in 0..n_cond {
        let (a, b, t) = (tr.get(&c).copied().unwrap_or(0), va.get(&c).copied().unwrap_or(0), te.get(&c).copied().unwrap_or(0));
        let total = (a + b + t) as f64;
        fractions_ok &= (a as f64 - 0.4 * total).abs() <= 1.0
            && (b as f64 - 0.1 * total).abs() <= 1.0
            && (t as f64 - 0.5 * total).abs() <= 1.0;
    }
    let all_present = n_cond == 55 && tr.len() == 55 && te.len() == 55;

    let ok = counts_ok == 50 && leak_ok && fractions_ok && all_present;
    report(
        5,
        "data pipeline",
        ok,
        &format!(
            "window counts {counts_ok}/50; leakage-free {leak_ok}; 40/10/50 per condition {fractions_ok}; conditions in train {} / test {} of {n_cond}",
            tr.len(),
            te.len()
        ),
    );
    assert!(ok);
}

/// R² of an ordinary least-squares fit with intercept.
fn ols_r2(features: &[Vec<f64>], y: &[f64]) -> f64 {
    let p = features[0].len() + 1;
    let rows: Vec<Vec<f64>> = features.iter().map(|f| std::iter::once(1.0).chain(f.iter().copied()).collect()).collect();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += r[i] * r[j];
            }
            a[i][p] += r[i] * t;
        }
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..p {
            if row != col && a[col][col] != 0.0 {
                let f = a[row][col] / a[col][col];
                for k in col..=p {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|i| if a[i][i] == 0.0 { 0.0 } else { a[i][p] / a[i][i] }).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (r, &t) in rows.iter().zip(y) {
        let pred: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
        ss_res += (t - pred) * (t - pred);
        ss_tot += (t - mean) * (t - mean);
    }
    1.0 - ss_res / ss_tot
}

fn node_row(ds: &Dataset, position: &str, ty: NodeType) -> usize {
    let g = ds.graph.nodes().iter().position(|n| n.position == position && n.node_type == ty).unwrap();
    ds.graph.local_index(g)
}

#[test]
fn criterion_06_generator_well_posedness() {
    let _g = serial();
    // bearing: L means over speed separate F_x and F_y, vibration frequency tracks speed
    let bearing = generate_bearing_like(&BearingGenConfig::default().noiseless(), 0).unwrap();
    let windows = bearing.windows().unwrap();
    let (z1, z0) = (node_row(&bearing, "B1@270", NodeType::L), node_row(&bearing, "B1@090", NodeType::L));
    let features: Vec<Vec<f64>> = windows
        .iter()
        .map(|w| {
            let speed = w.w.get(0, 0);
            let mean = |r: usize| w.x_l.row(r).iter().sum::<f64>() / w.x_l.cols() as f64 / speed;
            let f0 = dominant_bin(w.x_h.row(0)).unwrap() as f64;
            vec![mean(z1), mean(z0), f0]
        })
        .collect();
    let r2_fx = ols_r2(&features, &windows.iter().map(|w| w.y[0]).collect::<Vec<_>>());
    let r2_fy = ols_r2(&features, &windows.iter().map(|w| w.y[1]).collect::<Vec<_>>());

    // bridge: peak deflection over the window plus temperature recover the load
    let bridge = generate_bridge_like(&BridgeGenConfig::default().noiseless(), 0).unwrap();
    let bw = bridge.windows().unwrap();
    let features: Vec<Vec<f64>> = bw
        .iter()
        .map(|w| {
            let peak = w.x_l.row(0).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![peak, w.w.get(0, 0)]
        })
        .collect();
    let r2_load = ols_r2(&features, &bw.iter().map(|w| w.y[0]).collect::<Vec<_>>());

    // dominant frequency index doubles with speed
    let mut doubling = true;
    let mut by_load: BTreeMap<(i64, i64), BTreeMap<i64, usize>> = BTreeMap::new();
    for s in &bearing.series {
        if let OperatingCondition::Bearing { f_x, f_y, speed } = s.condition {
            let bin = dominant_bin(s.x_h.row(0)).unwrap();
            by_load.entry((f_x as i64, f_y as i64)).or_default().insert(speed as i64, bin);
        }
    }
    for bins in by_load.values() {
        doubling &= bins[&20] == 2 * bins[&10] && bins[&40] == 2 * bins[&20];
        doubling &= bins.values().collect::<Vec<_>>().windows(2).all(|p| p[0] < p[1]);
    }

    // spectral centroid rises across temperature bins
    let centroid = |s: &RawSeries| {
        (0..s.x_h.rows()).map(|r| spectral_centroid(s.x_h.row(r))).sum::<f64>() / s.x_h.rows() as f64
    };
    let mut bins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in &bridge.series {
        if let OperatingCondition::Bridge { temperature, .. } = s.condition {
            bins.entry(temperature_bin(temperature)).or_default().push(centroid(s));
        }
    }
    let means: Vec<f64> = bins.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let mut rising = means.len() == 4 && means.windows(2).all(|p| p[0] < p[1]);
    let cfg = BridgeGenConfig::default().noiseless();
    let fixed: Vec<f64> = [-5.0, 10.0, 25.0]
        .iter()
        .map(|&t| {
            let cond = OperatingCondition::Bridge {
                load: 48_000.0,
                speed_class: 1,
                speed: 80.0,
                temperature: t,
                day: 1,
                run: 0,
            };
            centroid(&bridge_series(&cfg, &bridge.graph, &cond, 0, 0).unwrap())
        })
        .collect();
    rising &= fixed.windows(2).all(|p| p[0] < p[1]);

    let ok = r2_fx > 0.95 && r2_fy > 0.95 && r2_load > 0.95 && doubling && rising;
    report(
        6,
        "generator well-posedness",
        ok,
        &format!(
            "R² F_x {r2_fx:.4}, F_y {r2_fy:.4}, load {r2_load:.4} (> 0.95); dominant bin doubles with speed {doubling}; centroid by bin {means:.4?}, at -5/10/25 °C {fixed:.4?}"
        ),
    );
    assert!(ok);
}

struct Runs {
    by_variant: BTreeMap<String, Vec<RunSummary>>,
    /// Overall test MAPE per target, per variant and seed.
    mape: BTreeMap<String, Vec<Vec<f64>>>,
}

const SEEDS: [u64; 3] = [0, 1, 2];
const ABLATION: [Variant; 4] = [
    Variant::Htgnn,
    Variant::HtgnnWoExo,
    Variant::CnnGcnVib,
    Variant::GruGcnVib,
];

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let dataset = generate_bearing_like(&BearingGenConfig::default(), 0).unwrap();
        let split = dataset.split(0).unwrap();
        let mut by_variant = BTreeMap::new();
        let mut mape_map = BTreeMap::new();
        for v in ABLATION {
            let mut summaries = Vec::new();
            let mut mapes = Vec::new();
            for seed in SEEDS {
                let cfg = experiment::model_config(dataset.manifest.kind, v);
                let tcfg = TrainConfig {
                    seed,
                    ..experiment::train_config(dataset.manifest.kind)
                };
                let run = experiment::run(&dataset, &split, &cfg, &tcfg, CategoryKey::Speed).unwrap();
                let preds = run.model.predict(&split.test).unwrap();
                let per_target: Vec<f64> = (0..2)
                    .map(|k| {
                        let t: Vec<f64> = split.test.iter().map(|w| w.y[k]).collect();
                        let p: Vec<f64> = preds.iter().map(|p| p[k]).collect();
                        mape(&t, &p).unwrap()
                    })
                    .collect();
                println!(
                    "  run {} seed {seed}: {} epochs in {:.1}s, test loss {:.5}, MAPE F_x {:.2}% F_y {:.2}%",
                    v.name(),
                    run.summary.epochs,
                    run.summary.seconds,
                    run.summary.test_loss,
                    per_target[0],
                    per_target[1]
                );
                summaries.push(run.summary);
                mapes.push(per_target);
            }
            by_variant.insert(v.name().to_string(), summaries);
            mape_map.insert(v.name().to_string(), mapes);
        }
        Runs {
            by_variant,
            mape: mape_map,
        }
    })
}

#[test]
fn criterion_07_end_to_end_learning() {
    let _g = serial();
    let r = runs();
    let htgnn = &r.by_variant["HTGNN"];
    let mapes = &r.mape["HTGNN"];
    let mut passed = 0;
    let mut parts = Vec::new();
    for (s, m) in htgnn.iter().zip(mapes) {
        let ok = m[0] < 10.0 && m[1] < 10.0 && s.seconds < 300.0;
        passed += usize::from(ok);
        parts.push(format!(
            "seed {}: F_x {:.2}% F_y {:.2}% in {:.0}s",
            s.seed, m[0], m[1], s.seconds
        ));
    }
    let ok = passed == 3;
    report(
        7,
        "end-to-end learning",
        ok,
        &format!("{passed}/3 seeds with MAPE < 10% and < 300s ({})", parts.join("; ")),
    );
    assert!(ok);
}

#[test]
fn criterion_08_directional_ablation() {
    let _g = serial();
    let r = runs();
    let mean_loss = |v: &str| r.by_variant[v].iter().map(|s| s.test_loss).sum::<f64>() / SEEDS.len() as f64;
    let (full, wo_exo) = (mean_loss("HTGNN"), mean_loss("HTGNN_wo_EXO"));
    let mut radial_wins = 0;
    for k in 0..SEEDS.len() {
        let h = r.mape["HTGNN"][k][1];
        let vib = r.mape["CNN_GCN_vib"][k][1].min(r.mape["GRU_GCN_vib"][k][1]);
        radial_wins += usize::from(h <= vib);
    }
    let radial = |v: &str| r.mape[v].iter().map(|m| m[1]).sum::<f64>() / SEEDS.len() as f64;
    let ok = full <= wo_exo && radial_wins >= 2;
    report(
        8,
        "directional ablation",
        ok,
        &format!(
            "mean test loss HTGNN {full:.5} <= wo_EXO {wo_exo:.5}; radial MAPE HTGNN {:.2}% vs CNN_GCN_vib {:.2}% / GRU_GCN_vib {:.2}%, HTGNN better in {radial_wins}/3 seeds",
            radial("HTGNN"),
            radial("CNN_GCN_vib"),
            radial("GRU_GCN_vib")
        ),
    );
    assert!(ok);
}

/// Loss independent of its single parameter: validation never improves.
struct Flat(ParamStore);

impl Objective for Flat {
    type Sample = f64;

    fn params(&self) -> &ParamStore {
        &self.0
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.0
    }

    fn batch_loss(&self, tape: &mut Tape, p: &Bound, _: &[&f64], _: Option<&mut ChaCha8Rng>) -> htgnn_core::Result<Var> {
        let w = p.get("w");
        let z = tape.scale(w, 0.0);
        let one = tape.leaf(Matrix::filled(1, 1, 1.0));
        Ok(tape.add(z, one))
    }
}

#[test]
fn criterion_09_training_harness() {
    let _g = serial();
    let cfg = TrainConfig::default();

    // stopping rule on random validation curves
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut earliest = usize::MAX;
    for _ in 0..500 {
        let mut e = EarlyStopping::new(cfg.patience, cfg.min_epochs);
        let mut level = 1.0;
        for epoch in 1..=cfg.max_epochs {
            level *= if rng.random_bool(0.2) { 0.99 } else { 1.001 };
            e.observe(epoch, level);
            if e.should_stop(epoch) {
                earliest = earliest.min(epoch);
                break;
            }
        }
    }
    let mut flat = Flat(ParamStore::new());
    flat.0.insert("w", Matrix::filled(1, 1, 0.5));
    let state = train(&mut flat, &[0.0; 8], &[0.0; 4], &TrainConfig { batch_size: 4, ..cfg.clone() }).unwrap();
    let flat_stop = state.epoch;
    let stop_ok = earliest >= 50 && flat_stop == 50;

    // learning-rate floor
    let mut sched = LrSchedule::new(&cfg);
    let mut lr_min_seen = f64::INFINITY;
    for it in 0..1000 {
        if it % 7 == 0 {
            sched.decay();
        }
        let lr = lr_at(it, it / 25, &sched);
        lr_min_seen = lr_min_seen.min(lr);
        assert!(lr <= cfg.lr0);
    }
    let floor_ok = lr_min_seen == cfg.lr_min && state.history.iter().all(|r| r.lr >= cfg.lr_min);

    // seed-identical reruns
    let graph = toy_graph();
    let train_set = toy_windows(24, 1);
    let val_set = toy_windows(8, 2);
    let short = TrainConfig {
        max_epochs: 6,
        min_epochs: 1,
        patience: 5,
        warmup_iters: 4,
        batch_size: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = build_variant(&toy_config(Variant::Htgnn), &graph, 3).unwrap();
        let st = train(&mut m, &train_set, &val_set, &short).unwrap();
        (m, st)
    };
    let (model, a) = run();
    let (_, b) = run();
    let rerun_gap = a
        .history
        .iter()
        .zip(&b.history)
        .map(|(x, y)| (x.train_loss - y.train_loss).abs().max((x.val_loss - y.val_loss).abs()))
        .fold(0.0, f64::max);
    let rerun_ok = a.history.len() == b.history.len() && rerun_gap <= 1e-12;

    // checkpoint round trip
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    checkpoint::save(&model, &path, Dtype::F64).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    let before = model.predict(&val_set).unwrap();
    let after = loaded.predict(&val_set).unwrap();
    let ckpt_ok = before
        .iter()
        .flatten()
        .zip(after.iter().flatten())
        .all(|(x, y)| x.to_bits() == y.to_bits());

    let ok = stop_ok && floor_ok && rerun_ok && ckpt_ok;
    report(
        9,
        "training harness",
        ok,
        &format!(
            "earliest stop {earliest} >= 50, flat curve stops at {flat_stop}; lr floor {lr_min_seen:e}; rerun gap {rerun_gap:.1e} <= 1e-12; checkpoint bit-identical {ckpt_ok}"
        ),
    );
    assert!(ok);
}

/// Truth plus 0.02 in condition 0 and 0.04 elsewhere.
struct Offset;

impl Predictor for Offset {
    fn predict(&self, windows: &[SensorWindow]) -> htgnn_core::Result<Vec<Vec<f64>>> {
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
fn criterion_10_metrics() {
    let _g = serial();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let values = [
        close(nrmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 0.5),
        close(nrmse(&[1.0, 5.0], &[1.0, 5.0]).unwrap(), 0.0),
        close(nrmse(&[0.0, 1.0, 2.0], &[0.1, 1.1, 2.1]).unwrap(), 0.05),
        close(mape(&[100.0], &[110.0]).unwrap(), 10.0),
        close(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0),
        close(mape(&[200.0, 50.0], &[220.0, 45.0]).unwrap(), 10.0),
        nrmse(&[1.0, 1.0], &[0.0, 2.0]).is_err(),
        mape(&[0.0], &[1.0]).is_err(),
    ];
    let values_ok = values.iter().all(|&v| v);

    // two categories at NRMSE 0.02 and 0.04 average to 0.03
    let mut windows = toy_windows(4, 10);
    for (i, w) in windows.iter_mut().enumerate() {
        w.meta.condition = i / 2;
        w.y = vec![[1.0, 2.0, 1.0, 2.0][i]];
    }
    let avg = evaluate_by_category(&Offset, &windows, CategoryKey::Condition, &["t".to_string()]).unwrap();
    let avg_ok = close(avg.categories[0].nrmse[0], 0.02)
        && close(avg.categories[1].nrmse[0], 0.04)
        && close(avg.average.nrmse[0], 0.03);

    // temperature bins as in the bridge table header, speeds as in the bearing header
    let mut w = toy_windows(1, 0).remove(0);
    let mut labels = BTreeSet::new();
    for t in [-7.3, -0.1, 0.0, 9.9, 10.0, 19.99, 20.0, 29.2] {
        w.meta.temperature = Some(t);
        labels.insert(category_of(&w, CategoryKey::Temperature).unwrap());
    }
    let temp_labels: Vec<String> = labels.into_iter().map(|(_, l)| l).collect();
    let bins_ok = temp_labels == TEMPERATURE_BINS;
    let bearing = generate_bearing_like(&BearingGenConfig::default(), 0).unwrap();
    let speeds: BTreeSet<(i64, String)> = bearing
        .windows()
        .unwrap()
        .iter()
        .map(|w| category_of(w, CategoryKey::Speed).unwrap())
        .collect();
    let speed_labels: Vec<String> = speeds.into_iter().map(|(_, l)| l).collect();
    let speeds_ok = speed_labels == ["10", "20", "30", "40", "50"];

    let ok = values_ok && avg_ok && bins_ok && speeds_ok;
    report(
        10,
        "metrics",
        ok,
        &format!("hand-computed values {values_ok}; unweighted average 0.03 {avg_ok}; temperature bins {temp_labels:?}; speed bins {speed_labels:?}"),
    );
    assert!(ok);
}
