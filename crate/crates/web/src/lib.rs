//! Browser demo: vibration spectra, context-gate response, sensor topology.
//!
//! Each operation returns a JSON string. The `wasm_bindgen` exports wrap the
//! plain functions, which are also tested natively.

use htgnn_core::data::{bearing_series, BearingGenConfig, OperatingCondition};
use htgnn_core::encoders::{encode_exogenous, gate_values, ExoEncoder, MultiScaleDims, MultiScaleEncoder};
use htgnn_core::graph::{bearing_topology, bridge_topology, NodeType, RelationType, V_AX};
use htgnn_core::params::ParamStore;
use htgnn_core::signal::{amplitude_spectrum, bin_frequency, dominant_bin};
use htgnn_core::tensor::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Spectrum {
    speed: f64,
    fundamental: f64,
    dominant: Option<f64>,
    freq: Vec<f64>,
    amplitude: Vec<f64>,
    signal: Vec<f64>,
}

/// Spectrum of the first axial vibration sensor at one operating point.
/// `snr_db <= 0` gives a noiseless signal.
pub fn spectrum(speed: f64, f_x: f64, f_y: f64, snr_db: f64, length: usize) -> Result<String, String> {
    if !(speed > 0.0) || length < 8 {
        return Err("speed must be positive and length at least 8".into());
    }
    let config = BearingGenConfig {
        length,
        snr_db: (snr_db > 0.0).then_some(snr_db),
        ..BearingGenConfig::default()
    };
    let graph = config.layout.build().map_err(|e| e.to_string())?;
    let cond = OperatingCondition::Bearing { f_x, f_y, speed };
    let series = bearing_series(&config, &graph, &cond, 0, 0).map_err(|e| e.to_string())?;
    let row = graph
        .nodes()
        .iter()
        .filter(|n| n.node_type == NodeType::H)
        .position(|n| n.subtype == V_AX)
        .unwrap_or(0);
    let x = series.x_h.row(row);
    let amp = amplitude_spectrum(x);
    let out = Spectrum {
        speed,
        fundamental: config.freq_per_speed * speed,
        dominant: dominant_bin(x).map(|k| bin_frequency(k, length)),
        freq: (0..amp.len()).map(|k| bin_frequency(k, length)).collect(),
        amplitude: amp,
        signal: x.to_vec(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GateLayer {
    name: String,
    /// `[channel][speed]`
    gates: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct GateResponse {
    seed: u64,
    speeds: Vec<f64>,
    layers: Vec<GateLayer>,
}

/// Gate values of every gated convolution layer as the speed sweeps over
/// `[lo, hi]`, for randomly initialized parameters.
pub fn gate_response(seed: u64, lo: f64, hi: f64, steps: usize) -> Result<String, String> {
    if steps < 2 || !(hi > lo) {
        return Err("need at least two steps and hi > lo".into());
    }
    let d_w = 5;
    let exo = ExoEncoder::new("exo", 1, 10, d_w);
    let enc = MultiScaleEncoder::new("enc", &MultiScaleDims::default(), 30, 5, 5, Some(d_w));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    exo.register(&mut store, &mut rng);
    enc.register(&mut store, &mut rng);
    let speeds: Vec<f64> = (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let layers_of = enc.small.layers.iter().chain(&enc.large.layers);
    let mut layers: Vec<GateLayer> = layers_of
        .clone()
        .map(|l| GateLayer {
            name: l.prefix.clone(),
            gates: vec![Vec::with_capacity(steps); l.c_out],
        })
        .collect();
    for &s in &speeds {
        let w = Matrix::filled(1, 30, (s - mid) / half);
        let h_w = encode_exogenous(&w, &exo, &store).map_err(|e| e.to_string())?;
        for (out, layer) in layers.iter_mut().zip(layers_of.clone()) {
            for (c, g) in gate_values(&h_w, layer, &store).map_err(|e| e.to_string())?.into_iter().enumerate() {
                out.gates[c].push(g);
            }
        }
    }
    serde_json::to_string(&GateResponse { seed, speeds, layers }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TopoNode {
    id: usize,
    #[serde(rename = "type")]
    node_type: &'static str,
    subtype: String,
    position: String,
}

#[derive(Serialize)]
struct TopoEdge {
    source: usize,
    target: usize,
    relation: String,
}

#[derive(Serialize)]
struct Topology {
    name: String,
    nodes: Vec<TopoNode>,
    edges: Vec<TopoEdge>,
}

/// Nodes and typed edges of the `bearing` or `bridge` sensor graph.
pub fn topology(name: &str) -> Result<String, String> {
    let graph = match name {
        "bearing" => bearing_topology(),
        "bridge" => bridge_topology(),
        _ => return Err(format!("unknown topology `{name}` (expected bearing or bridge)")),
    };
    let nodes = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| TopoNode {
            id,
            node_type: n.node_type.as_str(),
            subtype: n.subtype.clone(),
            position: n.position.clone(),
        })
        .collect();
    let edges = RelationType::ALL
        .iter()
        .flat_map(|&rel| {
            graph.edges(rel).iter().map(move |&(s, t)| TopoEdge {
                source: s,
                target: t,
                relation: rel.to_string(),
            })
        })
        .collect();
    serde_json::to_string(&Topology {
        name: name.into(),
        nodes,
        edges,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = spectrum)]
pub fn spectrum_js(speed: f64, f_x: f64, f_y: f64, snr_db: f64, length: usize) -> Result<String, JsValue> {
    spectrum(speed, f_x, f_y, snr_db, length).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = gateResponse)]
pub fn gate_response_js(seed: u32, lo: f64, hi: f64, steps: usize) -> Result<String, JsValue> {
    gate_response(u64::from(seed), lo, hi, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = topology)]
pub fn topology_js(name: &str) -> Result<String, JsValue> {
    topology(name).map_err(|e| JsValue::from_str(&e))
}
