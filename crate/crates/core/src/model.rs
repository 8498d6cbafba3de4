//! End-to-end models: HTGNN, its ablations and the sequence baselines.
//!
//! Every model maps a batch of [`SensorWindow`]s to one prediction row per
//! window. Inputs and targets are standardized with a [`Normalizer`] fitted
//! on training data; predictions are returned in original units.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvSpec, ScatterPlan, Tape, Var};
use crate::data::SensorWindow;
use crate::encoders::{
    sample_of_rows, ConvStack, ExoEncoder, GateMode, GruEncoder, GruInit, MultiScaleDims, MultiScaleEncoder,
};
use crate::error::{Error, Result};
use crate::graph::{HeteroTemporalGraph, NodeType, RelationType};
use crate::interaction::{Aggregation, HeteroStack, LayerOptions, Topology, LEAKY_SLOPE};
use crate::params::{Bound, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "HTGNN")]
    Htgnn,
    #[serde(rename = "HTGNN_wo_EXO")]
    HtgnnWoExo,
    #[serde(rename = "GRU_GAT_homog")]
    GruGatHomog,
    #[serde(rename = "GRU_GCN_homog")]
    GruGcnHomog,
    #[serde(rename = "CNN_GCN_homog")]
    CnnGcnHomog,
    #[serde(rename = "CNN_GCN_vib")]
    CnnGcnVib,
    #[serde(rename = "GRU_GCN_vib")]
    GruGcnVib,
    #[serde(rename = "BiLSTM")]
    BiLstm,
    #[serde(rename = "CNN1D")]
    Cnn1d,
    #[serde(rename = "GCNN1D")]
    Gcnn1d,
    #[serde(rename = "MTGAT")]
    Mtgat,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Htgnn,
        Variant::HtgnnWoExo,
        Variant::GruGatHomog,
        Variant::GruGcnHomog,
        Variant::CnnGcnHomog,
        Variant::CnnGcnVib,
        Variant::GruGcnVib,
        Variant::BiLstm,
        Variant::Cnn1d,
        Variant::Gcnn1d,
        Variant::Mtgat,
    ];

    /// The graph-based variants compared in the ablation study.
    pub const ABLATION: [Variant; 7] = [
        Variant::Htgnn,
        Variant::HtgnnWoExo,
        Variant::GruGatHomog,
        Variant::GruGcnHomog,
        Variant::CnnGcnHomog,
        Variant::CnnGcnVib,
        Variant::GruGcnVib,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Htgnn => "HTGNN",
            Variant::HtgnnWoExo => "HTGNN_wo_EXO",
            Variant::GruGatHomog => "GRU_GAT_homog",
            Variant::GruGcnHomog => "GRU_GCN_homog",
            Variant::CnnGcnHomog => "CNN_GCN_homog",
            Variant::CnnGcnVib => "CNN_GCN_vib",
            Variant::GruGcnVib => "GRU_GCN_vib",
            Variant::BiLstm => "BiLSTM",
            Variant::Cnn1d => "CNN1D",
            Variant::Gcnn1d => "GCNN1D",
            Variant::Mtgat => "MTGAT",
        }
    }

    /// Name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Mtgat => "MTGAT-style",
            v => v.name(),
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }

    /// Uses low-frequency sensors as graph nodes.
    pub fn uses_graph(self) -> bool {
        Self::ABLATION.contains(&self)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s || v.label() == s)
            .ok_or_else(|| {
                Error::InvalidVariant(format!("`{s}`; valid names: {}", Self::names().join(", ")))
            })
    }
}

/// Sizes of the baseline models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineDims {
    pub lstm_hidden: usize,
    pub cnn_channels: usize,
    pub cnn_kernel: usize,
    pub cnn_layers: usize,
    pub gcnn_channels: Vec<usize>,
    pub gcnn_features: usize,
    pub mtgat_kernel: usize,
    pub mtgat_att_dim: usize,
    pub mtgat_hidden: usize,
}

impl Default for BaselineDims {
    fn default() -> Self {
        Self {
            lstm_hidden: 32,
            cnn_channels: 16,
            cnn_kernel: 5,
            cnn_layers: 3,
            gcnn_channels: vec![32, 32, 1],
            gcnn_features: 20,
            mtgat_kernel: 7,
            mtgat_att_dim: 16,
            mtgat_hidden: 32,
        }
    }
}

/// Model architecture and sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Window length `L`.
    pub window: usize,
    pub n_exo: usize,
    pub d_y: usize,
    pub d_w: usize,
    pub exo_hidden: usize,
    pub d_l: usize,
    pub d_small: usize,
    pub d_large: usize,
    /// Node-state size inside message passing.
    pub d: usize,
    pub att_dim: usize,
    pub layers: usize,
    pub d_graph: usize,
    pub readout_hidden: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub residual: bool,
    pub single_norm: bool,
    pub silu_in_gru: bool,
    pub conv: MultiScaleDims,
    pub baseline: BaselineDims,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::bearing(Variant::Htgnn)
    }
}

impl ModelConfig {
    /// Defaults for the two-bearing rig: 30-step windows, speed as context,
    /// axial and radial load as targets.
    pub fn bearing(variant: Variant) -> Self {
        Self {
            variant,
            window: 30,
            n_exo: 1,
            d_y: 2,
            d_w: 5,
            exo_hidden: 16,
            d_l: 10,
            d_small: 5,
            d_large: 5,
            d: 10,
            att_dim: 10,
            layers: 3,
            d_graph: 20,
            readout_hidden: 20,
            head_hidden: 40,
            dropout: 0.2,
            residual: true,
            single_norm: false,
            silu_in_gru: true,
            conv: MultiScaleDims::default(),
            baseline: BaselineDims::default(),
        }
    }

    /// Defaults for the bridge: 60-step windows, temperature and speed as
    /// context, train load as target.
    pub fn bridge(variant: Variant) -> Self {
        Self {
            window: 60,
            n_exo: 2,
            d_y: 1,
            d_w: 10,
            ..Self::bearing(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window", self.window),
            ("n_exo", self.n_exo),
            ("d_y", self.d_y),
            ("d_w", self.d_w),
            ("exo_hidden", self.exo_hidden),
            ("d_l", self.d_l),
            ("d_small", self.d_small),
            ("d_large", self.d_large),
            ("d", self.d),
            ("att_dim", self.att_dim),
            ("d_graph", self.d_graph),
            ("readout_hidden", self.readout_hidden),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        if self.conv.channels.is_empty() || self.conv.channels.contains(&0) {
            return Err(Error::InvalidConfig("conv channels must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Mean and standard deviation of one input channel or target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub const IDENTITY: Stat = Stat { mean: 0.0, std: 1.0 };

    fn fit(values: impl Iterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Stat::IDENTITY;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Stat {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-sensor and per-target standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_l: Vec<Stat>,
    pub x_h: Vec<Stat>,
    pub w: Vec<Stat>,
    pub y: Vec<Stat>,
}

impl Normalizer {
    pub fn identity(n_l: usize, n_h: usize, n_w: usize, d_y: usize) -> Self {
        Self {
            x_l: vec![Stat::IDENTITY; n_l],
            x_h: vec![Stat::IDENTITY; n_h],
            w: vec![Stat::IDENTITY; n_w],
            y: vec![Stat::IDENTITY; d_y],
        }
    }

    /// Statistics of every row of every window.
    pub fn fit(windows: &[SensorWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Dataset("cannot fit a normalizer on no windows".into()))?;
        let rows = |get: &dyn Fn(&SensorWindow) -> &Matrix, n: usize| -> Vec<Stat> {
            (0..n)
                .map(|r| Stat::fit(windows.iter().flat_map(|w| get(w).row(r).iter().copied())))
                .collect()
        };
        Ok(Self {
            x_l: rows(&|w| &w.x_l, first.x_l.rows()),
            x_h: rows(&|w| &w.x_h, first.x_h.rows()),
            w: rows(&|w| &w.w, first.w.rows()),
            y: (0..first.y.len())
                .map(|k| Stat::fit(windows.iter().map(|w| w.y[k])))
                .collect(),
        })
    }
}

/// Standardized inputs of `size` windows stacked sample-major.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    /// `size · N_L × L`
    pub x_l: Matrix,
    /// `size · N_H × L`
    pub x_h: Matrix,
    /// `size · N_w × L`
    pub w: Matrix,
    /// `size × d_y`
    pub y: Matrix,
}

/// Training mode draws dropout masks from the given generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Three-layer perceptron with SiLU and dropout between layers.
#[derive(Clone, Debug, PartialEq)]
struct Head {
    prefix: String,
    sizes: [usize; 4],
    dropout: f64,
}

impl Head {
    fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for k in 0..3 {
            let (i, o) = (self.sizes[k], self.sizes[k + 1]);
            store.insert_uniform(format!("{}.{k}.w", self.prefix), i, o, i, rng);
            store.insert_zeros(format!("{}.{k}.b", self.prefix), 1, o);
        }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, mode: &mut Mode) -> Var {
        let mut h = x;
        for k in 0..3 {
            h = tape.affine(h, p.get(&format!("{}.{k}.w", self.prefix)), p.get(&format!("{}.{k}.b", self.prefix)));
            if k < 2 {
                h = tape.silu(h);
                h = dropout(tape, h, self.dropout, mode);
            }
        }
        h
    }
}

fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: &mut Mode) -> Var {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let n = tape.value(x).len();
            let keep = 1.0 - rate;
            let mask: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            tape.mask_mul(x, mask.into())
        }
        _ => x,
    }
}

/// LSTM cell with a single bias vector; gate order input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
struct Lstm {
    prefix: String,
    d_in: usize,
    hidden: usize,
}

impl Lstm {
    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let h = self.hidden;
        store.insert_uniform(self.name("w_in"), self.d_in, 4 * h, self.d_in, rng);
        store.insert_uniform(self.name("w_hid"), h, 4 * h, h, rng);
        store.insert_zeros(self.name("b"), 1, 4 * h);
    }

    /// Final hidden state after running over `steps` in order.
    fn run<'s>(&self, tape: &mut Tape, p: &Bound, steps: impl Iterator<Item = &'s Var>, rows: usize) -> Var {
        let d = self.hidden;
        let (w_in, w_hid, b) = (p.get(&self.name("w_in")), p.get(&self.name("w_hid")), p.get(&self.name("b")));
        let mut h = tape.zeros(rows, d);
        let mut c = tape.zeros(rows, d);
        for &x in steps {
            let gi = tape.affine(x, w_in, b);
            let gh = tape.matmul(h, w_hid);
            let g = tape.add(gi, gh);
            let hc = tape.lstm_cell(g, c);
            h = tape.slice_cols(hc, 0, d);
            c = tape.slice_cols(hc, d, d);
        }
        h
    }
}

/// Bidirectional LSTM returning `[forward final ∥ backward final]`.
#[derive(Clone, Debug, PartialEq)]
struct BiLstm {
    fwd: Lstm,
    bwd: Lstm,
}

impl BiLstm {
    fn new(prefix: &str, d_in: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm {
                prefix: format!("{prefix}.fwd"),
                d_in,
                hidden,
            },
            bwd: Lstm {
                prefix: format!("{prefix}.bwd"),
                d_in,
                hidden,
            },
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.fwd.register(store, rng);
        self.bwd.register(store, rng);
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, steps: &[Var], rows: usize) -> Var {
        let f = self.fwd.run(tape, p, steps.iter(), rows);
        let b = self.bwd.run(tape, p, steps.iter().rev(), rows);
        tape.concat_cols(&[f, b])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Low,
    High,
    Exo,
}

#[derive(Clone, Debug, PartialEq)]
enum NodeEncoder {
    Gru(GruEncoder),
    Cnn(MultiScaleEncoder),
}

impl NodeEncoder {
    fn d_out(&self) -> usize {
        match self {
            NodeEncoder::Gru(g) => g.hidden,
            NodeEncoder::Cnn(c) => c.d_out(),
        }
    }

    fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        match self {
            NodeEncoder::Gru(g) => g.register(store, rng),
            NodeEncoder::Cnn(c) => c.register(store, rng),
        }
    }
}

/// Encoder for one node slot and the inputs feeding it.
#[derive(Clone, Debug, PartialEq)]
struct SlotEncoder {
    name: String,
    sources: Vec<Source>,
    encoder: NodeEncoder,
    /// Projection to the message-passing size when the encoder size differs.
    project: bool,
}

#[derive(Clone, Debug, PartialEq)]
struct GraphNet {
    exo: Option<ExoEncoder>,
    exo_to_head: bool,
    slots: Vec<SlotEncoder>,
    stack: HeteroStack,
    readout: BiLstm,
    head: Head,
}

#[derive(Clone, Debug, PartialEq)]
struct LstmNet {
    lstm: BiLstm,
    head: Head,
}

#[derive(Clone, Debug, PartialEq)]
struct CnnNet {
    stack: ConvStack,
    head: Head,
}

#[derive(Clone, Debug, PartialEq)]
struct GcnnNet {
    exo: ExoEncoder,
    branches: [ConvStack; 2],
    features: usize,
    head: Head,
}

#[derive(Clone, Debug, PartialEq)]
struct MtgatNet {
    channels: usize,
    kernel: usize,
    gru: GruEncoder,
    head: Head,
}

#[derive(Clone, Debug, PartialEq)]
enum Arch {
    Graph(Box<GraphNet>),
    Lstm(LstmNet),
    Cnn(CnnNet),
    Gcnn(GcnnNet),
    Mtgat(MtgatNet),
}

/// Intermediate values of a graph-based model for one batch.
#[derive(Clone, Debug)]
pub struct Inspection {
    pub h_w: Option<Matrix>,
    /// Encoder outputs per node slot (`size · count × d` each).
    pub encoded: Vec<Matrix>,
    /// Node states after message passing, before the readout.
    pub states: Vec<Matrix>,
    /// Standardized predictions.
    pub output: Matrix,
}

/// A model with its graph, parameters and input standardization.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub graph: HeteroTemporalGraph,
    pub params: ParamStore,
    pub normalizer: Normalizer,
    arch: Arch,
}

/// Builds a model with freshly initialized parameters.
pub fn build_variant(config: &ModelConfig, graph: &HeteroTemporalGraph, seed: u64) -> Result<Model> {
    config.validate()?;
    let arch = build_arch(config, graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    register_arch(&arch, &mut params, &mut rng, config);
    Ok(Model {
        config: config.clone(),
        graph: graph.clone(),
        normalizer: Normalizer::identity(
            graph.count(NodeType::L),
            graph.count(NodeType::H),
            config.n_exo,
            config.d_y,
        ),
        params,
        arch,
    })
}

/// Channel-stacked raw window `[X_L; X_H; W]` (`channels × L`).
pub fn channel_stack(w: &SensorWindow) -> Matrix {
    let rows: Vec<&[f64]> = (0..w.x_l.rows())
        .map(|r| w.x_l.row(r))
        .chain((0..w.x_h.rows()).map(|r| w.x_h.row(r)))
        .chain((0..w.w.rows()).map(|r| w.w.row(r)))
        .collect();
    Matrix::from_rows(&rows)
}

fn homogeneous_edges(graph: &HeteroTemporalGraph, n_exo: usize) -> Vec<(usize, usize)> {
    let n = graph.num_nodes();
    let mut edges: Vec<(usize, usize)> = RelationType::ALL
        .iter()
        .flat_map(|&r| graph.edges(r).iter().flat_map(|&(s, t)| [(s, t), (t, s)]))
        .collect();
    for e in n..n + n_exo {
        for s in 0..n {
            edges.push((e, s));
            edges.push((s, e));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn build_arch(c: &ModelConfig, graph: &HeteroTemporalGraph) -> Result<Arch> {
    let n_l = graph.count(NodeType::L);
    let n_h = graph.count(NodeType::H);
    let channels = n_l + n_h + c.n_exo;
    let head = |input: usize| Head {
        prefix: "head".into(),
        sizes: [input, c.head_hidden, c.head_hidden, c.d_y],
        dropout: c.dropout,
    };
    let exo = || ExoEncoder::new("exo", c.n_exo, c.exo_hidden, c.d_w);
    let gru = |name: &str, init: GruInit| {
        NodeEncoder::Gru(GruEncoder::new(format!("enc_{name}"), 1, c.d_l, init, c.silu_in_gru))
    };
    let cnn = |name: &str, gate: Option<usize>| {
        NodeEncoder::Cnn(MultiScaleEncoder::new(
            format!("enc_{name}"),
            &c.conv,
            c.window,
            c.d_small,
            c.d_large,
            gate,
        ))
    };
    let slot = |name: &str, sources: Vec<Source>, encoder: NodeEncoder| SlotEncoder {
        name: name.into(),
        project: encoder.d_out() != c.d,
        sources,
        encoder,
    };
    let options = LayerOptions {
        dim: c.d,
        att_dim: c.att_dim,
        residual: c.residual,
        single_norm: c.single_norm,
    };
    let exo_init = GruInit::Exogenous { d_w: c.d_w };
    let graph_net = |exo: Option<ExoEncoder>, exo_to_head: bool, slots: Vec<SlotEncoder>, topology: Topology| {
        let extra = if exo_to_head { c.d_w } else { 0 };
        Arch::Graph(Box::new(GraphNet {
            exo,
            exo_to_head,
            slots,
            stack: HeteroStack::new("gnn", topology, options, c.layers),
            readout: BiLstm::new("readout.lstm", c.d_graph, c.readout_hidden),
            head: head(2 * c.readout_hidden + extra),
        }))
    };
    let homog = |encoder: NodeEncoder, kind: Aggregation| {
        let topo = Topology::homogeneous("N", channels, homogeneous_edges(graph, c.n_exo), kind);
        graph_net(None, false, vec![slot("N", vec![Source::Low, Source::High, Source::Exo], encoder)], topo)
    };
    let vib = |encoder: NodeEncoder| {
        let topo = Topology::homogeneous("H", n_h, graph.local_edges(RelationType::HH), Aggregation::Gcn);
        graph_net(Some(exo()), false, vec![slot("H", vec![Source::High], encoder)], topo)
    };
    let arch = match c.variant {
        Variant::Htgnn => graph_net(
            Some(exo()),
            false,
            vec![
                slot("L", vec![Source::Low], gru("L", exo_init)),
                slot("H", vec![Source::High], cnn("H", Some(c.d_w))),
            ],
            Topology::from_graph(graph),
        ),
        Variant::HtgnnWoExo => graph_net(
            Some(exo()),
            true,
            vec![
                slot("L", vec![Source::Low], gru("L", GruInit::Zero)),
                slot("H", vec![Source::High], cnn("H", None)),
            ],
            Topology::from_graph(graph),
        ),
        Variant::GruGatHomog => homog(gru("N", GruInit::Zero), Aggregation::Attention),
        Variant::GruGcnHomog => homog(gru("N", GruInit::Zero), Aggregation::Gcn),
        Variant::CnnGcnHomog => homog(cnn("N", None), Aggregation::Gcn),
        Variant::CnnGcnVib => vib(cnn("H", Some(c.d_w))),
        Variant::GruGcnVib => vib(gru("H", exo_init)),
        Variant::BiLstm => Arch::Lstm(LstmNet {
            lstm: BiLstm::new("lstm", channels, c.baseline.lstm_hidden),
            head: head(2 * c.baseline.lstm_hidden),
        }),
        Variant::Cnn1d => {
            let b = &c.baseline;
            let mut chans = vec![channels];
            chans.extend(std::iter::repeat_n(b.cnn_channels, b.cnn_layers));
            Arch::Cnn(CnnNet {
                stack: ConvStack::new("cnn", &chans, b.cnn_kernel, 1, None),
                head: head(b.cnn_channels * c.window),
            })
        }
        Variant::Gcnn1d => {
            let b = &c.baseline;
            let mut chans = vec![channels];
            chans.extend_from_slice(&b.gcnn_channels);
            let low = ConvStack::new("gcnn.low", &chans, c.conv.large_kernel, c.conv.large_dilation, Some(c.d_w));
            let high = ConvStack::new("gcnn.high", &chans, c.conv.small_kernel, c.conv.small_dilation, Some(c.d_w));
            Arch::Gcnn(GcnnNet {
                exo: exo(),
                head: head(2 * b.gcnn_features),
                features: b.gcnn_features,
                branches: [low, high],
            })
        }
        Variant::Mtgat => Arch::Mtgat(MtgatNet {
            channels,
            kernel: c.baseline.mtgat_kernel,
            gru: GruEncoder::new("mtgat.gru", 3 * channels, c.baseline.mtgat_hidden, GruInit::Zero, false),
            head: head(c.baseline.mtgat_hidden),
        }),
    };
    if let Arch::Graph(net) = &arch {
        for s in &net.slots {
            if let NodeEncoder::Cnn(e) = &s.encoder {
                e.validate()?;
            }
        }
        if net.stack.topology.counts.iter().all(|&n| n == 0) {
            return Err(Error::InvalidVariant(format!("{} has no nodes on this graph", c.variant)));
        }
    }
    if let Arch::Gcnn(net) = &arch {
        for l in net.branches.iter().flat_map(|b| &b.layers) {
            l.validate()?;
        }
    }
    if c.variant == Variant::Mtgat && c.baseline.mtgat_kernel % 2 == 0 {
        return Err(Error::InvalidConfig("mtgat_kernel must be odd".into()));
    }
    Ok(arch)
}

fn register_arch(arch: &Arch, store: &mut ParamStore, rng: &mut ChaCha8Rng, c: &ModelConfig) {
    match arch {
        Arch::Graph(net) => {
            if let Some(exo) = &net.exo {
                exo.register(store, rng);
            }
            for s in &net.slots {
                s.encoder.register(store, rng);
                if s.project {
                    let d_in = s.encoder.d_out();
                    store.insert_uniform(format!("enc_{}.proj", s.name), d_in, c.d, d_in, rng);
                    store.insert_zeros(format!("enc_{}.proj_b", s.name), 1, c.d);
                }
            }
            net.stack.register(store, rng);
            store.insert_uniform("readout.proj", c.d, c.d_graph, c.d, rng);
            store.insert_zeros("readout.proj_b", 1, c.d_graph);
            net.readout.register(store, rng);
            net.head.register(store, rng);
        }
        Arch::Lstm(net) => {
            net.lstm.register(store, rng);
            net.head.register(store, rng);
        }
        Arch::Cnn(net) => {
            net.stack.register(store, rng);
            net.head.register(store, rng);
        }
        Arch::Gcnn(net) => {
            net.exo.register(store, rng);
            for b in &net.branches {
                b.register(store, rng);
                let t = c.window * b.c_out();
                let name = &b.layers[0].prefix;
                let base = name.rsplit_once('.').map_or(name.as_str(), |x| x.0);
                store.insert_uniform(format!("{base}.time"), t, net.features, t, rng);
                store.insert_zeros(format!("{base}.time_b"), 1, net.features);
            }
            net.head.register(store, rng);
        }
        Arch::Mtgat(net) => {
            let ch = net.channels;
            let fan = ch * net.kernel;
            store.insert_uniform("mtgat.conv.w", ch, fan, fan, rng);
            store.insert_zeros("mtgat.conv.b", 1, ch);
            let da = c.baseline.mtgat_att_dim;
            for (name, f) in [("feat", c.window), ("time", ch)] {
                store.insert_uniform(format!("mtgat.{name}.w_att_target"), f, da, 2 * f, rng);
                store.insert_uniform(format!("mtgat.{name}.w_att_source"), f, da, 2 * f, rng);
                store.insert_uniform(format!("mtgat.{name}.a"), da, 1, da, rng);
            }
            net.gru.register(store, rng);
            net.head.register(store, rng);
        }
    }
}

/// Complete graph with self loops over `n` nodes in each of `batch` samples.
fn complete_plan(n: usize, batch: usize) -> (Arc<[usize]>, Arc<[usize]>, Arc<ScatterPlan>) {
    let mut src = Vec::with_capacity(batch * n * n);
    let mut dst = Vec::with_capacity(batch * n * n);
    for b in 0..batch {
        for i in 0..n {
            for j in 0..n {
                src.push(b * n + j);
                dst.push(b * n + i);
            }
        }
    }
    let plan = Arc::new(ScatterPlan::unweighted(batch * n, dst.clone()));
    (src.into(), dst.into(), plan)
}

/// Attention over a complete graph: `σ(Σ_j α_ij h_j)` for every node.
fn complete_attention(tape: &mut Tape, p: &Bound, name: &str, h: Var, n: usize, batch: usize) -> Var {
    let (src, dst, plan) = complete_plan(n, batch);
    let t = tape.matmul(h, p.get(&format!("mtgat.{name}.w_att_target")));
    let s = tape.matmul(h, p.get(&format!("mtgat.{name}.w_att_source")));
    let t = tape.gather_rows(t, dst);
    let s = tape.gather_rows(s, src.clone());
    let e = tape.add(t, s);
    let e = tape.leaky_relu(e, LEAKY_SLOPE);
    let score = tape.matmul(e, p.get(&format!("mtgat.{name}.a")));
    let alpha = tape.segment_softmax(score, plan.clone());
    let m = tape.gather_rows(h, src);
    let m = tape.mul_row_scalar(m, alpha);
    let out = tape.scatter(m, plan);
    tape.sigmoid(out)
}

impl Model {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Sizes of the sequence fed to the BiLSTM baseline: (steps, channels).
    pub fn sequence_shape(&self) -> Option<(usize, usize)> {
        match &self.arch {
            Arch::Lstm(net) => Some((self.config.window, net.lstm.fwd.d_in)),
            _ => None,
        }
    }

    /// Replaces the parameters after checking names and shapes.
    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if params.names() != self.params.names() {
            return Err(Error::ShapeMismatch("parameter names differ from the architecture".into()));
        }
        for ((name, a), b) in self.params.iter().zip(params.values()) {
            if a.shape() != b.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    fn counts(&self) -> (usize, usize, usize) {
        (
            self.graph.count(NodeType::L),
            self.graph.count(NodeType::H),
            self.config.n_exo,
        )
    }

    /// Checks window shapes against the graph and configuration.
    pub fn check_window(&self, w: &SensorWindow) -> Result<()> {
        let (n_l, n_h, n_w) = self.counts();
        let len = self.config.window;
        let expect = [
            ("X_L", &w.x_l, n_l),
            ("X_H", &w.x_h, n_h),
            ("W", &w.w, n_w),
        ];
        for (name, m, rows) in expect {
            if m.shape() != (rows, len) && !(rows == 0 && m.rows() == 0) {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {:?}, expected ({rows}, {len})",
                    m.shape()
                )));
            }
        }
        if w.y.len() != self.config.d_y {
            return Err(Error::ShapeMismatch(format!(
                "target has {} entries, expected {}",
                w.y.len(),
                self.config.d_y
            )));
        }
        if !(w.x_l.is_finite() && w.x_h.is_finite() && w.w.is_finite()) {
            return Err(Error::NonFiniteInput("sensor window"));
        }
        Ok(())
    }

    /// Standardizes and stacks windows.
    pub fn make_batch(&self, windows: &[&SensorWindow]) -> Result<Batch> {
        if windows.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        for w in windows {
            self.check_window(w)?;
        }
        let len = self.config.window;
        let n = &self.normalizer;
        let stack = |get: &dyn Fn(&SensorWindow) -> &Matrix, stats: &[Stat]| {
            let mut data = Vec::with_capacity(windows.len() * stats.len() * len);
            for w in windows {
                let m = get(w);
                for (r, s) in stats.iter().enumerate() {
                    data.extend(m.row(r).iter().map(|&x| s.apply(x)));
                }
            }
            Matrix::from_vec(windows.len() * stats.len(), len, data)
        };
        let y: Vec<f64> = windows
            .iter()
            .flat_map(|w| w.y.iter().zip(&n.y).map(|(&v, s)| s.apply(v)))
            .collect();
        Ok(Batch {
            size: windows.len(),
            x_l: stack(&|w| &w.x_l, &n.x_l),
            x_h: stack(&|w| &w.x_h, &n.x_h),
            w: stack(&|w| &w.w, &n.w),
            y: Matrix::from_vec(windows.len(), self.config.d_y, y),
        })
    }

    fn slot_input(&self, batch: &Batch, sources: &[Source]) -> Matrix {
        let (n_l, n_h, n_w) = self.counts();
        if let [only] = sources {
            return match only {
                Source::Low => batch.x_l.clone(),
                Source::High => batch.x_h.clone(),
                Source::Exo => batch.w.clone(),
            };
        }
        let len = self.config.window;
        let per: usize = sources
            .iter()
            .map(|s| match s {
                Source::Low => n_l,
                Source::High => n_h,
                Source::Exo => n_w,
            })
            .sum();
        let mut data = Vec::with_capacity(batch.size * per * len);
        for b in 0..batch.size {
            for s in sources {
                let (m, n) = match s {
                    Source::Low => (&batch.x_l, n_l),
                    Source::High => (&batch.x_h, n_h),
                    Source::Exo => (&batch.w, n_w),
                };
                data.extend_from_slice(&m.data()[b * n * len..(b + 1) * n * len]);
            }
        }
        Matrix::from_vec(batch.size * per, len, data)
    }

    /// Time-major stacked channels: `size × (L · C)`, column `t·C + c`.
    fn time_major(&self, batch: &Batch) -> Matrix {
        let (n_l, n_h, n_w) = self.counts();
        let c = n_l + n_h + n_w;
        let len = self.config.window;
        let cm = self.slot_input(batch, &[Source::Low, Source::High, Source::Exo]);
        let mut out = Matrix::zeros(batch.size, len * c);
        for b in 0..batch.size {
            for ch in 0..c {
                for t in 0..len {
                    out.set(b, t * c + ch, cm.get(b * c + ch, t));
                }
            }
        }
        out
    }

    fn graph_forward(
        &self,
        net: &GraphNet,
        tape: &mut Tape,
        p: &Bound,
        batch: &Batch,
        mode: &mut Mode,
        mut trace: Option<&mut Vec<Var>>,
    ) -> Var {
        let bs = batch.size;
        let h_w = net.exo.as_ref().map(|e| {
            let w = tape.leaf(batch.w.clone());
            e.forward(tape, p, w, bs)
        });
        let counts = &net.stack.topology.counts;
        let mut states = Vec::with_capacity(net.slots.len());
        for (slot, &n) in net.slots.iter().zip(counts) {
            let x = tape.leaf(self.slot_input(batch, &slot.sources));
            let mut h = match &slot.encoder {
                NodeEncoder::Gru(g) => g.forward(tape, p, x, h_w, n),
                NodeEncoder::Cnn(c) => {
                    let rows = c.small.layers[0].gate_dim.zip(h_w).map(|(_, hw)| tape.gather_rows(hw, sample_of_rows(bs, n)));
                    c.forward(tape, p, x, rows, GateMode::Conditioned)
                }
            };
            if slot.project {
                h = tape.affine(
                    h,
                    p.get(&format!("enc_{}.proj", slot.name)),
                    p.get(&format!("enc_{}.proj_b", slot.name)),
                );
            }
            states.push(h);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.extend(h_w);
            t.extend(&states);
        }
        let states = net.stack.forward(tape, p, states, bs);
        if let Some(t) = trace {
            t.extend(&states);
        }
        // node sequence in node order: slot by slot, index by index
        let proj: Vec<Var> = states
            .iter()
            .map(|&s| tape.affine(s, p.get("readout.proj"), p.get("readout.proj_b")))
            .collect();
        let mut steps = Vec::new();
        for (slot, &n) in counts.iter().enumerate() {
            for k in 0..n {
                let idx: Arc<[usize]> = (0..bs).map(|b| b * n + k).collect::<Vec<_>>().into();
                steps.push(tape.gather_rows(proj[slot], idx));
            }
        }
        let mut z = net.readout.forward(tape, p, &steps, bs);
        if net.exo_to_head {
            z = tape.concat_cols(&[z, h_w.expect("exogenous encoder present")]);
        }
        net.head.forward(tape, p, z, mode)
    }

    /// Standardized predictions (`size × d_y`) recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, batch: &Batch, mode: &mut Mode) -> Var {
        let bs = batch.size;
        let len = self.config.window;
        match &self.arch {
            Arch::Graph(net) => self.graph_forward(net, tape, p, batch, mode, None),
            Arch::Lstm(net) => {
                let x = tape.leaf(self.time_major(batch));
                let c = net.lstm.fwd.d_in;
                let steps: Vec<Var> = (0..len).map(|t| tape.slice_cols(x, t * c, c)).collect();
                let z = net.lstm.forward(tape, p, &steps, bs);
                net.head.forward(tape, p, z, mode)
            }
            Arch::Cnn(net) => {
                let x = self.slot_input(batch, &[Source::Low, Source::High, Source::Exo]);
                let x = tape.leaf(x.reshaped(bs, net.stack.layers[0].c_in * len));
                let z = net.stack.forward(tape, p, x, None, len, GateMode::Unit);
                net.head.forward(tape, p, z, mode)
            }
            Arch::Gcnn(net) => {
                let w = tape.leaf(batch.w.clone());
                let h_w = net.exo.forward(tape, p, w, bs);
                let x = self.slot_input(batch, &[Source::Low, Source::High, Source::Exo]);
                let x = tape.leaf(x.reshaped(bs, net.branches[0].layers[0].c_in * len));
                let parts: Vec<Var> = net
                    .branches
                    .iter()
                    .map(|b| {
                        let o = b.forward(tape, p, x, Some(h_w), len, GateMode::Conditioned);
                        let name = &b.layers[0].prefix;
                        let base = name.rsplit_once('.').map_or(name.as_str(), |x| x.0);
                        tape.affine(o, p.get(&format!("{base}.time")), p.get(&format!("{base}.time_b")))
                    })
                    .collect();
                let z = tape.concat_cols(&parts);
                net.head.forward(tape, p, z, mode)
            }
            Arch::Mtgat(net) => {
                let c = net.channels;
                let x = self.slot_input(batch, &[Source::Low, Source::High, Source::Exo]);
                let x = tape.leaf(x.reshaped(bs, c * len));
                let spec = ConvSpec {
                    c_in: c,
                    c_out: c,
                    kernel: net.kernel,
                    dilation: 1,
                    len,
                };
                let xc = tape.conv1d(x, p.get("mtgat.conv.w"), p.get("mtgat.conv.b"), spec);
                let xc = tape.silu(xc);
                let rows = tape.reshape(xc, bs * c, len);
                let feat = complete_attention(tape, p, "feat", rows, c, bs);
                let xt = tape.transpose_blocks(rows, bs);
                let temporal = complete_attention(tape, p, "time", xt, len, bs);
                let feat_t = tape.transpose_blocks(feat, bs);
                let cat = tape.concat_cols(&[xt, feat_t, temporal]);
                let steps: Vec<Var> = (0..len)
                    .map(|t| {
                        let idx: Arc<[usize]> = (0..bs).map(|b| b * len + t).collect::<Vec<_>>().into();
                        tape.gather_rows(cat, idx)
                    })
                    .collect();
                let h0 = tape.zeros(bs, net.gru.hidden);
                let h = net.gru.run(tape, p, &steps, h0);
                net.head.forward(tape, p, h, mode)
            }
        }
    }

    /// Mean squared error on standardized targets.
    pub fn loss(&self, tape: &mut Tape, p: &Bound, batch: &Batch, mode: &mut Mode) -> Var {
        let pred = self.forward(tape, p, batch, mode);
        tape.mse(pred, Arc::new(batch.y.clone()))
    }

    /// Predictions in original units, evaluated in chunks.
    pub fn predict(&self, windows: &[SensorWindow]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(64) {
            let refs: Vec<&SensorWindow> = chunk.iter().collect();
            let batch = self.make_batch(&refs)?;
            let mut tape = Tape::new();
            let p = self.params.bind(&mut tape);
            let pred = self.forward(&mut tape, &p, &batch, &mut Mode::Eval);
            let v = tape.value(pred);
            for r in 0..v.rows() {
                out.push(
                    v.row(r)
                        .iter()
                        .zip(&self.normalizer.y)
                        .map(|(&z, s)| s.invert(z))
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Prediction for a single window.
    pub fn predict_one(&self, window: &SensorWindow) -> Result<Vec<f64>> {
        Ok(self.predict(std::slice::from_ref(window))?.remove(0))
    }

    /// Context embedding, encoder outputs and node states of a graph model.
    pub fn inspect(&self, windows: &[&SensorWindow]) -> Result<Inspection> {
        let Arch::Graph(net) = &self.arch else {
            return Err(Error::InvalidVariant(format!("{} is not graph-based", self.variant())));
        };
        let batch = self.make_batch(windows)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut trace = Vec::new();
        let out = self.graph_forward(net, &mut tape, &p, &batch, &mut Mode::Eval, Some(&mut trace));
        let slots = net.slots.len();
        let has_hw = net.exo.is_some();
        let vals: Vec<Matrix> = trace.iter().map(|&v| tape.value(v).clone()).collect();
        let off = usize::from(has_hw);
        Ok(Inspection {
            h_w: has_hw.then(|| vals[0].clone()),
            encoded: vals[off..off + slots].to_vec(),
            states: vals[off + slots..off + 2 * slots].to_vec(),
            output: tape.value(out).clone(),
        })
    }

    /// Copy whose nodes are relabeled within each slot: node `i` of slot `s`
    /// becomes node `perms[s][i]`. Parameters are shared unchanged.
    pub fn permute_nodes(&self, perms: &[Vec<usize>]) -> Result<Model> {
        let Arch::Graph(net) = &self.arch else {
            return Err(Error::InvalidVariant(format!("{} is not graph-based", self.variant())));
        };
        let topo = &net.stack.topology;
        if perms.len() != topo.num_slots() || perms.iter().zip(&topo.counts).any(|(p, &n)| p.len() != n) {
            return Err(Error::ShapeMismatch("permutation sizes do not match the node slots".into()));
        }
        let mut net = net.clone();
        for rel in &mut net.stack.topology.relations {
            let (ps, pt) = (&perms[rel.source], &perms[rel.target]);
            for e in &mut rel.edges {
                *e = (ps[e.0], pt[e.1]);
            }
        }
        let mut m = self.clone();
        m.arch = Arch::Graph(net);
        Ok(m)
    }

    /// Node slot sizes of a graph model.
    pub fn slot_counts(&self) -> Option<Vec<usize>> {
        match &self.arch {
            Arch::Graph(net) => Some(net.stack.topology.counts.clone()),
            _ => None,
        }
    }

    /// Relation names of a graph model.
    pub fn relation_names(&self) -> Vec<String> {
        match &self.arch {
            Arch::Graph(net) => net.stack.topology.relations.iter().map(|r| r.name.clone()).collect(),
            _ => Vec::new(),
        }
    }
}
