//! Context-aware node encoders.
//!
//! * [`ExoEncoder`] averages each exogenous variable over the window and maps
//!   the means through a two-layer perceptron to the context embedding `h_w`.
//! * [`GruEncoder`] runs a GRU over a low-frequency sequence, starting from a
//!   projection of `h_w`, with SiLU applied to the state after every step.
//! * [`GatedConv`] is a same-padded dilated convolution whose output channels
//!   are scaled by `σ(h_w · W_g + b_g)`.
//! * [`MultiScaleEncoder`] runs a small-kernel and a large-kernel stack of
//!   gated convolutions in parallel and maps each stack's single output
//!   channel over time to a fixed-size feature vector.
//!
//! Every encoder works on batches: one row per (sample, node) pair. The free
//! functions at the bottom evaluate a single node for inspection and tests.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvSpec, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::tensor::Matrix;

/// Row index → sample index for `batch` samples of `nodes` rows each.
pub fn sample_of_rows(batch: usize, nodes: usize) -> Arc<[usize]> {
    (0..batch)
        .flat_map(|b| std::iter::repeat_n(b, nodes))
        .collect::<Vec<_>>()
        .into()
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

/// Exogenous-variable perceptron: window means → SiLU hidden layer → `h_w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExoEncoder {
    pub prefix: String,
    pub n_exo: usize,
    pub hidden: usize,
    pub d_w: usize,
}

impl ExoEncoder {
    pub fn new(prefix: impl Into<String>, n_exo: usize, hidden: usize, d_w: usize) -> Self {
        Self {
            prefix: prefix.into(),
            n_exo,
            hidden,
            d_w,
        }
    }

    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.insert_uniform(self.name("w1"), self.n_exo, self.hidden, self.n_exo, rng);
        store.insert_zeros(self.name("b1"), 1, self.hidden);
        store.insert_uniform(self.name("w2"), self.hidden, self.d_w, self.hidden, rng);
        store.insert_zeros(self.name("b2"), 1, self.d_w);
    }

    /// `w` holds `batch · n_exo` rows of length `L`; returns `batch × d_w`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, w: Var, batch: usize) -> Var {
        let means = tape.row_mean(w);
        let means = tape.reshape(means, batch, self.n_exo);
        let h = tape.affine(means, p.get(&self.name("w1")), p.get(&self.name("b1")));
        let h = tape.silu(h);
        tape.affine(h, p.get(&self.name("w2")), p.get(&self.name("b2")))
    }
}

/// How a GRU's initial hidden state is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GruInit {
    /// From the context embedding, projected when its size differs.
    Exogenous { d_w: usize },
    Zero,
}

/// GRU sequence encoder returning the final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruEncoder {
    pub prefix: String,
    pub d_in: usize,
    pub hidden: usize,
    pub init: GruInit,
    /// Apply SiLU to the cell output at every step.
    pub silu_steps: bool,
}

impl GruEncoder {
    pub fn new(prefix: impl Into<String>, d_in: usize, hidden: usize, init: GruInit, silu_steps: bool) -> Self {
        Self {
            prefix: prefix.into(),
            d_in,
            hidden,
            init,
            silu_steps,
        }
    }

    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    fn projects_init(&self) -> bool {
        matches!(self.init, GruInit::Exogenous { d_w } if d_w != self.hidden)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let h = self.hidden;
        store.insert_uniform(self.name("w_in"), self.d_in, 3 * h, self.d_in, rng);
        store.insert_uniform(self.name("w_hid"), h, 3 * h, h, rng);
        store.insert_zeros(self.name("b_in"), 1, 3 * h);
        store.insert_zeros(self.name("b_hid"), 1, 3 * h);
        if let GruInit::Exogenous { d_w } = self.init {
            if self.projects_init() {
                store.insert_uniform(self.name("w_init"), d_w, h, d_w, rng);
                store.insert_zeros(self.name("b_init"), 1, h);
            }
        }
    }

    /// Initial state for `rows` rows grouped `nodes` per sample.
    pub fn initial_state(
        &self,
        tape: &mut Tape,
        p: &Bound,
        h_w: Option<Var>,
        rows: usize,
        nodes: usize,
    ) -> Var {
        match (self.init, h_w) {
            (GruInit::Exogenous { .. }, Some(h_w)) => {
                let init = if self.projects_init() {
                    tape.affine(h_w, p.get(&self.name("w_init")), p.get(&self.name("b_init")))
                } else {
                    h_w
                };
                let batch = tape.shape(h_w).0;
                debug_assert_eq!(batch * nodes, rows);
                tape.gather_rows(init, sample_of_rows(batch, nodes))
            }
            _ => tape.zeros(rows, self.hidden),
        }
    }

    /// One cell update; SiLU on the result when configured.
    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Var {
        let gi = tape.affine(x, p.get(&self.name("w_in")), p.get(&self.name("b_in")));
        let gh = tape.affine(h, p.get(&self.name("w_hid")), p.get(&self.name("b_hid")));
        let out = tape.gru_cell(gi, gh, h);
        if self.silu_steps {
            tape.silu(out)
        } else {
            out
        }
    }

    /// Runs the cell over `steps` (each `rows × d_in`) from `h0`.
    pub fn run(&self, tape: &mut Tape, p: &Bound, steps: &[Var], h0: Var) -> Var {
        steps.iter().fold(h0, |h, &x| self.step(tape, p, x, h))
    }

    /// Scalar sequences: `x` is `rows × L`, one node per row.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, h_w: Option<Var>, nodes: usize) -> Var {
        let (rows, len) = tape.shape(x);
        debug_assert_eq!(self.d_in, 1);
        let h0 = self.initial_state(tape, p, h_w, rows, nodes);
        let steps: Vec<Var> = (0..len).map(|t| tape.slice_cols(x, t, 1)).collect();
        self.run(tape, p, &steps, h0)
    }
}

/// Whether a gated layer uses its context gate or a unit gate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GateMode {
    #[default]
    Conditioned,
    /// Gate forced to exactly one (gate ablation).
    Unit,
}

/// One gated convolutional layer.
///
/// Parameters: kernel `w` (`c_out × c_in·kernel`), bias `b`, and when gated
/// `wg` (`d_w × c_out`) and `bg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatedConv {
    pub prefix: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// Context size; `None` makes this a plain convolution.
    pub gate_dim: Option<usize>,
}

impl GatedConv {
    pub fn new(
        prefix: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        dilation: usize,
        gate_dim: Option<usize>,
    ) -> Self {
        Self {
            prefix: prefix.into(),
            c_in,
            c_out,
            kernel,
            dilation,
            gate_dim,
        }
    }

    pub fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    /// Span of the dilated kernel.
    pub fn span(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.dilation == 0 {
            return Err(Error::InvalidConfig(format!(
                "{}: kernel width must be odd and dilation >= 1",
                self.prefix
            )));
        }
        Ok(())
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let fan_in = self.c_in * self.kernel;
        store.insert_uniform(self.name("w"), self.c_out, fan_in, fan_in, rng);
        store.insert_zeros(self.name("b"), 1, self.c_out);
        if let Some(d_w) = self.gate_dim {
            store.insert_uniform(self.name("wg"), d_w, self.c_out, d_w, rng);
            store.insert_zeros(self.name("bg"), 1, self.c_out);
        }
    }

    /// Gate values `σ(h_w · W_g + b_g)` per row (`rows × c_out`).
    pub fn gate(&self, tape: &mut Tape, p: &Bound, h_w_rows: Var) -> Var {
        let g = tape.affine(h_w_rows, p.get(&self.name("wg")), p.get(&self.name("bg")));
        tape.sigmoid(g)
    }

    /// `x` is `rows × (c_in · len)`; `h_w_rows` is `rows × d_w` when gated.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        h_w_rows: Option<Var>,
        len: usize,
        mode: GateMode,
    ) -> Var {
        let spec = ConvSpec {
            c_in: self.c_in,
            c_out: self.c_out,
            kernel: self.kernel,
            dilation: self.dilation,
            len,
        };
        let z = tape.conv1d(x, p.get(&self.name("w")), p.get(&self.name("b")), spec);
        match (self.gate_dim, h_w_rows, mode) {
            (Some(_), Some(h), GateMode::Conditioned) => {
                let g = self.gate(tape, p, h);
                tape.channel_gate(z, g, len)
            }
            (Some(_), _, GateMode::Unit) => {
                let rows = tape.shape(z).0;
                let ones = tape.leaf(Matrix::filled(rows, self.c_out, 1.0));
                tape.channel_gate(z, ones, len)
            }
            _ => z,
        }
    }
}

/// A cascade of gated convolutions, each followed by SiLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvStack {
    pub layers: Vec<GatedConv>,
}

impl ConvStack {
    /// Layers with the given channel sequence, e.g. `[1, 4, 4, 1]`.
    pub fn new(
        prefix: &str,
        channels: &[usize],
        kernel: usize,
        dilation: usize,
        gate_dim: Option<usize>,
    ) -> Self {
        let layers = channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| GatedConv::new(format!("{prefix}.{i}"), w[0], w[1], kernel, dilation, gate_dim))
            .collect();
        Self { layers }
    }

    pub fn c_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.c_out)
    }

    pub fn span(&self) -> usize {
        self.layers.iter().map(GatedConv::span).max().unwrap_or(1)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.layers {
            l.register(store, rng);
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        h_w_rows: Option<Var>,
        len: usize,
        mode: GateMode,
    ) -> Var {
        self.layers.iter().fold(x, |h, l| {
            let o = l.forward(tape, p, h, h_w_rows, len, mode);
            tape.silu(o)
        })
    }
}

/// Parallel small- and large-scale convolution stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleEncoder {
    pub prefix: String,
    pub small: ConvStack,
    pub large: ConvStack,
    pub len: usize,
    pub d_small: usize,
    pub d_large: usize,
}

/// Channel counts and kernels of the two convolution stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiScaleDims {
    pub channels: Vec<usize>,
    pub small_kernel: usize,
    pub small_dilation: usize,
    pub large_kernel: usize,
    pub large_dilation: usize,
}

impl Default for MultiScaleDims {
    fn default() -> Self {
        Self {
            channels: vec![4, 4, 1],
            small_kernel: 3,
            small_dilation: 1,
            large_kernel: 5,
            large_dilation: 2,
        }
    }
}

impl MultiScaleEncoder {
    pub fn new(
        prefix: impl Into<String>,
        dims: &MultiScaleDims,
        len: usize,
        d_small: usize,
        d_large: usize,
        gate_dim: Option<usize>,
    ) -> Self {
        let prefix = prefix.into();
        let mut chans = vec![1];
        chans.extend_from_slice(&dims.channels);
        Self {
            small: ConvStack::new(
                &format!("{prefix}.small"),
                &chans,
                dims.small_kernel,
                dims.small_dilation,
                gate_dim,
            ),
            large: ConvStack::new(
                &format!("{prefix}.large"),
                &chans,
                dims.large_kernel,
                dims.large_dilation,
                gate_dim,
            ),
            prefix,
            len,
            d_small,
            d_large,
        }
    }

    pub fn d_out(&self) -> usize {
        self.d_small + self.d_large
    }

    /// Shortest window accepted: the widest dilated kernel span.
    pub fn min_len(&self) -> usize {
        self.small.span().max(self.large.span())
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.small.layers.iter().chain(&self.large.layers) {
            l.validate()?;
        }
        if self.len < self.min_len() {
            return Err(Error::WindowTooShort {
                len: self.len,
                required: self.min_len(),
            });
        }
        Ok(())
    }

    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.small.register(store, rng);
        self.large.register(store, rng);
        let t = self.len * self.small.c_out();
        store.insert_uniform(self.name("time_small"), t, self.d_small, t, rng);
        store.insert_zeros(self.name("time_small_b"), 1, self.d_small);
        let t = self.len * self.large.c_out();
        store.insert_uniform(self.name("time_large"), t, self.d_large, t, rng);
        store.insert_zeros(self.name("time_large_b"), 1, self.d_large);
    }

    /// `x` is `rows × len`; returns `rows × (d_small + d_large)`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, h_w_rows: Option<Var>, mode: GateMode) -> Var {
        let s = self.small.forward(tape, p, x, h_w_rows, self.len, mode);
        let s = tape.affine(s, p.get(&self.name("time_small")), p.get(&self.name("time_small_b")));
        let l = self.large.forward(tape, p, x, h_w_rows, self.len, mode);
        let l = tape.affine(l, p.get(&self.name("time_large")), p.get(&self.name("time_large_b")));
        tape.concat_cols(&[s, l])
    }
}

fn require_params(store: &ParamStore, names: &[String]) -> Result<()> {
    for n in names {
        store.require(n)?;
    }
    Ok(())
}

/// Context embedding of one exogenous window (`n_exo × L`).
pub fn encode_exogenous(w: &Matrix, enc: &ExoEncoder, store: &ParamStore) -> Result<Vec<f64>> {
    if w.cols() == 0 {
        return Err(Error::WindowTooShort { len: 0, required: 1 });
    }
    if w.rows() != enc.n_exo {
        return Err(Error::ShapeMismatch(format!(
            "expected {} exogenous rows, got {}",
            enc.n_exo,
            w.rows()
        )));
    }
    check_finite(w.data(), "exogenous window")?;
    require_params(store, &[enc.name("w1"), enc.name("b1"), enc.name("w2"), enc.name("b2")])?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.leaf(w.clone());
    let out = enc.forward(&mut tape, &p, x, 1);
    Ok(tape.value(out).data().to_vec())
}

/// Final GRU state for one low-frequency sequence.
pub fn encode_low_freq(
    x: &[f64],
    h_w: &[f64],
    enc: &GruEncoder,
    store: &ParamStore,
) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::WindowTooShort { len: 0, required: 1 });
    }
    check_finite(x, "low-frequency window")?;
    check_finite(h_w, "context embedding")?;
    if let GruInit::Exogenous { d_w } = enc.init {
        if h_w.len() != d_w {
            return Err(Error::ShapeMismatch(format!("h_w has {} entries, expected {d_w}", h_w.len())));
        }
    }
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.leaf(Matrix::row_vector(x));
    let hw = tape.leaf(Matrix::row_vector(h_w));
    let out = enc.forward(&mut tape, &p, xv, Some(hw), 1);
    Ok(tape.value(out).data().to_vec())
}

/// Gate values of one layer for a context embedding.
pub fn gate_values(h_w: &[f64], layer: &GatedConv, store: &ParamStore) -> Result<Vec<f64>> {
    let d_w = layer
        .gate_dim
        .ok_or_else(|| Error::InvalidConfig(format!("{} is not gated", layer.prefix)))?;
    if h_w.len() != d_w {
        return Err(Error::ShapeMismatch(format!("h_w has {} entries, expected {d_w}", h_w.len())));
    }
    check_finite(h_w, "context embedding")?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let hw = tape.leaf(Matrix::row_vector(h_w));
    let g = layer.gate(&mut tape, &p, hw);
    Ok(tape.value(g).data().to_vec())
}

/// One gated convolution on a `channels × T` input.
pub fn gated_conv_layer(
    x: &Matrix,
    h_w: &[f64],
    layer: &GatedConv,
    store: &ParamStore,
    mode: GateMode,
) -> Result<Matrix> {
    layer.validate()?;
    if x.rows() != layer.c_in {
        return Err(Error::ShapeMismatch(format!(
            "expected {} input channels, got {}",
            layer.c_in,
            x.rows()
        )));
    }
    if x.cols() < layer.span() {
        return Err(Error::WindowTooShort {
            len: x.cols(),
            required: layer.span(),
        });
    }
    if let Some(d_w) = layer.gate_dim {
        if mode == GateMode::Conditioned && h_w.len() != d_w {
            return Err(Error::ShapeMismatch(format!("h_w has {} entries, expected {d_w}", h_w.len())));
        }
    }
    check_finite(x.data(), "convolution input")?;
    let len = x.cols();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.leaf(x.clone().reshaped(1, x.len()));
    let hw = (!h_w.is_empty()).then(|| tape.leaf(Matrix::row_vector(h_w)));
    let out = layer.forward(&mut tape, &p, xv, hw, len, mode);
    Ok(tape.value(out).clone().reshaped(layer.c_out, len))
}

/// Multi-scale representation of one high-frequency sequence.
pub fn encode_high_freq(
    x: &[f64],
    h_w: &[f64],
    enc: &MultiScaleEncoder,
    store: &ParamStore,
    mode: GateMode,
) -> Result<Vec<f64>> {
    if x.len() < enc.min_len() {
        return Err(Error::WindowTooShort {
            len: x.len(),
            required: enc.min_len(),
        });
    }
    if x.len() != enc.len {
        return Err(Error::ShapeMismatch(format!("window length {} != {}", x.len(), enc.len)));
    }
    check_finite(x, "high-frequency window")?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.leaf(Matrix::row_vector(x));
    let hw = (!h_w.is_empty()).then(|| tape.leaf(Matrix::row_vector(h_w)));
    let out = enc.forward(&mut tape, &p, xv, hw, mode);
    Ok(tape.value(out).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn exogenous_mean_of_constant_and_ramp() {
        let enc = ExoEncoder::new("exo", 1, 3, 2);
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        // identity-like first layer exposes the mean through SiLU
        store.get_mut("exo.w1").unwrap().data_mut().copy_from_slice(&[1.0, 0.0, 0.0]);
        let w2 = store.get_mut("exo.w2").unwrap();
        w2.data_mut().fill(0.0);
        w2.set(0, 0, 1.0);
        let out = encode_exogenous(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]), &enc, &store).unwrap();
        assert!((out[0] - silu_ref(2.0)).abs() < 1e-15);
        let out = encode_exogenous(&Matrix::from_rows(&[[0.7; 5]]), &enc, &store).unwrap();
        assert!((out[0] - silu_ref(0.7)).abs() < 1e-15);
    }

    fn silu_ref(x: f64) -> f64 {
        x / (1.0 + (-x).exp())
    }

    #[test]
    fn exogenous_zero_params_give_zero() {
        let enc = ExoEncoder::new("exo", 2, 4, 5);
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        store.zero_all();
        let out = encode_exogenous(&Matrix::from_rows(&[[3.0, 1.0], [-2.0, 9.0]]), &enc, &store).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn exogenous_rejects_nan() {
        let enc = ExoEncoder::new("exo", 1, 2, 2);
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        let err = encode_exogenous(&Matrix::from_rows(&[[1.0, f64::NAN]]), &enc, &store).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput(_)));
    }

    #[test]
    fn gru_zero_everything_is_zero() {
        let enc = GruEncoder::new("gru", 1, 4, GruInit::Exogenous { d_w: 4 }, true);
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        store.zero_all();
        let out = encode_low_freq(&[0.0], &[0.0; 4], &enc, &store).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn gru_rejects_empty_window() {
        let enc = GruEncoder::new("gru", 1, 4, GruInit::Zero, true);
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        assert!(matches!(
            encode_low_freq(&[], &[], &enc, &store),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn gate_at_zero_halves_output() {
        let layer = GatedConv::new("g", 1, 2, 3, 1, Some(3));
        let mut store = ParamStore::new();
        layer.register(&mut store, &mut rng());
        store.get_mut("g.wg").unwrap().data_mut().fill(0.0);
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0, 0.5, 0.1]]);
        let hw = [0.4, -0.2, 1.0];
        let gated = gated_conv_layer(&x, &hw, &layer, &store, GateMode::Conditioned).unwrap();
        let plain = gated_conv_layer(&x, &hw, &layer, &store, GateMode::Unit).unwrap();
        for (a, b) in gated.data().iter().zip(plain.data()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        // saturated gate passes the convolution through
        store.get_mut("g.bg").unwrap().data_mut().fill(30.0);
        let open = gated_conv_layer(&x, &hw, &layer, &store, GateMode::Conditioned).unwrap();
        assert!(open.max_abs_diff(&plain) < 1e-9);
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let layer = GatedConv::new("g", 1, 1, 3, 1, None);
        let mut store = ParamStore::new();
        layer.register(&mut store, &mut rng());
        store.get_mut("g.w").unwrap().data_mut().copy_from_slice(&[1.0, 2.0, 1.0]);
        let x = Matrix::from_rows(&[[0.0, 0.0, 1.0, 0.0, 0.0]]);
        let out = gated_conv_layer(&x, &[], &layer, &store, GateMode::Unit).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn even_kernel_is_rejected() {
        let layer = GatedConv::new("g", 1, 1, 4, 1, None);
        let mut store = ParamStore::new();
        layer.register(&mut store, &mut rng());
        let x = Matrix::from_rows(&[[0.0; 8]]);
        assert!(gated_conv_layer(&x, &[], &layer, &store, GateMode::Unit).is_err());
    }

    #[test]
    fn high_freq_output_size_and_short_window() {
        let enc = MultiScaleEncoder::new("cnn", &MultiScaleDims::default(), 30, 5, 5, Some(5));
        let mut store = ParamStore::new();
        enc.register(&mut store, &mut rng());
        let x: Vec<f64> = (0..30).map(|t| (t as f64 * 0.9).sin()).collect();
        let out = encode_high_freq(&x, &[0.1; 5], &enc, &store, GateMode::Conditioned).unwrap();
        assert_eq!(out.len(), 10);
        assert!(matches!(
            encode_high_freq(&x[..5], &[0.1; 5], &enc, &store, GateMode::Conditioned),
            Err(Error::WindowTooShort { required: 9, .. })
        ));
    }
}
