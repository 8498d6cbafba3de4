//! Typed message passing between node states.
//!
//! Same-type relations send degree-normalized linear messages
//! `h_j W / (√d̂_i √d̂_j)`. Cross-type relations weight messages `h_j W` by
//! attention `α = softmax_j(aᵀ LeakyReLU(W_att [h_i ∥ h_j]))`. Messages are
//! averaged per relation, summed over relations, and passed through SiLU.
//!
//! The attention matrix `W_att` is stored as two blocks, one applied to the
//! target state and one to the source state, and all weights are stored
//! input-major so a message is the row product `h · W`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ScatterPlan, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{local_degrees, HeteroTemporalGraph, NodeType, RelationType};
use crate::params::{Bound, ParamStore};
use crate::tensor::Matrix;

/// Negative slope of the attention LeakyReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Degree-normalized linear messages.
    Gcn,
    /// Attention-weighted messages.
    Attention,
}

/// One directed relation between two node slots with local edge indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub source: usize,
    pub target: usize,
    pub edges: Vec<(usize, usize)>,
    pub kind: Aggregation,
}

impl Relation {
    pub fn same_type(&self) -> bool {
        self.source == self.target
    }
}

/// Node slots (types) with their sizes and the relations between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub slot_names: Vec<String>,
    pub counts: Vec<usize>,
    pub relations: Vec<Relation>,
}

impl Topology {
    /// Both node types and every relation carrying edges; same-type
    /// relations use GCN messages and cross-type relations attention.
    pub fn from_graph(graph: &HeteroTemporalGraph) -> Self {
        Self::from_graph_filtered(graph, |_| true)
    }

    /// Like [`Topology::from_graph`] but keeping only relations accepted by `keep`.
    pub fn from_graph_filtered(graph: &HeteroTemporalGraph, keep: impl Fn(RelationType) -> bool) -> Self {
        let relations = RelationType::ALL
            .into_iter()
            .filter(|&r| keep(r) && graph.edge_count(r) > 0)
            .map(|r| Relation {
                name: r.to_string().replace('-', ""),
                source: r.source.slot(),
                target: r.target.slot(),
                edges: graph.local_edges(r),
                kind: if r.directed() {
                    Aggregation::Attention
                } else {
                    Aggregation::Gcn
                },
            })
            .collect();
        Self {
            slot_names: NodeType::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            counts: NodeType::ALL.iter().map(|&t| graph.count(t)).collect(),
            relations,
        }
    }

    /// A single node slot with one relation.
    pub fn homogeneous(name: &str, count: usize, edges: Vec<(usize, usize)>, kind: Aggregation) -> Self {
        Self {
            slot_names: vec![name.to_string()],
            counts: vec![count],
            relations: vec![Relation {
                name: format!("{name}{name}"),
                source: 0,
                target: 0,
                edges,
                kind,
            }],
        }
    }

    pub fn num_slots(&self) -> usize {
        self.counts.len()
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }
}

/// Layer sizes and switches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerOptions {
    pub dim: usize,
    pub att_dim: usize,
    /// Add the input state to the layer output.
    pub residual: bool,
    /// Drop the per-relation mean for same-type relations.
    pub single_norm: bool,
}

/// Stack of message-passing layers over a [`Topology`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroStack {
    pub prefix: String,
    pub topology: Topology,
    pub options: LayerOptions,
    pub layers: usize,
}

struct RelationPlan {
    src_rows: Arc<[usize]>,
    dst_rows: Arc<[usize]>,
    /// Coefficient per edge row; softmax groups come from the same plan.
    sum: Arc<ScatterPlan>,
    softmax: Option<Arc<ScatterPlan>>,
}

impl HeteroStack {
    pub fn new(prefix: impl Into<String>, topology: Topology, options: LayerOptions, layers: usize) -> Self {
        Self {
            prefix: prefix.into(),
            topology,
            options,
            layers,
        }
    }

    pub fn param_name(&self, layer: usize, rel: &str, p: &str) -> String {
        format!("{}.{layer}.{rel}.{p}", self.prefix)
    }

    /// Parameter names for one relation and layer.
    pub fn relation_params(&self, layer: usize, rel: &Relation) -> Vec<String> {
        let mut names = vec![self.param_name(layer, &rel.name, "w")];
        if rel.kind == Aggregation::Attention {
            for p in ["w_att_target", "w_att_source", "a"] {
                names.push(self.param_name(layer, &rel.name, p));
            }
        }
        names
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let d = self.options.dim;
        let da = self.options.att_dim;
        for l in 0..self.layers {
            for rel in &self.topology.relations {
                store.insert_uniform(self.param_name(l, &rel.name, "w"), d, d, d, rng);
                if rel.kind == Aggregation::Attention {
                    store.insert_uniform(self.param_name(l, &rel.name, "w_att_target"), d, da, 2 * d, rng);
                    store.insert_uniform(self.param_name(l, &rel.name, "w_att_source"), d, da, 2 * d, rng);
                    store.insert_uniform(self.param_name(l, &rel.name, "a"), da, 1, da, rng);
                }
            }
        }
    }

    /// Checks that every parameter of every layer is present.
    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        for l in 0..self.layers {
            for rel in &self.topology.relations {
                for n in self.relation_params(l, rel) {
                    store.require(&n)?;
                }
            }
        }
        Ok(())
    }

    fn plans(&self, batch: usize) -> Vec<RelationPlan> {
        let t = &self.topology;
        t.relations
            .iter()
            .map(|rel| {
                let n_src = t.counts[rel.source];
                let n_dst = t.counts[rel.target];
                let in_deg = local_degrees(n_dst, &rel.edges);
                let coef_one: Vec<f64> = rel
                    .edges
                    .iter()
                    .map(|&(j, i)| {
                        let mean = if self.options.single_norm && rel.same_type() {
                            1.0
                        } else {
                            1.0 / (in_deg[i] - 1) as f64
                        };
                        match rel.kind {
                            Aggregation::Gcn => {
                                let src_deg = if rel.same_type() {
                                    in_deg[j]
                                } else {
                                    1 + rel.edges.iter().filter(|e| e.0 == j).count()
                                };
                                mean / ((in_deg[i] as f64).sqrt() * (src_deg as f64).sqrt())
                            }
                            Aggregation::Attention => mean,
                        }
                    })
                    .collect();
                let e = rel.edges.len();
                let mut src_rows = Vec::with_capacity(batch * e);
                let mut dst_rows = Vec::with_capacity(batch * e);
                let mut coef = Vec::with_capacity(batch * e);
                for b in 0..batch {
                    for (k, &(j, i)) in rel.edges.iter().enumerate() {
                        src_rows.push(b * n_src + j);
                        dst_rows.push(b * n_dst + i);
                        coef.push(coef_one[k]);
                    }
                }
                let softmax = (rel.kind == Aggregation::Attention)
                    .then(|| Arc::new(ScatterPlan::unweighted(batch * n_dst, dst_rows.clone())));
                RelationPlan {
                    sum: Arc::new(ScatterPlan::new(batch * n_dst, dst_rows.clone(), coef)),
                    src_rows: src_rows.into(),
                    dst_rows: dst_rows.into(),
                    softmax,
                }
            })
            .collect()
    }

    /// Attention weights of one relation (`edges × 1`, in batch edge order).
    fn attention(&self, tape: &mut Tape, p: &Bound, layer: usize, rel: &Relation, plan: &RelationPlan, states: &[Var]) -> Var {
        let wt = p.get(&self.param_name(layer, &rel.name, "w_att_target"));
        let ws = p.get(&self.param_name(layer, &rel.name, "w_att_source"));
        let a = p.get(&self.param_name(layer, &rel.name, "a"));
        let t = tape.matmul(states[rel.target], wt);
        let s = tape.matmul(states[rel.source], ws);
        let t = tape.gather_rows(t, plan.dst_rows.clone());
        let s = tape.gather_rows(s, plan.src_rows.clone());
        let e = tape.add(t, s);
        let e = tape.leaky_relu(e, LEAKY_SLOPE);
        let score = tape.matmul(e, a);
        tape.segment_softmax(score, plan.softmax.clone().expect("attention plan"))
    }

    /// Applies layer `layer` to per-slot states (`batch · count × dim` each).
    pub fn layer_forward(&self, tape: &mut Tape, p: &Bound, layer: usize, states: &[Var], batch: usize) -> Vec<Var> {
        let plans = self.plans(batch);
        self.layer_with_plans(tape, p, layer, states, &plans, batch)
    }

    fn layer_with_plans(
        &self,
        tape: &mut Tape,
        p: &Bound,
        layer: usize,
        states: &[Var],
        plans: &[RelationPlan],
        batch: usize,
    ) -> Vec<Var> {
        let t = &self.topology;
        let mut acc: Vec<Option<Var>> = vec![None; t.num_slots()];
        for (rel, plan) in t.relations.iter().zip(plans) {
            let w = p.get(&self.param_name(layer, &rel.name, "w"));
            let hw = tape.matmul(states[rel.source], w);
            let mut msg = tape.gather_rows(hw, plan.src_rows.clone());
            if rel.kind == Aggregation::Attention {
                let alpha = self.attention(tape, p, layer, rel, plan, states);
                msg = tape.mul_row_scalar(msg, alpha);
            }
            let agg = tape.scatter(msg, plan.sum.clone());
            acc[rel.target] = Some(match acc[rel.target] {
                Some(prev) => tape.add(prev, agg),
                None => agg,
            });
        }
        acc.into_iter()
            .enumerate()
            .map(|(slot, pre)| {
                let pre = pre.unwrap_or_else(|| tape.zeros(batch * t.counts[slot], self.options.dim));
                let out = tape.silu(pre);
                if self.options.residual {
                    tape.add(out, states[slot])
                } else {
                    out
                }
            })
            .collect()
    }

    /// Applies every layer in turn.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, states: Vec<Var>, batch: usize) -> Vec<Var> {
        let plans = self.plans(batch);
        (0..self.layers).fold(states, |s, l| self.layer_with_plans(tape, p, l, &s, &plans, batch))
    }

    /// Attention weights of `rel` at `layer` for one sample, in edge order.
    pub fn attention_weights(&self, store: &ParamStore, states: &NodeStateMap, layer: usize, rel: &str) -> Result<Vec<f64>> {
        let r = self
            .topology
            .relation(rel)
            .ok_or_else(|| Error::InvalidConfig(format!("no relation `{rel}`")))?;
        if r.kind != Aggregation::Attention {
            return Err(Error::InvalidConfig(format!("relation `{rel}` has no attention")));
        }
        for n in self.relation_params(layer, r) {
            store.require(&n)?;
        }
        self.check_states(states)?;
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let vars: Vec<Var> = states.states.iter().map(|m| tape.leaf(m.clone())).collect();
        let plans = self.plans(1);
        let idx = self.topology.relations.iter().position(|x| x.name == rel).expect("relation");
        let alpha = self.attention(&mut tape, &p, layer, r, &plans[idx], &vars);
        Ok(tape.value(alpha).data().to_vec())
    }

    fn check_states(&self, states: &NodeStateMap) -> Result<()> {
        let t = &self.topology;
        if states.states.len() != t.num_slots() {
            return Err(Error::ShapeMismatch(format!(
                "{} state blocks for {} node types",
                states.states.len(),
                t.num_slots()
            )));
        }
        for (m, &n) in states.states.iter().zip(&t.counts) {
            if m.shape() != (n, self.options.dim) {
                return Err(Error::ShapeMismatch(format!(
                    "state block {:?}, expected ({n}, {})",
                    m.shape(),
                    self.options.dim
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFiniteInput("node states"));
            }
        }
        Ok(())
    }
}

/// Node embeddings of one sample, one `count × dim` block per node slot.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeStateMap {
    pub states: Vec<Matrix>,
}

impl NodeStateMap {
    pub fn new(states: Vec<Matrix>) -> Self {
        Self { states }
    }

    /// State of node `index` of slot `slot`.
    pub fn get(&self, slot: usize, index: usize) -> &[f64] {
        self.states[slot].row(index)
    }
}

/// Applies one layer to a single sample.
pub fn hetero_layer(stack: &HeteroStack, states: &NodeStateMap, store: &ParamStore, layer: usize) -> Result<NodeStateMap> {
    for rel in &stack.topology.relations {
        for n in stack.relation_params(layer, rel) {
            store.require(&n)?;
        }
    }
    stack.check_states(states)?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let vars: Vec<Var> = states.states.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = stack.layer_forward(&mut tape, &p, layer, &vars, 1);
    Ok(NodeStateMap::new(out.into_iter().map(|v| tape.value(v).clone()).collect()))
}

/// Degree-normalized message `h_j W / (√d̂_i √d̂_j)`.
pub fn intra_message(h_j: &[f64], d_i: f64, d_j: f64, w: &Matrix) -> Result<Vec<f64>> {
    if h_j.len() != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "state of length {} against weight {:?}",
            h_j.len(),
            w.shape()
        )));
    }
    if !(d_i >= 1.0 && d_j >= 1.0) {
        return Err(Error::InvalidConfig(format!("degrees must be >= 1, got {d_i} and {d_j}")));
    }
    let c = 1.0 / (d_i.sqrt() * d_j.sqrt());
    let hw = Matrix::row_vector(h_j).matmul(w);
    Ok(hw.data().iter().map(|v| c * v).collect())
}

/// Attention parameters of one relation.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams<'a> {
    pub a: &'a [f64],
    pub w_att_target: &'a Matrix,
    pub w_att_source: &'a Matrix,
    pub w_msg: &'a Matrix,
}

/// Attention weights over `neighbors` of a target state and the weighted messages.
pub fn inter_attention(
    h_i: &[f64],
    neighbors: &[Vec<f64>],
    params: AttentionParams<'_>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let d = h_i.len();
    let da = params.a.len();
    if neighbors.iter().any(|h| h.len() != d)
        || params.w_att_target.shape() != (d, da)
        || params.w_att_source.shape() != (d, da)
        || params.w_msg.rows() != d
    {
        return Err(Error::ShapeMismatch("attention parameter shapes".into()));
    }
    let k = neighbors.len();
    let mut tape = Tape::new();
    let hi = tape.leaf(Matrix::row_vector(h_i));
    let hj = tape.leaf(Matrix::from_rows(neighbors));
    let wt = tape.leaf(params.w_att_target.clone());
    let ws = tape.leaf(params.w_att_source.clone());
    let a = tape.leaf(Matrix::from_vec(da, 1, params.a.to_vec()));
    let wm = tape.leaf(params.w_msg.clone());
    let t = tape.matmul(hi, wt);
    let t = tape.gather_rows(t, vec![0; k].into());
    let s = tape.matmul(hj, ws);
    let e = tape.add(t, s);
    let e = tape.leaky_relu(e, LEAKY_SLOPE);
    let score = tape.matmul(e, a);
    let alpha = tape.segment_softmax(score, Arc::new(ScatterPlan::unweighted(1, vec![0; k])));
    let m = tape.matmul(hj, wm);
    let m = tape.mul_row_scalar(m, alpha);
    let alpha_v = tape.value(alpha).data().to_vec();
    let msgs = (0..k).map(|r| tape.value(m).row(r).to_vec()).collect();
    Ok((alpha_v, msgs))
}
