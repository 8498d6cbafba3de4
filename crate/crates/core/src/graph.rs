//! Heterogeneous sensor graphs.
//!
//! A [`HeteroTemporalGraph`] has two node types, low-frequency (`L`) and
//! high-frequency (`H`), and four relations. Same-type relations are
//! undirected and stored as symmetric pairs of directed edges; cross-type
//! relations are directed. Edges do not change over a window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    /// Low-frequency sensor (temperature, displacement).
    L,
    /// High-frequency sensor (vibration, acceleration).
    H,
}

impl NodeType {
    pub const ALL: [NodeType; 2] = [NodeType::L, NodeType::H];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::L => "L",
            NodeType::H => "H",
        }
    }

    /// Position in [`NodeType::ALL`].
    pub fn slot(self) -> usize {
        match self {
            NodeType::L => 0,
            NodeType::H => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationType {
    pub source: NodeType,
    pub target: NodeType,
}

impl RelationType {
    pub const LL: RelationType = RelationType::new(NodeType::L, NodeType::L);
    pub const HH: RelationType = RelationType::new(NodeType::H, NodeType::H);
    pub const LH: RelationType = RelationType::new(NodeType::L, NodeType::H);
    pub const HL: RelationType = RelationType::new(NodeType::H, NodeType::L);
    pub const ALL: [RelationType; 4] = [Self::LL, Self::HH, Self::LH, Self::HL];

    pub const fn new(source: NodeType, target: NodeType) -> Self {
        Self { source, target }
    }

    pub fn directed(self) -> bool {
        !matches!(
            (self.source, self.target),
            (NodeType::L, NodeType::L) | (NodeType::H, NodeType::H)
        )
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source.as_str(), self.target.as_str())
    }
}

impl FromStr for RelationType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationType::ALL
            .into_iter()
            .find(|r| r.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown relation `{s}`")))
    }
}

/// A sensor node.
///
/// `index` is the node's number within its subtype; `position` is a free
/// placement tag used by proximity rules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub subtype: String,
    pub index: usize,
    pub position: String,
}

impl Node {
    pub fn new(
        node_type: NodeType,
        subtype: impl Into<String>,
        index: usize,
        position: impl Into<String>,
    ) -> Self {
        Self {
            node_type,
            subtype: subtype.into(),
            index,
            position: position.into(),
        }
    }

    fn sort_key(&self) -> (NodeType, &str, usize) {
        (self.node_type, &self.subtype, self.index)
    }
}

/// Selects the nodes of one type, optionally restricted to a subtype.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selector {
    pub node_type: NodeType,
    pub subtype: Option<String>,
}

impl Selector {
    pub fn of_type(node_type: NodeType) -> Self {
        Self {
            node_type,
            subtype: None,
        }
    }

    pub fn subtype(node_type: NodeType, subtype: impl Into<String>) -> Self {
        Self {
            node_type,
            subtype: Some(subtype.into()),
        }
    }
}

/// Identifies a node by subtype and index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeKey {
    pub subtype: String,
    pub index: usize,
}

impl NodeKey {
    pub fn new(subtype: impl Into<String>, index: usize) -> Self {
        Self {
            subtype: subtype.into(),
            index,
        }
    }
}

/// How edges are generated from the declared nodes.
///
/// Rules within one type produce undirected edges; rules across types
/// produce directed edges from `source` to `target`.
#[derive(Clone, Debug, PartialEq)]
pub enum EdgeRule {
    /// Path through the selected nodes in node order.
    Chain(Selector),
    /// Closed path through the selected nodes in node order.
    Ring(Selector),
    /// Every pair of selected nodes.
    Complete(Selector),
    /// Every (source, target) pair.
    Bipartite { source: Selector, target: Selector },
    /// Pairs sharing a position tag.
    CoLocated { source: Selector, target: Selector },
    /// A single edge.
    Explicit { source: NodeKey, target: NodeKey },
}

/// Sensor graph with a fixed node order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeteroTemporalGraph {
    nodes: Vec<Node>,
    edges: BTreeMap<RelationType, Vec<(usize, usize)>>,
}

/// Serialized form: `{nodes: [...], edges: {"L-L": [[i, j], ...], ...}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub nodes: Vec<Node>,
    pub edges: BTreeMap<String, Vec<[usize; 2]>>,
}

/// Builds and validates a graph.
///
/// Nodes are ordered by type, then subtype, then index; edge endpoints are
/// indices into that order.
pub fn build_graph(nodes: Vec<Node>, rules: &[EdgeRule]) -> Result<HeteroTemporalGraph> {
    if nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut nodes = nodes;
    nodes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    for w in nodes.windows(2) {
        if w[0].sort_key() == w[1].sort_key() {
            return Err(Error::InvalidConfig(format!(
                "duplicate node {} #{}",
                w[0].subtype, w[0].index
            )));
        }
    }

    let mut edges: BTreeMap<RelationType, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for rule in rules {
        apply_rule(&nodes, rule, &mut edges)?;
    }
    let edges = edges
        .into_iter()
        .map(|(r, set)| (r, set.into_iter().collect()))
        .collect();
    HeteroTemporalGraph::from_parts(nodes, edges)
}

fn select(nodes: &[Node], sel: &Selector) -> Result<Vec<usize>> {
    if let Some(st) = &sel.subtype {
        if !nodes.iter().any(|n| &n.subtype == st) {
            return Err(Error::UnknownSubtype(st.clone()));
        }
        if !nodes
            .iter()
            .any(|n| &n.subtype == st && n.node_type == sel.node_type)
        {
            return Err(Error::UnknownSubtype(format!(
                "{st} (not of type {})",
                sel.node_type.as_str()
            )));
        }
    }
    Ok(nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            n.node_type == sel.node_type && sel.subtype.as_ref().is_none_or(|s| &n.subtype == s)
        })
        .map(|(i, _)| i)
        .collect())
}

fn find(nodes: &[Node], key: &NodeKey) -> Result<usize> {
    nodes
        .iter()
        .position(|n| n.subtype == key.subtype && n.index == key.index)
        .ok_or_else(|| Error::DanglingEdge(format!("{} #{}", key.subtype, key.index)))
}

fn push_edge(
    nodes: &[Node],
    edges: &mut BTreeMap<RelationType, BTreeSet<(usize, usize)>>,
    s: usize,
    t: usize,
) -> Result<()> {
    if s == t {
        return Err(Error::SelfLoop(s));
    }
    let rel = RelationType::new(nodes[s].node_type, nodes[t].node_type);
    let set = edges.entry(rel).or_default();
    set.insert((s, t));
    if !rel.directed() {
        set.insert((t, s));
    }
    Ok(())
}

fn apply_rule(
    nodes: &[Node],
    rule: &EdgeRule,
    edges: &mut BTreeMap<RelationType, BTreeSet<(usize, usize)>>,
) -> Result<()> {
    let nonempty = |sel: &Selector, rel: RelationType| -> Result<Vec<usize>> {
        let ids = select(nodes, sel)?;
        if ids.is_empty() {
            Err(Error::EmptyTypePartition(rel.to_string()))
        } else {
            Ok(ids)
        }
    };
    match rule {
        EdgeRule::Chain(sel) | EdgeRule::Ring(sel) | EdgeRule::Complete(sel) => {
            let rel = RelationType::new(sel.node_type, sel.node_type);
            let ids = nonempty(sel, rel)?;
            match rule {
                EdgeRule::Chain(_) => {
                    for w in ids.windows(2) {
                        push_edge(nodes, edges, w[0], w[1])?;
                    }
                }
                EdgeRule::Ring(_) => {
                    for w in ids.windows(2) {
                        push_edge(nodes, edges, w[0], w[1])?;
                    }
                    if ids.len() > 2 {
                        push_edge(nodes, edges, ids[ids.len() - 1], ids[0])?;
                    }
                }
                _ => {
                    for (a, &i) in ids.iter().enumerate() {
                        for &j in &ids[a + 1..] {
                            push_edge(nodes, edges, i, j)?;
                        }
                    }
                }
            }
        }
        EdgeRule::Bipartite { source, target } | EdgeRule::CoLocated { source, target } => {
            let rel = RelationType::new(source.node_type, target.node_type);
            let src = nonempty(source, rel)?;
            let dst = nonempty(target, rel)?;
            let colocated = matches!(rule, EdgeRule::CoLocated { .. });
            for &s in &src {
                for &t in &dst {
                    if s == t || (colocated && nodes[s].position != nodes[t].position) {
                        continue;
                    }
                    push_edge(nodes, edges, s, t)?;
                }
            }
        }
        EdgeRule::Explicit { source, target } => {
            let s = find(nodes, source)?;
            let t = find(nodes, target)?;
            push_edge(nodes, edges, s, t)?;
        }
    }
    Ok(())
}

impl HeteroTemporalGraph {
    /// Validates nodes (already in node order) and edge lists.
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: BTreeMap<RelationType, Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if nodes
            .windows(2)
            .any(|w| w[0].sort_key() >= w[1].sort_key())
        {
            return Err(Error::InvalidConfig(
                "nodes are not in (type, subtype, index) order".into(),
            ));
        }
        let mut clean = BTreeMap::new();
        for (rel, list) in edges {
            let mut seen = BTreeSet::new();
            for &(s, t) in &list {
                if s >= nodes.len() || t >= nodes.len() {
                    return Err(Error::DanglingEdge(format!("{rel} edge ({s}, {t})")));
                }
                if s == t {
                    return Err(Error::SelfLoop(s));
                }
                if nodes[s].node_type != rel.source || nodes[t].node_type != rel.target {
                    return Err(Error::RelationTypeMismatch {
                        relation: rel.to_string(),
                        source_node: s,
                        target: t,
                    });
                }
                if !seen.insert((s, t)) {
                    return Err(Error::InvalidConfig(format!(
                        "duplicate {rel} edge ({s}, {t})"
                    )));
                }
            }
            if !rel.directed() && seen.iter().any(|&(s, t)| !seen.contains(&(t, s))) {
                return Err(Error::InvalidConfig(format!(
                    "undirected relation {rel} is not symmetric"
                )));
            }
            if !seen.is_empty() {
                clean.insert(rel, seen.into_iter().collect::<Vec<_>>());
            }
        }
        let graph = Self {
            nodes,
            edges: clean,
        };
        let het = graph.heterogeneity();
        if het <= 2 {
            return Err(Error::NotHeterogeneous(het));
        }
        Ok(graph)
    }

    /// `|A| + |R|`: node types present plus relations carrying edges.
    pub fn heterogeneity(&self) -> usize {
        let types = NodeType::ALL
            .iter()
            .filter(|&&t| self.count(t) > 0)
            .count();
        types + self.edges.len()
    }

    /// Nodes in node order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.nodes.iter().filter(|n| n.node_type == t).count()
    }

    /// Global index of the first node of type `t`.
    pub fn offset(&self, t: NodeType) -> usize {
        self.nodes
            .iter()
            .position(|n| n.node_type == t)
            .unwrap_or(self.nodes.len())
    }

    /// Index of a node within its type.
    pub fn local_index(&self, global: usize) -> usize {
        global - self.offset(self.nodes[global].node_type)
    }

    /// Directed edges of `rel` as global (source, target) indices.
    pub fn edges(&self, rel: RelationType) -> &[(usize, usize)] {
        self.edges.get(&rel).map_or(&[], Vec::as_slice)
    }

    /// Directed edges of `rel` as (source, target) indices local to each type.
    pub fn local_edges(&self, rel: RelationType) -> Vec<(usize, usize)> {
        let so = self.offset(rel.source);
        let to = self.offset(rel.target);
        self.edges(rel)
            .iter()
            .map(|&(s, t)| (s - so, t - to))
            .collect()
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationType> + '_ {
        self.edges.keys().copied()
    }

    /// Number of stored directed pairs; undirected edges count once per direction.
    pub fn edge_count(&self, rel: RelationType) -> usize {
        self.edges(rel).len()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|(r, list)| (r.to_string(), list.iter().map(|&(s, t)| [s, t]).collect()))
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("graph serializes")
    }

    pub fn from_json(json: GraphJson) -> Result<Self> {
        let mut edges = BTreeMap::new();
        for (name, list) in json.edges {
            let rel: RelationType = name.parse()?;
            edges.insert(rel, list.into_iter().map(|[s, t]| (s, t)).collect());
        }
        Self::from_parts(json.nodes, edges)
    }
}

/// Per-relation degree plus one, indexed by global node index.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeTable {
    table: BTreeMap<RelationType, Vec<usize>>,
}

impl DegreeTable {
    /// `d̂` of `node` under `rel` (1 for nodes without in-edges).
    pub fn get(&self, rel: RelationType, node: usize) -> usize {
        self.table.get(&rel).map_or(1, |d| d[node])
    }
}

/// In-degree plus one for every node under every relation.
pub fn degree_table(graph: &HeteroTemporalGraph) -> DegreeTable {
    let mut table = BTreeMap::new();
    for rel in RelationType::ALL {
        let mut deg = vec![1usize; graph.num_nodes()];
        for &(_, t) in graph.edges(rel) {
            deg[t] += 1;
        }
        table.insert(rel, deg);
    }
    DegreeTable { table }
}

/// In-degree plus one over local indices for an arbitrary edge list.
pub fn local_degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![1usize; n];
    for &(_, t) in edges {
        deg[t] += 1;
    }
    deg
}

/// Geometry of the two-bearing test rig.
///
/// Angles are in degrees around the outer ring. Temperature and vibration
/// nodes within `tv_max_angle` of each other on the same bearing are linked
/// in both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BearingLayout {
    pub bearings: usize,
    pub outer_ring_sensors: usize,
    pub inner_ring_sensors: usize,
    pub axial_angles: Vec<f64>,
    pub radial_angles: Vec<f64>,
    pub tv_max_angle: f64,
    pub cross_bearing_links: bool,
}

impl Default for BearingLayout {
    fn default() -> Self {
        Self {
            bearings: 2,
            outer_ring_sensors: 8,
            inner_ring_sensors: 2,
            axial_angles: vec![45.0, 135.0, 225.0, 315.0],
            radial_angles: vec![90.0, 270.0],
            tv_max_angle: 45.0,
            cross_bearing_links: true,
        }
    }
}

pub const T_OR: &str = "T OR";
pub const T_IR: &str = "T IR";
pub const V_AX: &str = "V AX";
pub const V_RA: &str = "V RA";

fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

impl BearingLayout {
    /// Angle of outer-ring temperature sensor `k`.
    pub fn or_angle(&self, k: usize) -> f64 {
        360.0 * k as f64 / self.outer_ring_sensors as f64
    }

    /// Vibration sensors of one bearing as (subtype, per-bearing slot, angle), sorted by angle.
    fn vib_ring(&self) -> Vec<(&'static str, usize, f64)> {
        let mut v: Vec<_> = self
            .axial_angles
            .iter()
            .enumerate()
            .map(|(i, &a)| (V_AX, i, a))
            .chain(
                self.radial_angles
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| (V_RA, i, a)),
            )
            .collect();
        v.sort_by(|a, b| a.2.total_cmp(&b.2));
        v
    }

    pub fn build(&self) -> Result<HeteroTemporalGraph> {
        let n_or = self.outer_ring_sensors;
        let n_ir = self.inner_ring_sensors;
        let n_ax = self.axial_angles.len();
        let n_ra = self.radial_angles.len();
        let mut nodes = Vec::new();
        for b in 0..self.bearings {
            for k in 0..n_or {
                nodes.push(Node::new(
                    NodeType::L,
                    T_OR,
                    b * n_or + k,
                    format!("B{}@{:03.0}", b + 1, self.or_angle(k)),
                ));
            }
            for k in 0..n_ir {
                nodes.push(Node::new(NodeType::L, T_IR, b * n_ir + k, format!("B{}@IR{k}", b + 1)));
            }
            for (k, a) in self.axial_angles.iter().enumerate() {
                nodes.push(Node::new(NodeType::H, V_AX, b * n_ax + k, format!("B{}@{a:03.0}", b + 1)));
            }
            for (k, a) in self.radial_angles.iter().enumerate() {
                nodes.push(Node::new(NodeType::H, V_RA, b * n_ra + k, format!("B{}@{a:03.0}", b + 1)));
            }
        }

        let vib_key = |st: &str, b: usize, slot: usize| {
            let per = if st == V_AX { n_ax } else { n_ra };
            NodeKey::new(st, b * per + slot)
        };
        let mut rules = Vec::new();
        for b in 0..self.bearings {
            // outer-ring temperature ring
            if n_or > 1 {
                let ring_edges = if n_or == 2 { 1 } else { n_or };
                for k in 0..ring_edges {
                    rules.push(EdgeRule::Explicit {
                        source: NodeKey::new(T_OR, b * n_or + k),
                        target: NodeKey::new(T_OR, b * n_or + (k + 1) % n_or),
                    });
                }
            }
            // vibration ring by angle
            let ring = self.vib_ring();
            if ring.len() > 1 {
                let ring_edges = if ring.len() == 2 { 1 } else { ring.len() };
                for k in 0..ring_edges {
                    let (sa, ia, _) = ring[k];
                    let (sb, ib, _) = ring[(k + 1) % ring.len()];
                    rules.push(EdgeRule::Explicit {
                        source: vib_key(sa, b, ia),
                        target: vib_key(sb, b, ib),
                    });
                }
            }
            // temperature <-> vibration by angular proximity
            for k in 0..n_or {
                for &(st, slot, a) in &ring {
                    if angle_dist(self.or_angle(k), a) <= self.tv_max_angle + 1e-9 {
                        let t = NodeKey::new(T_OR, b * n_or + k);
                        let v = vib_key(st, b, slot);
                        rules.push(EdgeRule::Explicit {
                            source: t.clone(),
                            target: v.clone(),
                        });
                        rules.push(EdgeRule::Explicit {
                            source: v,
                            target: t,
                        });
                    }
                }
            }
        }
        // inner-ring temperatures form one clique across bearings
        if n_ir * self.bearings > 1 {
            rules.push(EdgeRule::Complete(Selector::subtype(NodeType::L, T_IR)));
        }
        // same-position vibration sensors on neighbouring bearings
        if self.cross_bearing_links {
            for b in 1..self.bearings {
                for (st, slot, _) in self.vib_ring() {
                    rules.push(EdgeRule::Explicit {
                        source: vib_key(st, b - 1, slot),
                        target: vib_key(st, b, slot),
                    });
                }
            }
        }
        build_graph(nodes, &rules)
    }
}

/// Default two-bearing graph: 20 temperature (L) and 12 vibration (H) nodes.
pub fn bearing_topology() -> HeteroTemporalGraph {
    BearingLayout::default()
        .build()
        .expect("default bearing layout is valid")
}

pub const D: &str = "D";
pub const A: &str = "A";

/// Displacement (L) and acceleration (H) sensors co-located along a span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeLayout {
    pub sensors: usize,
}

impl Default for BridgeLayout {
    fn default() -> Self {
        Self { sensors: 4 }
    }
}

impl BridgeLayout {
    pub fn build(&self) -> Result<HeteroTemporalGraph> {
        let n = self.sensors;
        let mut nodes = Vec::new();
        for k in 0..n {
            nodes.push(Node::new(NodeType::L, D, k, format!("S{k}")));
            nodes.push(Node::new(NodeType::H, A, k, format!("S{k}")));
        }
        let rules = [
            EdgeRule::Chain(Selector::subtype(NodeType::L, D)),
            EdgeRule::Chain(Selector::subtype(NodeType::H, A)),
            EdgeRule::CoLocated {
                source: Selector::subtype(NodeType::L, D),
                target: Selector::subtype(NodeType::H, A),
            },
            EdgeRule::CoLocated {
                source: Selector::subtype(NodeType::H, A),
                target: Selector::subtype(NodeType::L, D),
            },
        ];
        build_graph(nodes, &rules)
    }
}

/// Default bridge graph with four co-located displacement/acceleration pairs.
pub fn bridge_topology() -> HeteroTemporalGraph {
    BridgeLayout::default()
        .build()
        .expect("default bridge layout is valid")
}

/// Small graph: `n_l` L nodes and `n_h` H nodes, each type a chain, fully
/// connected across types in both directions.
pub fn toy_topology(n_l: usize, n_h: usize) -> Result<HeteroTemporalGraph> {
    let mut nodes: Vec<Node> = (0..n_l)
        .map(|k| Node::new(NodeType::L, "T", k, format!("p{k}")))
        .collect();
    nodes.extend((0..n_h).map(|k| Node::new(NodeType::H, "V", k, format!("p{k}"))));
    let rules = [
        EdgeRule::Chain(Selector::of_type(NodeType::L)),
        EdgeRule::Chain(Selector::of_type(NodeType::H)),
        EdgeRule::Bipartite {
            source: Selector::of_type(NodeType::L),
            target: Selector::of_type(NodeType::H),
        },
        EdgeRule::Bipartite {
            source: Selector::of_type(NodeType::H),
            target: Selector::of_type(NodeType::L),
        },
    ];
    build_graph(nodes, &rules)
}
