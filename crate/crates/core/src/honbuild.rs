//! First-order network construction, variable-order dependency extraction
//! and higher-order network rewiring.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::distribution::{kl_divergence, Distribution};
use crate::ingest::{PortId, Trajectory, TrajectorySet};
use crate::network::{Adjacency, EdgeHistograms, Network};

/// A current port followed by previously visited ports, most recent first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    ports: Vec<PortId>,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid context label '{0}'")]
pub struct LabelError(pub String);

impl Context {
    /// `ports[0]` is the current port. Panics on an empty list.
    pub fn new(ports: Vec<PortId>) -> Self {
        assert!(!ports.is_empty(), "context needs a current port");
        Context { ports }
    }

    pub fn first_order(port: PortId) -> Self {
        Context { ports: vec![port] }
    }

    pub fn order(&self) -> usize {
        self.ports.len()
    }

    pub fn current(&self) -> &PortId {
        &self.ports[0]
    }

    /// Previous ports, most recent first.
    pub fn previous(&self) -> &[PortId] {
        &self.ports[1..]
    }

    pub fn ports(&self) -> &[PortId] {
        &self.ports
    }

    /// The context with its oldest port dropped.
    pub fn parent(&self) -> Option<Context> {
        (self.ports.len() > 1).then(|| Context { ports: self.ports[..self.ports.len() - 1].to_vec() })
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ports[0].as_str())?;
        for (i, p) in self.ports[1..].iter().enumerate() {
            f.write_str(if i == 0 { "|" } else { "," })?;
            f.write_str(p.as_str())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

impl FromStr for Context {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LabelError(s.to_string());
        let (current, rest) = match s.split_once('|') {
            Some((c, r)) => (c, Some(r)),
            None => (s, None),
        };
        if current.is_empty() {
            return Err(bad());
        }
        let mut ports = vec![PortId::new(current)];
        if let Some(rest) = rest {
            for p in rest.split(',') {
                if p.is_empty() || p.contains('|') {
                    return Err(bad());
                }
                ports.push(PortId::new(p));
            }
        }
        Ok(Context { ports })
    }
}

impl Serialize for Context {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Context {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Significance threshold on the divergence between an extended context and
/// its parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    /// `order / log2(1 + support)` bits.
    Dynamic,
    Fixed(f64),
}

impl ThresholdSpec {
    pub fn threshold(&self, order: usize, support: u64) -> f64 {
        match *self {
            ThresholdSpec::Dynamic => order as f64 / (1.0 + support as f64).log2(),
            ThresholdSpec::Fixed(x) => x,
        }
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Dynamic => f.write_str("dynamic"),
            ThresholdSpec::Fixed(x) => write!(f, "fixed:{x}"),
        }
    }
}

impl FromStr for ThresholdSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "dynamic" {
            return Ok(ThresholdSpec::Dynamic);
        }
        s.strip_prefix("fixed:")
            .and_then(|x| x.parse::<f64>().ok())
            .filter(|x| x.is_finite() && *x >= 0.0)
            .map(ThresholdSpec::Fixed)
            .ok_or_else(|| format!("threshold must be 'dynamic' or 'fixed:X', got '{s}'"))
    }
}

impl Serialize for ThresholdSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub max_order: usize,
    pub min_support: u64,
    pub threshold: ThresholdSpec,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams { max_order: 5, min_support: 5, threshold: ThresholdSpec::Dynamic }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IntegrityError {
    #[error("edge {edge} references missing node {id}")]
    DanglingNode { edge: usize, id: usize },
    #[error("edge {edge} references missing port {port}")]
    DanglingPort { edge: usize, port: String },
    #[error("node at position {position} has id {id}")]
    NodeId { position: usize, id: usize },
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("port index disagrees with nodes at port {0}")]
    PortIndex(String),
    #[error("edge {edge} has zero weight")]
    ZeroWeight { edge: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FonEdge {
    pub src: PortId,
    pub dst: PortId,
    pub weight: u64,
    pub histograms: EdgeHistograms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FonParts {
    pub nodes: Vec<PortId>,
    pub edges: Vec<FonEdge>,
}

/// Ports connected by direct transition counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FonParts", into = "FonParts")]
pub struct FirstOrderNetwork {
    nodes: Vec<PortId>,
    edges: Vec<FonEdge>,
    index: HashMap<PortId, usize>,
    adjacency: Adjacency,
}

impl FirstOrderNetwork {
    pub fn from_parts(parts: FonParts) -> Result<Self, IntegrityError> {
        let mut index = HashMap::with_capacity(parts.nodes.len());
        for (i, p) in parts.nodes.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(IntegrityError::DuplicateNode(p.to_string()));
            }
        }
        let mut links = Vec::with_capacity(parts.edges.len());
        for (e, edge) in parts.edges.iter().enumerate() {
            let lookup = |p: &PortId| {
                index.get(p).copied().ok_or_else(|| IntegrityError::DanglingPort {
                    edge: e,
                    port: p.to_string(),
                })
            };
            if edge.weight == 0 {
                return Err(IntegrityError::ZeroWeight { edge: e });
            }
            links.push((lookup(&edge.src)?, lookup(&edge.dst)?, edge.weight as f64));
        }
        let adjacency = Adjacency::new(parts.nodes.len(), links);
        Ok(FirstOrderNetwork { nodes: parts.nodes, edges: parts.edges, index, adjacency })
    }

    pub fn ports(&self) -> &[PortId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[FonEdge] {
        &self.edges
    }

    pub fn node_of(&self, port: &str) -> Option<usize> {
        self.index.get(port).copied()
    }

    pub fn edge_weight(&self, src: &str, dst: &str) -> u64 {
        self.edges
            .iter()
            .find(|e| e.src.as_str() == src && e.dst.as_str() == dst)
            .map_or(0, |e| e.weight)
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

impl TryFrom<FonParts> for FirstOrderNetwork {
    type Error = IntegrityError;
    fn try_from(parts: FonParts) -> Result<Self, Self::Error> {
        Self::from_parts(parts)
    }
}

impl From<FirstOrderNetwork> for FonParts {
    fn from(fon: FirstOrderNetwork) -> Self {
        FonParts { nodes: fon.nodes, edges: fon.edges }
    }
}

impl Network for FirstOrderNetwork {
    fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    fn node_port(&self, node: usize) -> &PortId {
        &self.nodes[node]
    }

    fn node_label(&self, node: usize) -> String {
        self.nodes[node].to_string()
    }
}

fn transitions(t: &Trajectory) -> impl Iterator<Item = (usize, &crate::ingest::Hop, &crate::ingest::Hop)> {
    t.hops.windows(2).enumerate().map(|(i, w)| (i, &w[0], &w[1]))
}

/// Counts direct transitions. Each transition's metadata comes from the hop
/// it arrives at.
pub fn build_fon(trajectories: &TrajectorySet) -> FirstOrderNetwork {
    let mut ports: BTreeSet<PortId> = BTreeSet::new();
    let mut acc: BTreeMap<(PortId, PortId), (u64, EdgeHistograms)> = BTreeMap::new();
    for t in trajectories.iter() {
        ports.extend(t.ports().cloned());
        for (_, from, to) in transitions(t) {
            let e = acc.entry((from.port.clone(), to.port.clone())).or_default();
            e.0 += 1;
            e.1.record(&to.ship_type, to.month);
        }
    }
    let edges = acc
        .into_iter()
        .map(|((src, dst), (weight, histograms))| FonEdge { src, dst, weight, histograms })
        .collect();
    FirstOrderNetwork::from_parts(FonParts { nodes: ports.into_iter().collect(), edges })
        .expect("constructed network is consistent")
}

/// Next-port counts observed after each context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextCounts {
    max_order: usize,
    counts: HashMap<Context, BTreeMap<PortId, u64>>,
}

impl ContextCounts {
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn next_counts(&self, context: &Context) -> Option<&BTreeMap<PortId, u64>> {
        self.counts.get(context)
    }

    pub fn support(&self, context: &Context) -> u64 {
        self.counts.get(context).map_or(0, |m| m.values().sum())
    }

    pub fn distribution(&self, context: &Context) -> Distribution<PortId> {
        self.counts.get(context).map_or_else(Distribution::default, |m| {
            Distribution::from_weights(m.iter().map(|(k, &v)| (k.clone(), v as f64)))
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// All counted contexts in sorted order.
    pub fn contexts(&self) -> Vec<&Context> {
        let mut v: Vec<&Context> = self.counts.keys().collect();
        v.sort();
        v
    }

    fn merge(mut self, other: ContextCounts) -> ContextCounts {
        if self.counts.len() < other.counts.len() {
            return other.merge(self);
        }
        for (ctx, next) in other.counts {
            let slot = self.counts.entry(ctx).or_default();
            for (p, c) in next {
                *slot.entry(p).or_insert(0) += c;
            }
        }
        self
    }
}

fn count_into(counts: &mut HashMap<Context, BTreeMap<PortId, u64>>, t: &Trajectory, max_order: usize) {
    let ports: Vec<&PortId> = t.ports().collect();
    for next in 1..ports.len() {
        let target = ports[next];
        let deepest = max_order.min(next);
        let mut ctx: Vec<PortId> = Vec::with_capacity(deepest);
        for k in 1..=deepest {
            ctx.push(ports[next - k].clone());
            *counts
                .entry(Context { ports: ctx.clone() })
                .or_default()
                .entry(target.clone())
                .or_insert(0) += 1;
        }
    }
}

/// Counts, for every order `k <= max_order`, which port follows each
/// length-`k` history. Sharded over trajectories; merging is commutative.
pub fn count_contexts(trajectories: &TrajectorySet, max_order: usize) -> ContextCounts {
    assert!(max_order >= 1, "max_order must be at least 1");
    trajectories
        .trajectories
        .par_chunks(4096)
        .map(|chunk| {
            let mut counts = HashMap::new();
            for t in chunk {
                count_into(&mut counts, t, max_order);
            }
            ContextCounts { max_order, counts }
        })
        .reduce(|| ContextCounts { max_order, counts: HashMap::new() }, ContextCounts::merge)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetainedContext {
    pub support: u64,
    /// Divergence from the parent's next-port distribution; 0 for order 1.
    pub kld_bits: f64,
}

/// Prefix-closed set of contexts kept as higher-order nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DependencySet {
    retained: BTreeMap<Context, RetainedContext>,
}

impl DependencySet {
    pub fn contains(&self, context: &Context) -> bool {
        self.retained.contains_key(context)
    }

    pub fn get(&self, context: &Context) -> Option<&RetainedContext> {
        self.retained.get(context)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Context, &RetainedContext)> {
        self.retained.iter()
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn higher_order(&self) -> impl Iterator<Item = &Context> {
        self.retained.keys().filter(|c| c.order() > 1)
    }

    /// Order-1 contexts for the given ports, nothing deeper.
    pub fn first_order_only<'a>(ports: impl IntoIterator<Item = &'a PortId>) -> Self {
        DependencySet {
            retained: ports
                .into_iter()
                .map(|p| (Context::first_order(p.clone()), RetainedContext { support: 0, kld_bits: 0.0 }))
                .collect(),
        }
    }
}

/// Keeps every order-1 context, then recursively keeps an extension of a kept
/// context when it has enough support and its next-port distribution diverges
/// from the parent's by more than the threshold.
pub fn extract_dependencies(
    counts: &ContextCounts,
    min_support: u64,
    threshold: ThresholdSpec,
    max_order: usize,
) -> DependencySet {
    let mut children: HashMap<Context, Vec<&Context>> = HashMap::new();
    for ctx in counts.counts.keys() {
        if ctx.order() > 1 && ctx.order() <= max_order {
            children.entry(ctx.parent().expect("order > 1")).or_default().push(ctx);
        }
    }
    for list in children.values_mut() {
        list.sort();
    }

    let mut retained = BTreeMap::new();
    let mut stack: Vec<(Context, Distribution<PortId>)> = Vec::new();
    let mut roots: Vec<&Context> = counts.counts.keys().filter(|c| c.order() == 1).collect();
    roots.sort();
    for ctx in roots.into_iter().rev() {
        retained.insert(ctx.clone(), RetainedContext { support: counts.support(ctx), kld_bits: 0.0 });
        stack.push((ctx.clone(), counts.distribution(ctx)));
    }
    while let Some((ctx, parent_dist)) = stack.pop() {
        let Some(exts) = children.get(&ctx) else { continue };
        for &ext in exts {
            let support = counts.support(ext);
            if support < min_support {
                continue;
            }
            let dist = counts.distribution(ext);
            let kld = kl_divergence(&dist, &parent_dist)
                .expect("extension observations are a subset of the parent's");
            if kld > threshold.threshold(ext.order(), support) {
                retained.insert(ext.clone(), RetainedContext { support, kld_bits: kld });
                stack.push((ext.clone(), dist));
            }
        }
    }
    DependencySet { retained }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonNode {
    pub id: usize,
    pub context: Context,
}

impl HonNode {
    pub fn order(&self) -> usize {
        self.context.order()
    }

    pub fn port(&self) -> &PortId {
        self.context.current()
    }

    pub fn label(&self) -> String {
        self.context.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: u64,
    pub histograms: EdgeHistograms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonParts {
    pub nodes: Vec<HonNode>,
    pub edges: Vec<HonEdge>,
    pub port_index: BTreeMap<PortId, Vec<usize>>,
    pub build_params: BuildParams,
}

/// Nodes are (current port, history) contexts of variable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HonParts", into = "HonParts")]
pub struct HigherOrderNetwork {
    nodes: Vec<HonNode>,
    edges: Vec<HonEdge>,
    port_index: BTreeMap<PortId, Vec<usize>>,
    build_params: BuildParams,
    lookup: HashMap<Context, usize>,
    adjacency: Adjacency,
}

impl HigherOrderNetwork {
    /// Validates referential integrity and builds lookup structures.
    pub fn from_parts(parts: HonParts) -> Result<Self, IntegrityError> {
        let mut lookup = HashMap::with_capacity(parts.nodes.len());
        let mut index: BTreeMap<PortId, Vec<usize>> = BTreeMap::new();
        for (i, n) in parts.nodes.iter().enumerate() {
            if n.id != i {
                return Err(IntegrityError::NodeId { position: i, id: n.id });
            }
            if lookup.insert(n.context.clone(), i).is_some() {
                return Err(IntegrityError::DuplicateNode(n.label()));
            }
            index.entry(n.port().clone()).or_default().push(i);
        }
        if index != parts.port_index {
            let port = index
                .iter()
                .find(|(p, ids)| parts.port_index.get(*p) != Some(ids))
                .map(|(p, _)| p.to_string())
                .or_else(|| parts.port_index.keys().find(|p| !index.contains_key(*p)).map(|p| p.to_string()))
                .unwrap_or_default();
            return Err(IntegrityError::PortIndex(port));
        }
        let n = parts.nodes.len();
        let mut links = Vec::with_capacity(parts.edges.len());
        for (e, edge) in parts.edges.iter().enumerate() {
            for id in [edge.src, edge.dst] {
                if id >= n {
                    return Err(IntegrityError::DanglingNode { edge: e, id });
                }
            }
            if edge.weight == 0 {
                return Err(IntegrityError::ZeroWeight { edge: e });
            }
            links.push((edge.src, edge.dst, edge.weight as f64));
        }
        let adjacency = Adjacency::new(n, links);
        Ok(HigherOrderNetwork {
            nodes: parts.nodes,
            edges: parts.edges,
            port_index: parts.port_index,
            build_params: parts.build_params,
            lookup,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[HonNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &HonNode {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[HonEdge] {
        &self.edges
    }

    pub fn port_index(&self) -> &BTreeMap<PortId, Vec<usize>> {
        &self.port_index
    }

    /// Nodes whose current port is `port`.
    pub fn nodes_of_port(&self, port: &str) -> &[usize] {
        self.port_index.get(port).map_or(&[], Vec::as_slice)
    }

    pub fn build_params(&self) -> &BuildParams {
        &self.build_params
    }

    pub fn node_by_context(&self, context: &Context) -> Option<usize> {
        self.lookup.get(context).copied()
    }

    pub fn node_by_label(&self, label: &str) -> Option<usize> {
        label.parse::<Context>().ok().and_then(|c| self.node_by_context(&c))
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn max_node_order(&self) -> usize {
        self.nodes.iter().map(HonNode::order).max().unwrap_or(0)
    }
}

impl TryFrom<HonParts> for HigherOrderNetwork {
    type Error = IntegrityError;
    fn try_from(parts: HonParts) -> Result<Self, Self::Error> {
        Self::from_parts(parts)
    }
}

impl From<HigherOrderNetwork> for HonParts {
    fn from(hon: HigherOrderNetwork) -> Self {
        HonParts {
            nodes: hon.nodes,
            edges: hon.edges,
            port_index: hon.port_index,
            build_params: hon.build_params,
        }
    }
}

impl Network for HigherOrderNetwork {
    fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    fn node_port(&self, node: usize) -> &PortId {
        self.nodes[node].port()
    }

    fn node_label(&self, node: usize) -> String {
        self.nodes[node].label()
    }
}

/// Longest retained context matching the history that ends at `pos`.
fn match_context(ports: &[&PortId], pos: usize, deps: &DependencySet, max_order: usize) -> Context {
    let deepest = max_order.min(pos + 1);
    let full: Vec<PortId> = (0..deepest).map(|k| ports[pos - k].clone()).collect();
    for k in (2..=deepest).rev() {
        let ctx = Context { ports: full[..k].to_vec() };
        if deps.contains(&ctx) {
            return ctx;
        }
    }
    Context { ports: full[..1].to_vec() }
}

/// Routes every raw transition between the longest retained contexts that
/// match its history at the source and at the target.
pub fn rewire_network(
    trajectories: &TrajectorySet,
    deps: &DependencySet,
    params: BuildParams,
) -> HigherOrderNetwork {
    let max_order = params.max_order;
    let mut contexts: BTreeSet<Context> = deps.retained.keys().cloned().collect();
    for t in trajectories.iter() {
        contexts.extend(t.ports().map(|p| Context::first_order(p.clone())));
    }
    let mut sorted: Vec<Context> = contexts.into_iter().collect();
    sorted.sort_by(|a, b| {
        a.current()
            .cmp(b.current())
            .then(a.order().cmp(&b.order()))
            .then_with(|| a.previous().cmp(b.previous()))
    });
    let ids: HashMap<&Context, usize> = sorted.iter().enumerate().map(|(i, c)| (c, i)).collect();

    let mut acc: BTreeMap<(usize, usize), (u64, EdgeHistograms)> = BTreeMap::new();
    for t in trajectories.iter() {
        let ports: Vec<&PortId> = t.ports().collect();
        let mut prev: Option<usize> = None;
        for (pos, hop) in t.hops.iter().enumerate() {
            let node = ids[&match_context(&ports, pos, deps, max_order)];
            if let Some(src) = prev {
                let e = acc.entry((src, node)).or_default();
                e.0 += 1;
                e.1.record(&hop.ship_type, hop.month);
            }
            prev = Some(node);
        }
    }
    drop(ids);

    let mut port_index: BTreeMap<PortId, Vec<usize>> = BTreeMap::new();
    let nodes: Vec<HonNode> = sorted
        .into_iter()
        .enumerate()
        .map(|(id, context)| {
            port_index.entry(context.current().clone()).or_default().push(id);
            HonNode { id, context }
        })
        .collect();
    let edges = acc
        .into_iter()
        .map(|((src, dst), (weight, histograms))| HonEdge { src, dst, weight, histograms })
        .collect();
    HigherOrderNetwork::from_parts(HonParts { nodes, edges, port_index, build_params: params })
        .expect("constructed network is consistent")
}

/// Counting, extraction and rewiring in one call.
pub fn build_hon(trajectories: &TrajectorySet, params: BuildParams) -> HigherOrderNetwork {
    let counts = count_contexts(trajectories, params.max_order);
    let deps = extract_dependencies(&counts, params.min_support, params.threshold, params.max_order);
    rewire_network(trajectories, &deps, params)
}
