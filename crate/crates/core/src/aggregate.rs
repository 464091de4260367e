//! Grouping of higher-order nodes by port attributes and the circular
//! sector geometry of the aggregated network.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::honbuild::{Context, HigherOrderNetwork};
use crate::ingest::{PortId, PortTable};
use crate::network::Network;

/// Gap between adjacent sectors.
pub const SECTOR_PADDING_DEG: f64 = 2.0;
/// Padding never takes more than this share of the circle.
pub const MAX_PADDING_SHARE: f64 = 0.25;
pub const MIN_SECTOR_DEG: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("port {0} has no group")]
    NoGroup(String),
    #[error("unknown grouping attribute '{0}'")]
    UnknownAttribute(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAttribute {
    EcoRealm,
    Country,
    Freshwater,
    /// Explicit port -> group map.
    Custom(BTreeMap<PortId, String>),
}

impl GroupAttribute {
    pub fn group_of(&self, port: &PortId, ports: &PortTable) -> Option<String> {
        if let GroupAttribute::Custom(map) = self {
            return map.get(port).cloned();
        }
        let p = ports.get(port.as_str())?;
        Some(match self {
            GroupAttribute::EcoRealm => p.eco_realm.clone(),
            GroupAttribute::Country => p.country.clone(),
            GroupAttribute::Freshwater => if p.freshwater { "Freshwater" } else { "Marine" }.to_string(),
            GroupAttribute::Custom(_) => unreachable!(),
        })
    }

    /// Name used in the "different group" sentinel.
    pub fn display_name(&self) -> &'static str {
        match self {
            GroupAttribute::EcoRealm => "Eco-realm",
            GroupAttribute::Country => "Country",
            GroupAttribute::Freshwater => "Freshwater Status",
            GroupAttribute::Custom(_) => "Group",
        }
    }
}

impl FromStr for GroupAttribute {
    type Err = AggregateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eco_realm" => Ok(GroupAttribute::EcoRealm),
            "country" => Ok(GroupAttribute::Country),
            "freshwater" => Ok(GroupAttribute::Freshwater),
            _ => Err(AggregateError::UnknownAttribute(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    Exact,
    Coarse,
}

impl FromStr for GroupingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(GroupingMode::Exact),
            "coarse" => Ok(GroupingMode::Coarse),
            _ => Err(format!("grouping must be 'exact' or 'coarse', got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    NodeCount,
    ShipCount,
}

impl FromStr for WeightScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "node_count" => Ok(WeightScheme::NodeCount),
            "ship_count" => Ok(WeightScheme::ShipCount),
            _ => Err(format!("weight must be uniform, node_count or ship_count, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub attribute: GroupAttribute,
    pub mode: GroupingMode,
    pub weight_scheme: WeightScheme,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            attribute: GroupAttribute::EcoRealm,
            mode: GroupingMode::Exact,
            weight_scheme: WeightScheme::Uniform,
        }
    }
}

/// One layer of an aggregated label. `Different` sorts after every group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLabel {
    Group(String),
    Different,
}

impl GroupLabel {
    pub fn render(&self, attribute: &GroupAttribute) -> String {
        match self {
            GroupLabel::Group(g) => g.clone(),
            GroupLabel::Different => format!("Different {}", attribute.display_name()),
        }
    }
}

/// Maps a context's ports to groups, current port first. In coarse mode a
/// previous port outside the current port's group becomes `Different`.
pub fn aggregate_node_label(
    context: &Context,
    ports: &PortTable,
    grouping: &GroupingConfig,
) -> Result<Vec<GroupLabel>, AggregateError> {
    let group = |p: &PortId| {
        grouping
            .attribute
            .group_of(p, ports)
            .ok_or_else(|| AggregateError::NoGroup(p.to_string()))
    };
    let current = group(context.current())?;
    let mut layers = vec![GroupLabel::Group(current.clone())];
    for p in context.previous() {
        let g = group(p)?;
        layers.push(match grouping.mode {
            GroupingMode::Coarse if g != current => GroupLabel::Different,
            _ => GroupLabel::Group(g),
        });
    }
    Ok(layers)
}

/// `[current|previous1, previous2]`.
pub fn render_label(layers: &[GroupLabel], attribute: &GroupAttribute) -> String {
    let mut s = String::from("[");
    s.push_str(&layers[0].render(attribute));
    for (i, l) in layers[1..].iter().enumerate() {
        s.push_str(if i == 0 { "|" } else { ", " });
        s.push_str(&l.render(attribute));
    }
    s.push(']');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedNode {
    pub id: usize,
    pub layers: Vec<GroupLabel>,
    pub label: String,
    pub members: Vec<usize>,
    pub node_count: usize,
    /// Sum of members' out-edge weights.
    pub ship_count: u64,
}

impl AggregatedNode {
    pub fn order(&self) -> usize {
        self.layers.len()
    }

    pub fn weight(&self, scheme: WeightScheme) -> f64 {
        match scheme {
            WeightScheme::Uniform => 1.0,
            WeightScheme::NodeCount => self.node_count as f64,
            WeightScheme::ShipCount => self.ship_count as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedNetwork {
    /// Sorted by layers; ids are positions.
    pub nodes: Vec<AggregatedNode>,
    pub edges: Vec<AggregatedEdge>,
    pub grouping: GroupingConfig,
}

impl AggregatedNetwork {
    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// Merges HoN nodes with identical aggregated labels and sums edge weights.
/// With a filter, only those nodes and the edges among them take part.
pub fn aggregate_network(
    hon: &HigherOrderNetwork,
    ports: &PortTable,
    grouping: &GroupingConfig,
    filter: Option<&BTreeSet<usize>>,
) -> Result<AggregatedNetwork, AggregateError> {
    let included = |n: usize| filter.is_none_or(|f| f.contains(&n));
    let mut groups: BTreeMap<Vec<GroupLabel>, Vec<usize>> = BTreeMap::new();
    let mut of_node: BTreeMap<usize, Vec<GroupLabel>> = BTreeMap::new();
    for node in hon.nodes().iter().filter(|n| included(n.id)) {
        let layers = aggregate_node_label(&node.context, ports, grouping)?;
        groups.entry(layers.clone()).or_default().push(node.id);
        of_node.insert(node.id, layers);
    }
    let index: BTreeMap<&Vec<GroupLabel>, usize> = groups.keys().enumerate().map(|(i, k)| (k, i)).collect();
    let adj = hon.adjacency();
    let nodes: Vec<AggregatedNode> = groups
        .iter()
        .enumerate()
        .map(|(id, (layers, members))| AggregatedNode {
            id,
            label: render_label(layers, &grouping.attribute),
            layers: layers.clone(),
            node_count: members.len(),
            ship_count: members.iter().map(|&m| adj.out_weight(m) as u64).sum(),
            members: members.clone(),
        })
        .collect();
    let mut edges: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for e in hon.edges() {
        if let (Some(s), Some(d)) = (of_node.get(&e.src), of_node.get(&e.dst)) {
            *edges.entry((index[s], index[d])).or_insert(0) += e.weight;
        }
    }
    Ok(AggregatedNetwork {
        nodes,
        edges: edges.into_iter().map(|((src, dst), weight)| AggregatedEdge { src, dst, weight }).collect(),
        grouping: grouping.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    /// 0 is the innermost ring (current group).
    pub layer: usize,
    pub group: GroupLabel,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub node: usize,
    pub start_angle: f64,
    pub end_angle: f64,
    pub weight: f64,
    pub rings: Vec<Ring>,
}

impl Sector {
    pub fn mid_angle(&self) -> f64 {
        0.5 * (self.start_angle + self.end_angle)
    }

    pub fn width(&self) -> f64 {
        self.end_angle - self.start_angle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chord {
    pub src: usize,
    pub dst: usize,
    pub src_angle: f64,
    pub dst_angle: f64,
    pub weight: u64,
    /// Both ends share the current group.
    pub intra: bool,
}

impl Chord {
    /// Endpoints on the unit circle.
    pub fn endpoints(&self) -> [(f64, f64); 2] {
        [
            (self.src_angle.cos(), self.src_angle.sin()),
            (self.dst_angle.cos(), self.dst_angle.sin()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorLayout {
    pub weight_scheme: WeightScheme,
    /// Gap between adjacent sectors in radians.
    pub padding: f64,
    /// In circular order.
    pub sectors: Vec<Sector>,
    pub chords: Vec<Chord>,
}

/// Splits `span` proportionally to `weights`, raising any share below
/// `floor` to the floor and rescaling the rest.
pub fn proportional_widths(weights: &[f64], span: f64, floor: f64) -> Vec<f64> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if total <= 0.0 || floor * n as f64 >= span {
        return vec![span / n as f64; n];
    }
    let mut floored = vec![false; n];
    loop {
        let fixed = floored.iter().filter(|&&f| f).count();
        let free_weight: f64 = (0..n).filter(|&i| !floored[i]).map(|i| weights[i].max(0.0)).sum();
        let remaining = span - fixed as f64 * floor;
        let widths: Vec<f64> = (0..n)
            .map(|i| {
                if floored[i] {
                    floor
                } else if free_weight > 0.0 {
                    remaining * weights[i].max(0.0) / free_weight
                } else {
                    remaining / (n - fixed) as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..n {
            if !floored[i] && widths[i] < floor {
                floored[i] = true;
                changed = true;
            }
        }
        if !changed {
            return widths;
        }
    }
}

/// Lays aggregated nodes around a circle in label order with widths
/// proportional to the scheme's weight.
pub fn circular_layout(agg: &AggregatedNetwork, scheme: WeightScheme) -> SectorLayout {
    let n = agg.nodes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| agg.nodes[a].layers.cmp(&agg.nodes[b].layers).then(a.cmp(&b)));
    let padding = if n == 0 {
        0.0
    } else {
        SECTOR_PADDING_DEG.to_radians().min(MAX_PADDING_SHARE * TAU / n as f64)
    };
    let span = TAU - padding * n as f64;
    let weights: Vec<f64> = order.iter().map(|&i| agg.nodes[i].weight(scheme)).collect();
    let widths = proportional_widths(&weights, span, MIN_SECTOR_DEG.to_radians());
    let mut angle = 0.0;
    let mut sectors = Vec::with_capacity(n);
    let mut position = vec![0usize; n];
    for (k, (&i, &w)) in order.iter().zip(&widths).enumerate() {
        let node = &agg.nodes[i];
        position[i] = k;
        sectors.push(Sector {
            node: i,
            start_angle: angle,
            end_angle: angle + w,
            weight: weights[k],
            rings: node
                .layers
                .iter()
                .enumerate()
                .map(|(layer, g)| Ring { layer, group: g.clone(), label: g.render(&agg.grouping.attribute) })
                .collect(),
        });
        angle += w + padding;
    }
    let chords = agg
        .edges
        .iter()
        .map(|e| Chord {
            src: e.src,
            dst: e.dst,
            src_angle: sectors[position[e.src]].mid_angle(),
            dst_angle: sectors[position[e.dst]].mid_angle(),
            weight: e.weight,
            intra: agg.nodes[e.src].layers[0] == agg.nodes[e.dst].layers[0],
        })
        .collect();
    SectorLayout { weight_scheme: scheme, padding, sectors, chords }
}

impl fmt::Display for GroupingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupingMode::Exact => "exact",
            GroupingMode::Coarse => "coarse",
        })
    }
}
