//! Geometry for the views: scatter coordinates, dependency-view placement
//! and bundled chords.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::NodeMetrics;
use crate::honbuild::HigherOrderNetwork;
use crate::ingest::{PortId, PortTable};
use crate::network::Network;

pub const DEFAULT_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterLayout {
    pub seed: u64,
    pub iterations: usize,
    /// Indexed by node id, each within [0,1]².
    pub positions: Vec<[f64; 2]>,
}

/// Spring-electric layout: pairwise repulsion k²/d, attraction w·d²/k along
/// edges (weights normalized to the heaviest edge), linear cooling.
pub fn force_layout<N: Network + ?Sized>(net: &N, seed: u64, iterations: usize) -> ScatterLayout {
    let n = net.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt().max(1.0);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side]).collect();

    // Undirected weights: w(i,j) + w(j,i).
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (s, d, w) in net.adjacency().edges() {
        if s != d {
            *merged.entry((s.min(d), s.max(d))).or_insert(0.0) += w;
        }
    }
    let max_w = merged.values().cloned().fold(0.0, f64::max);
    let springs: Vec<(usize, usize, f64)> = merged.into_iter().map(|((a, b), w)| (a, b, w / max_w)).collect();

    let k = 1.0;
    let t0 = 0.1 * side;
    for it in 0..iterations {
        let temp = t0 * (1.0 - it as f64 / iterations as f64);
        let mut disp: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut f = [0.0, 0.0];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let (dx, dy, d) = separation(&pos, i, j);
                    let r = k * k / d;
                    f[0] += dx / d * r;
                    f[1] += dy / d * r;
                }
                f
            })
            .collect();
        for &(a, b, w) in &springs {
            let (dx, dy, d) = separation(&pos, a, b);
            let pull = w * d * d / k;
            disp[a][0] -= dx / d * pull;
            disp[a][1] -= dy / d * pull;
            disp[b][0] += dx / d * pull;
            disp[b][1] += dy / d * pull;
        }
        for (p, f) in pos.iter_mut().zip(&disp) {
            let len = (f[0] * f[0] + f[1] * f[1]).sqrt();
            if len > 0.0 {
                let step = len.min(temp);
                p[0] += f[0] / len * step;
                p[1] += f[1] / len * step;
            }
        }
    }
    normalize_unit_square(&mut pos);
    ScatterLayout { seed, iterations, positions: pos }
}

/// Vector from j to i and its length; coincident points are separated along
/// a direction fixed by their indices.
fn separation(pos: &[[f64; 2]], i: usize, j: usize) -> (f64, f64, f64) {
    let dx = pos[i][0] - pos[j][0];
    let dy = pos[i][1] - pos[j][1];
    let d = (dx * dx + dy * dy).sqrt();
    if d > 1e-9 {
        return (dx, dy, d);
    }
    let angle = (i * 31 + j * 17) as f64;
    let sign = if i < j { 1.0 } else { -1.0 };
    (sign * angle.cos() * 1e-9, sign * angle.sin() * 1e-9, 1e-9)
}

fn normalize_unit_square(pos: &mut [[f64; 2]]) {
    for axis in 0..2 {
        let lo = pos.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = pos.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
        for p in pos.iter_mut() {
            p[axis] = if hi - lo > 1e-12 { ((p[axis] - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        }
    }
}

/// How the next-port circles on the right are ordered top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightOrder {
    /// By estimated y (probability-weighted mean of source rectangles).
    #[default]
    Rank,
    Temperature,
    Salinity,
    EcoRealm,
    /// Descending port PageRank.
    Pagerank,
}

impl FromStr for RightOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "rank" => RightOrder::Rank,
            "temperature" => RightOrder::Temperature,
            "salinity" => RightOrder::Salinity,
            "eco_realm" => RightOrder::EcoRealm,
            "pagerank" => RightOrder::Pagerank,
            _ => return Err(format!("unknown right order '{s}'")),
        })
    }
}

impl fmt::Display for RightOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RightOrder::Rank => "rank",
            RightOrder::Temperature => "temperature",
            RightOrder::Salinity => "salinity",
            RightOrder::EcoRealm => "eco_realm",
            RightOrder::Pagerank => "pagerank",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub node_id: usize,
    pub label: String,
    pub port: PortId,
    pub slot: usize,
    pub y: f64,
    pub order: usize,
    pub entropy_norm: f64,
    pub kld_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftCircle {
    pub port: PortId,
    pub column: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightCircle {
    pub port: PortId,
    pub y: f64,
    /// Probability-weighted mean y of the rectangles feeding it.
    pub y_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub node_id: usize,
    /// Previous ports oldest-first.
    pub ports: Vec<PortId>,
    /// One point per previous port, then the rectangle.
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub node_id: usize,
    pub next_port: PortId,
    pub probability: f64,
    pub ship_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DependencyLayout {
    /// Top to bottom.
    pub middle: Vec<Rectangle>,
    pub left: Vec<LeftCircle>,
    /// Top to bottom.
    pub right: Vec<RightCircle>,
    pub right_order: RightOrder,
    pub curves: Vec<Curve>,
    pub edges: Vec<DependencyEdge>,
    /// x of the rectangle column; left columns sit at 0..columns, right
    /// circles at `rect_x + 1`.
    pub rect_x: f64,
    /// Total height in slot units.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyOptions {
    pub min_prob: f64,
    pub min_ships: u64,
    pub right_order: RightOrder,
}

impl Default for DependencyOptions {
    fn default() -> Self {
        DependencyOptions { min_prob: 0.0, min_ships: 0, right_order: RightOrder::Rank }
    }
}

/// Places the focus nodes as rectangles, their histories as circles on the
/// left and their next ports as circles on the right.
pub fn dependency_layout(
    hon: &HigherOrderNetwork,
    metrics: &[NodeMetrics],
    focus: &[usize],
    options: &DependencyOptions,
    ports: &PortTable,
    port_pagerank: Option<&BTreeMap<PortId, f64>>,
) -> DependencyLayout {
    let focus: BTreeSet<usize> = focus.iter().copied().collect();
    if focus.is_empty() {
        return DependencyLayout { right_order: options.right_order, ..DependencyLayout::default() };
    }
    let by_id: BTreeMap<usize, &NodeMetrics> = metrics.iter().map(|m| (m.node_id, m)).collect();

    let mut nodes: Vec<usize> = focus.into_iter().collect();
    nodes.sort_by(|&a, &b| {
        let (na, nb) = (hon.node(a), hon.node(b));
        na.port().cmp(nb.port()).then(nb.order().cmp(&na.order())).then(na.context.cmp(&nb.context))
    });
    let middle: Vec<Rectangle> = nodes
        .iter()
        .enumerate()
        .map(|(slot, &id)| {
            let node = hon.node(id);
            let m = by_id.get(&id);
            Rectangle {
                node_id: id,
                label: node.label(),
                port: node.port().clone(),
                slot,
                y: slot as f64 + 0.5,
                order: node.order(),
                entropy_norm: m.map_or(0.0, |m| m.entropy_norm),
                kld_norm: m.map_or(0.0, |m| m.kld_norm),
            }
        })
        .collect();
    let height = middle.len() as f64;
    let columns = middle.iter().map(|r| r.order - 1).max().unwrap_or(0);
    let rect_x = columns as f64;

    // Left circles: earliest oldest-first position and mean rectangle y.
    let mut left_acc: BTreeMap<PortId, (usize, f64, usize)> = BTreeMap::new();
    for r in &middle {
        let history = oldest_first(hon, r.node_id);
        let mut seen = BTreeSet::new();
        for (pos, p) in history.iter().enumerate() {
            let e = left_acc.entry(p.clone()).or_insert((usize::MAX, 0.0, 0));
            e.0 = e.0.min(pos);
            if seen.insert(p.clone()) {
                e.1 += r.y;
                e.2 += 1;
            }
        }
    }
    let mut left: Vec<LeftCircle> = left_acc
        .into_iter()
        .map(|(port, (column, sum, n))| LeftCircle { port, column, x: column as f64, y: sum / n as f64 })
        .collect();
    resolve_left_conflicts(&mut left);
    let left_pos: BTreeMap<&PortId, [f64; 2]> = left.iter().map(|c| (&c.port, [c.x, c.y])).collect();

    let curves: Vec<Curve> = middle
        .iter()
        .map(|r| {
            let history = oldest_first(hon, r.node_id);
            let mut points: Vec<[f64; 2]> = history.iter().map(|p| left_pos[p]).collect();
            points.push([rect_x, r.y]);
            Curve { node_id: r.node_id, ports: history, points }
        })
        .collect();

    // Outgoing transitions per (node, next port).
    let adj = hon.adjacency();
    let mut all_edges = Vec::new();
    for r in &middle {
        let total = adj.out_weight(r.node_id);
        let mut per_port: BTreeMap<PortId, f64> = BTreeMap::new();
        for link in adj.out_links(r.node_id) {
            *per_port.entry(hon.node(link.node).port().clone()).or_insert(0.0) += link.weight;
        }
        for (port, w) in per_port {
            all_edges.push((r.y, DependencyEdge {
                node_id: r.node_id,
                next_port: port,
                probability: w / total,
                ship_count: w.round() as u64,
            }));
        }
    }
    let mut estimate: BTreeMap<PortId, (f64, f64)> = BTreeMap::new();
    for (y, e) in &all_edges {
        let acc = estimate.entry(e.next_port.clone()).or_insert((0.0, 0.0));
        acc.0 += y * e.probability;
        acc.1 += e.probability;
    }
    let edges: Vec<DependencyEdge> = all_edges
        .into_iter()
        .map(|(_, e)| e)
        .filter(|e| e.probability >= options.min_prob && e.ship_count >= options.min_ships)
        .collect();
    let shown: BTreeSet<&PortId> = edges.iter().map(|e| &e.next_port).collect();
    let mut right: Vec<RightCircle> = shown
        .into_iter()
        .map(|p| {
            let (num, den) = estimate[p];
            RightCircle { port: p.clone(), y: 0.0, y_estimate: if den > 0.0 { num / den } else { height / 2.0 } }
        })
        .collect();
    order_right(&mut right, options.right_order, ports, port_pagerank);
    let count = right.len() as f64;
    for (i, c) in right.iter_mut().enumerate() {
        c.y = height * (i as f64 + 0.5) / count;
    }

    DependencyLayout { middle, left, right, right_order: options.right_order, curves, edges, rect_x, height }
}

fn oldest_first(hon: &HigherOrderNetwork, node: usize) -> Vec<PortId> {
    hon.node(node).context.previous().iter().rev().cloned().collect()
}

/// Within a column, circles sorted by (y, port) are pushed down so that
/// neighbours are at least one slot apart.
fn resolve_left_conflicts(left: &mut [LeftCircle]) {
    left.sort_by(|a, b| a.column.cmp(&b.column).then(a.y.total_cmp(&b.y)).then(a.port.cmp(&b.port)));
    for i in 1..left.len() {
        if left[i].column == left[i - 1].column && left[i].y < left[i - 1].y + 1.0 {
            left[i].y = left[i - 1].y + 1.0;
        }
    }
}

fn order_right(
    right: &mut [RightCircle],
    mode: RightOrder,
    ports: &PortTable,
    pagerank: Option<&BTreeMap<PortId, f64>>,
) {
    let numeric = |p: &PortId| -> f64 {
        match mode {
            RightOrder::Temperature => ports.get(p.as_str()).map_or(f64::INFINITY, |r| r.temperature),
            RightOrder::Salinity => ports.get(p.as_str()).map_or(f64::INFINITY, |r| r.salinity),
            RightOrder::Pagerank => -pagerank.and_then(|m| m.get(p)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    };
    let realm = |p: &PortId| ports.get(p.as_str()).map(|r| r.eco_realm.clone());
    right.sort_by(|a, b| {
        let primary = match mode {
            RightOrder::Rank => std::cmp::Ordering::Equal,
            RightOrder::EcoRealm => realm(&a.port).cmp(&realm(&b.port)),
            _ => numeric(&a.port).total_cmp(&numeric(&b.port)),
        };
        primary.then(a.y_estimate.total_cmp(&b.y_estimate)).then(a.port.cmp(&b.port))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub enabled: bool,
    pub cycles: usize,
    pub initial_subdivisions: usize,
    pub compatibility: f64,
    pub step: f64,
    pub initial_iterations: usize,
    pub spring: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            enabled: true,
            cycles: 6,
            initial_subdivisions: 1,
            compatibility: 0.6,
            step: 0.04,
            initial_iterations: 50,
            spring: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundledChords {
    pub params: BundleParams,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn project(p: Point, a: Point, b: Point) -> Point {
    let ab = sub(b, a);
    let t = dot(sub(p, a), ab) / dot(ab, ab);
    [a[0] + t * ab[0], a[1] + t * ab[1]]
}

fn visibility(p: [Point; 2], q: [Point; 2]) -> f64 {
    let i0 = project(q[0], p[0], p[1]);
    let i1 = project(q[1], p[0], p[1]);
    let span = norm(sub(i0, i1));
    if span < 1e-12 {
        return 0.0;
    }
    (1.0 - 2.0 * norm(sub(midpoint(p[0], p[1]), midpoint(i0, i1))) / span).max(0.0)
}

/// Angle, scale, position and visibility compatibility of two segments.
pub fn edge_compatibility(p: [Point; 2], q: [Point; 2]) -> f64 {
    let (vp, vq) = (sub(p[1], p[0]), sub(q[1], q[0]));
    let (lp, lq) = (norm(vp), norm(vq));
    if lp < 1e-12 || lq < 1e-12 {
        return 0.0;
    }
    let angle = (dot(vp, vq) / (lp * lq)).abs();
    let avg = 0.5 * (lp + lq);
    let scale = 2.0 / (avg / lp.min(lq) + lp.max(lq) / avg);
    let position = avg / (avg + norm(sub(midpoint(p[0], p[1]), midpoint(q[0], q[1]))));
    let vis = visibility(p, q).min(visibility(q, p));
    angle * scale * position * vis
}

/// Resamples a polyline to `interior` evenly spaced inner points.
fn resample(line: &[Point], interior: usize) -> Vec<Point> {
    let lengths: Vec<f64> = line.windows(2).map(|w| norm(sub(w[1], w[0]))).collect();
    let total: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(interior + 2);
    out.push(line[0]);
    let mut seg = 0;
    let mut walked = 0.0;
    for k in 1..=interior {
        let target = total * k as f64 / (interior + 1) as f64;
        while seg < lengths.len() - 1 && walked + lengths[seg] < target {
            walked += lengths[seg];
            seg += 1;
        }
        let t = if lengths[seg] > 0.0 { (target - walked) / lengths[seg] } else { 0.0 };
        let (a, b) = (line[seg], line[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    out.push(line[line.len() - 1]);
    out
}

/// Force-directed edge bundling over straight chords; endpoints are pinned.
pub fn bundle_edges(chords: &[[Point; 2]], params: &BundleParams) -> BundledChords {
    let mut lines: Vec<Vec<Point>> = chords.iter().map(|c| vec![c[0], c[1]]).collect();
    if !params.enabled || chords.is_empty() {
        return BundledChords { params: params.clone(), polylines: lines };
    }
    let m = chords.len();
    let compat: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let c = edge_compatibility(chords[i], chords[j]);
                    (c >= params.compatibility).then_some((j, c))
                })
                .collect()
        })
        .collect();

    let mut subdivisions = params.initial_subdivisions.max(1);
    let mut step = params.step;
    let mut iterations = params.initial_iterations as f64;
    for cycle in 0..params.cycles {
        if cycle > 0 {
            subdivisions *= 2;
            step /= 2.0;
            iterations *= 2.0 / 3.0;
        }
        lines = lines.iter().map(|l| resample(l, subdivisions)).collect();
        for _ in 0..iterations.round() as usize {
            lines = (0..m)
                .into_par_iter()
                .map(|i| {
                    let line = &lines[i];
                    let len = norm(sub(chords[i][1], chords[i][0]));
                    let kp = if len > 0.0 { params.spring / (len * (subdivisions + 1) as f64) } else { 0.0 };
                    let mut next = line.clone();
                    for s in 1..=subdivisions {
                        let p = line[s];
                        let mut f = [
                            kp * (line[s - 1][0] + line[s + 1][0] - 2.0 * p[0]),
                            kp * (line[s - 1][1] + line[s + 1][1] - 2.0 * p[1]),
                        ];
                        for &(j, c) in &compat[i] {
                            let d = sub(lines[j][s], p);
                            let dist = norm(d);
                            if dist > 1e-9 {
                                f[0] += c * d[0] / dist;
                                f[1] += c * d[1] / dist;
                            }
                        }
                        next[s] = [p[0] + step * f[0], p[1] + step * f[1]];
                    }
                    next
                })
                .collect();
        }
    }
    for (line, c) in lines.iter_mut().zip(chords) {
        line[0] = c[0];
        let last = line.len() - 1;
        line[last] = c[1];
    }
    BundledChords { params: params.clone(), polylines: lines }
}
