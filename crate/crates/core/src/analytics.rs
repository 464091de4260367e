//! Transition distributions, entropy and divergence per node, stationary
//! distributions and entropy rates, PageRank, Louvain communities and
//! random-walk fidelity.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{kl_divergence, Distribution};
use crate::honbuild::{FirstOrderNetwork, HigherOrderNetwork};
use crate::ingest::{PortId, TrajectorySet};
use crate::network::{Adjacency, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Successor nodes as they are.
    Node,
    /// Successor nodes collapsed onto their current port.
    Port,
}

/// Weight-normalized distribution over successor nodes.
pub fn node_distribution<N: Network + ?Sized>(net: &N, node: usize) -> Distribution<usize> {
    Distribution::from_weights(net.adjacency().out_links(node).iter().map(|l| (l.node, l.weight)))
}

/// Distribution over the physical ports of successor nodes.
pub fn port_distribution<N: Network + ?Sized>(net: &N, node: usize) -> Distribution<PortId> {
    Distribution::from_weights(
        net.adjacency()
            .out_links(node)
            .iter()
            .map(|l| (net.node_port(l.node).clone(), l.weight)),
    )
}

/// Outcome-labelled distribution in either projection.
pub fn out_distribution<N: Network + ?Sized>(net: &N, node: usize, projection: Projection) -> Distribution<String> {
    match projection {
        Projection::Node => node_distribution(net, node).map_keys(|&n| net.node_label(n)),
        Projection::Port => port_distribution(net, node).map_keys(|p| p.to_string()),
    }
}

/// Entropy in bits of the next-port distribution; 0 for sinks.
pub fn node_entropy<N: Network + ?Sized>(net: &N, node: usize) -> f64 {
    port_distribution(net, node).entropy()
}

/// Divergence in bits of a HoN node's next-port distribution from the
/// first-order distribution of its current port.
pub fn node_kld_vs_first_order(hon: &HigherOrderNetwork, fon: &FirstOrderNetwork, node: usize) -> f64 {
    let n = hon.node(node);
    if n.order() == 1 {
        return 0.0;
    }
    let p = port_distribution(hon, node);
    let Some(first) = fon.node_of(n.port().as_str()) else {
        return 0.0;
    };
    let q = port_distribution(fon, first);
    kl_divergence(&p, &q).expect("higher-order successors are a subset of first-order successors")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub node_id: usize,
    pub label: String,
    pub order: usize,
    pub entropy_bits: f64,
    pub kld_bits: f64,
    pub entropy_norm: f64,
    pub kld_norm: f64,
    pub sink: bool,
}

/// Entropy normalized by the maximum for the node's out-degree (at least 2).
pub fn entropy_norm(entropy_bits: f64, port_out_degree: usize) -> f64 {
    (entropy_bits / (port_out_degree.max(2) as f64).log2()).clamp(0.0, 1.0)
}

pub fn node_metrics(hon: &HigherOrderNetwork, fon: &FirstOrderNetwork) -> Vec<NodeMetrics> {
    let mut metrics: Vec<NodeMetrics> = (0..hon.node_count())
        .into_par_iter()
        .map(|i| {
            let dist = port_distribution(hon, i);
            let entropy_bits = dist.entropy();
            NodeMetrics {
                node_id: i,
                label: hon.node_label(i),
                order: hon.node(i).order(),
                entropy_bits,
                kld_bits: node_kld_vs_first_order(hon, fon, i),
                entropy_norm: entropy_norm(entropy_bits, dist.len()),
                kld_norm: 0.0,
                sink: dist.sink,
            }
        })
        .collect();
    normalize_kld(&mut metrics);
    metrics
}

/// Rescales `kld_norm` by the maximum divergence within the given set.
pub fn normalize_kld(metrics: &mut [NodeMetrics]) {
    let max = metrics.iter().map(|m| m.kld_bits).fold(0.0, f64::max);
    for m in metrics {
        m.kld_norm = if max > 0.0 { m.kld_bits / max } else { 0.0 };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Power iteration on `damping * P + (1 - damping) / n`, where `P` is the
/// weight-normalized transition matrix and dangling rows jump uniformly.
fn power_iterate(adj: &Adjacency, damping: f64, tol: f64, max_iter: usize) -> PowerIteration {
    let n = adj.node_count();
    if n == 0 {
        return PowerIteration { scores: Vec::new(), iterations: 0, residual: 0.0, converged: true };
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&i| adj.out_weight(i) <= 0.0).map(|i| x[i]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        // pull formulation: fixed summation order per node
        next.par_iter_mut().enumerate().for_each(|(j, v)| {
            *v = base
                + damping
                    * adj
                        .in_links(j)
                        .iter()
                        .map(|l| x[l.node] * l.weight / adj.out_weight(l.node))
                        .sum::<f64>();
        });
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < tol {
            break;
        }
    }
    PowerIteration { scores: x, iterations, residual, converged: residual < tol }
}

pub const STATIONARY_TOL: f64 = 1e-10;
pub const STATIONARY_MAX_ITER: usize = 500;

/// Stationary distribution of the walk that follows an edge with
/// probability `1 - teleport` and jumps uniformly otherwise.
pub fn stationary_distribution<N: Network + ?Sized>(net: &N, teleport: f64) -> PowerIteration {
    assert!(teleport > 0.0 && teleport < 1.0, "teleport must lie in (0, 1)");
    power_iterate(net.adjacency(), 1.0 - teleport, STATIONARY_TOL, STATIONARY_MAX_ITER)
}

/// `-sum_i pi(i) sum_j p(i->j) log2 p(i->j)` with node-level transition
/// probabilities and a given stationary distribution.
pub fn entropy_rate_with<N: Network + ?Sized>(net: &N, pi: &[f64]) -> f64 {
    (0..net.node_count())
        .map(|i| pi[i] * node_distribution(net, i).entropy())
        .sum()
}

pub fn entropy_rate<N: Network + ?Sized>(net: &N, teleport: f64) -> f64 {
    entropy_rate_with(net, &stationary_distribution(net, teleport).scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig { damping: 0.85, tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankScores {
    /// Indexed by node id.
    pub scores: Vec<f64>,
    pub damping: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Weighted PageRank; dangling mass is redistributed uniformly.
pub fn pagerank<N: Network + ?Sized>(net: &N, config: PageRankConfig) -> PageRankScores {
    assert!(config.damping > 0.0 && config.damping < 1.0, "damping must lie in (0, 1)");
    let it = power_iterate(net.adjacency(), config.damping, config.tol, config.max_iter);
    PageRankScores {
        scores: it.scores,
        damping: config.damping,
        iterations: it.iterations,
        residual: it.residual,
        converged: it.converged,
    }
}

/// Sums node scores per current port.
pub fn aggregate_pagerank_by_port<N: Network + ?Sized>(scores: &[f64], net: &N) -> BTreeMap<PortId, f64> {
    let mut out: BTreeMap<PortId, f64> = BTreeMap::new();
    for (i, &s) in scores.iter().enumerate() {
        *out.entry(net.node_port(i).clone()).or_insert(0.0) += s;
    }
    out
}

/// `PR_FoN(port) - PR_HoN(port)`; positive means overestimated by the FoN.
pub fn pagerank_delta(fon: &BTreeMap<PortId, f64>, hon: &BTreeMap<PortId, f64>) -> BTreeMap<PortId, f64> {
    let mut out: BTreeMap<PortId, f64> = fon.iter().map(|(p, &s)| (p.clone(), s)).collect();
    for (p, &s) in hon {
        *out.entry(p.clone()).or_insert(0.0) -= s;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    /// Community of each node, dense ids numbered by first appearance.
    pub assignment: Vec<usize>,
    pub count: usize,
    pub modularity: f64,
    pub resolution: f64,
    pub seed: u64,
}

/// Symmetric weight lists `w'_ij = w_ij + w_ji`; self-loops kept on the
/// diagonal.
fn symmetrize(adj: &Adjacency) -> Vec<Vec<(usize, f64)>> {
    let n = adj.node_count();
    let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (s, d, w) in adj.edges() {
        if s == d {
            *maps[s].entry(s).or_insert(0.0) += 2.0 * w;
        } else {
            *maps[s].entry(d).or_insert(0.0) += w;
            *maps[d].entry(s).or_insert(0.0) += w;
        }
    }
    maps.into_iter().map(|m| m.into_iter().collect()).collect()
}

fn modularity_of(sym: &[Vec<(usize, f64)>], part: &[usize], resolution: f64) -> f64 {
    let m2: f64 = sym.iter().flatten().map(|&(_, w)| w).sum();
    if m2 <= 0.0 {
        return 0.0;
    }
    let communities = part.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0.0; communities];
    let mut tot = vec![0.0; communities];
    for (i, nbrs) in sym.iter().enumerate() {
        for &(j, w) in nbrs {
            tot[part[i]] += w;
            if part[i] == part[j] {
                internal[part[i]] += w;
            }
        }
    }
    internal.iter().zip(&tot).map(|(&a, &t)| a / m2 - resolution * (t / m2).powi(2)).sum()
}

/// Modularity of a partition of `net` on its symmetrized weights.
pub fn modularity<N: Network + ?Sized>(net: &N, part: &[usize], resolution: f64) -> f64 {
    modularity_of(&symmetrize(net.adjacency()), part, resolution)
}

/// One level of local moves. Returns the community of each node and
/// whether anything moved.
fn local_moves(sym: &[Vec<(usize, f64)>], resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = sym.len();
    let k: Vec<f64> = sym.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
    let m2: f64 = k.iter().sum();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut moved_any = false;
    if m2 <= 0.0 {
        return (comm, false);
    }
    let mut links: HashMap<usize, f64> = HashMap::new();
    loop {
        let mut moved = false;
        for &i in &order {
            let own = comm[i];
            links.clear();
            for &(j, w) in &sym[i] {
                if j != i {
                    *links.entry(comm[j]).or_insert(0.0) += w;
                }
            }
            tot[own] -= k[i];
            let gain = |c: usize, w_in: f64| w_in - resolution * tot[c] * k[i] / m2;
            let own_gain = gain(own, links.get(&own).copied().unwrap_or(0.0));
            let mut candidates: Vec<(usize, f64)> = links.iter().map(|(&c, &w)| (c, w)).collect();
            candidates.sort_by_key(|&(c, _)| c);
            // ascending ids with strict comparison: ties keep the smallest id
            let mut other: Option<(usize, f64)> = None;
            for (c, w_in) in candidates {
                let g = gain(c, w_in);
                if c != own && other.is_none_or(|(_, bg)| g > bg) {
                    other = Some((c, g));
                }
            }
            let best = match other {
                Some((c, g)) if g > own_gain + 1e-12 * m2.max(1.0) => c,
                _ => own,
            };
            tot[best] += k[i];
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

fn renumber(part: &mut [usize]) -> usize {
    let mut map: HashMap<usize, usize> = HashMap::new();
    for c in part.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

/// Multi-level Louvain on the symmetrized weights. Node visiting order at
/// each level comes from a seeded shuffle.
pub fn detect_communities<N: Network + ?Sized>(net: &N, resolution: f64, seed: u64) -> CommunityAssignment {
    let base = symmetrize(net.adjacency());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..base.len()).collect();
    let mut level = base.clone();
    loop {
        let (mut comm, moved) = local_moves(&level, resolution, &mut rng);
        if !moved {
            break;
        }
        let count = renumber(&mut comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        let mut agg: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        for (i, nbrs) in level.iter().enumerate() {
            for &(j, w) in nbrs {
                *agg[comm[i]].entry(comm[j]).or_insert(0.0) += w;
            }
        }
        level = agg.into_iter().map(|m| m.into_iter().collect()).collect();
        if count == 1 {
            break;
        }
    }
    let count = renumber(&mut membership);
    let q = modularity_of(&base, &membership, resolution);
    CommunityAssignment { assignment: membership, count, modularity: q, resolution, seed }
}

fn cumulative(links: &[crate::network::Link]) -> Vec<f64> {
    let mut acc = 0.0;
    links
        .iter()
        .map(|l| {
            acc += l.weight;
            acc
        })
        .collect()
}

fn sample(cum: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total = *cum.last()?;
    if total <= 0.0 {
        return None;
    }
    let u = rng.gen::<f64>() * total;
    Some(cum.partition_point(|&c| c <= u).min(cum.len() - 1))
}

/// Random walks emitted as port sequences of at most `length` ports. Walks
/// start at nodes drawn proportionally to out-weight and stop early at
/// sinks. Walk `i` uses its own stream of the seeded generator.
pub fn simulate_walks<N: Network + ?Sized>(net: &N, n_walks: usize, length: usize, seed: u64) -> Vec<Vec<PortId>> {
    let adj = net.adjacency();
    let n = adj.node_count();
    let starts: Vec<f64> = {
        let mut acc = 0.0;
        (0..n)
            .map(|i| {
                acc += adj.out_weight(i);
                acc
            })
            .collect()
    };
    let cums: Vec<Vec<f64>> = (0..n).map(|i| cumulative(adj.out_links(i))).collect();
    (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let mut walk = Vec::with_capacity(length);
            let Some(mut node) = sample(&starts, &mut rng) else {
                return walk;
            };
            walk.push(net.node_port(node).clone());
            while walk.len() < length {
                let Some(k) = sample(&cums[node], &mut rng) else { break };
                node = adj.out_links(node)[k].node;
                walk.push(net.node_port(node).clone());
            }
            walk
        })
        .collect()
}

fn kgram_counts<'a>(seqs: impl Iterator<Item = Vec<&'a PortId>>, k: usize) -> BTreeMap<Vec<&'a PortId>, f64> {
    let mut counts = BTreeMap::new();
    for s in seqs {
        for w in s.windows(k) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Jensen-Shannon divergence in bits between two k-gram distributions.
fn jsd<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let ta: f64 = a.values().sum();
    let tb: f64 = b.values().sum();
    if ta <= 0.0 || tb <= 0.0 {
        return if ta <= 0.0 && tb <= 0.0 { 0.0 } else { 1.0 };
    }
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let half = |x: f64, mid: f64| if x > 0.0 { x * (x / mid).log2() } else { 0.0 };
    let mut d = 0.0;
    for key in keys {
        let p = a.get(key).copied().unwrap_or(0.0) / ta;
        let q = b.get(key).copied().unwrap_or(0.0) / tb;
        let mid = (p + q) / 2.0;
        d += 0.5 * (half(p, mid) + half(q, mid));
    }
    d.clamp(0.0, 1.0)
}

/// JSD (bits, in [0, 1]) between the k-gram distributions of walks and
/// reference trajectories.
pub fn kgram_divergence(walks: &[Vec<PortId>], reference: &TrajectorySet, k: usize) -> f64 {
    let a = kgram_counts(walks.iter().map(|w| w.iter().collect()), k);
    let b = kgram_counts(reference.iter().map(|t| t.ports().collect()), k);
    jsd(&a, &b)
}

/// JSD between the k-gram distributions of two walk corpora.
pub fn kgram_divergence_walks(a: &[Vec<PortId>], b: &[Vec<PortId>], k: usize) -> f64 {
    let ca = kgram_counts(a.iter().map(|w| w.iter().collect()), k);
    let cb = kgram_counts(b.iter().map(|w| w.iter().collect()), k);
    jsd(&ca, &cb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub teleport: f64,
    pub damping: f64,
    pub resolution: f64,
    pub seed: u64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig { teleport: 0.01, damping: 0.85, resolution: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub config: AnalyzeConfig,
    pub node_metrics: Vec<NodeMetrics>,
    pub fon_pagerank: BTreeMap<PortId, f64>,
    pub hon_pagerank: PageRankScores,
    pub hon_port_pagerank: BTreeMap<PortId, f64>,
    pub pagerank_delta: BTreeMap<PortId, f64>,
    pub communities: CommunityAssignment,
    pub entropy_rate_fon: f64,
    pub entropy_rate_hon: f64,
    pub stationary_fon: PowerIteration,
    pub stationary_hon: PowerIteration,
}

pub fn analyze(fon: &FirstOrderNetwork, hon: &HigherOrderNetwork, config: AnalyzeConfig) -> AnalyticsReport {
    let pr = PageRankConfig { damping: config.damping, ..PageRankConfig::default() };
    let fon_pr = pagerank(fon, pr);
    let fon_pagerank = aggregate_pagerank_by_port(&fon_pr.scores, fon);
    let hon_pagerank = pagerank(hon, pr);
    let hon_port_pagerank = aggregate_pagerank_by_port(&hon_pagerank.scores, hon);
    let pagerank_delta = pagerank_delta(&fon_pagerank, &hon_port_pagerank);
    let stationary_fon = stationary_distribution(fon, config.teleport);
    let stationary_hon = stationary_distribution(hon, config.teleport);
    AnalyticsReport {
        config,
        node_metrics: node_metrics(hon, fon),
        entropy_rate_fon: entropy_rate_with(fon, &stationary_fon.scores),
        entropy_rate_hon: entropy_rate_with(hon, &stationary_hon.scores),
        communities: detect_communities(hon, config.resolution, config.seed),
        fon_pagerank,
        hon_pagerank,
        hon_port_pagerank,
        pagerank_delta,
        stationary_fon,
        stationary_hon,
    }
}
