//! Read-only graph view shared by the first-order and higher-order networks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::PortId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub node: usize,
    pub weight: f64,
}

/// Out- and in-adjacency lists, each sorted by neighbour id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency {
    out: Vec<Vec<Link>>,
    inc: Vec<Vec<Link>>,
    out_weight: Vec<f64>,
    in_weight: Vec<f64>,
}

impl Adjacency {
    /// Parallel edges are merged by summing their weights.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut out: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); node_count];
        for (s, d, w) in edges {
            assert!(s < node_count && d < node_count, "edge endpoint out of range");
            *out[s].entry(d).or_insert(0.0) += w;
        }
        let mut inc: Vec<Vec<Link>> = vec![Vec::new(); node_count];
        let out: Vec<Vec<Link>> = out
            .into_iter()
            .enumerate()
            .map(|(s, m)| {
                m.into_iter()
                    .map(|(d, w)| {
                        inc[d].push(Link { node: s, weight: w });
                        Link { node: d, weight: w }
                    })
                    .collect()
            })
            .collect();
        let out_weight = out.iter().map(|l| l.iter().map(|x| x.weight).sum()).collect();
        let in_weight = inc.iter().map(|l| l.iter().map(|x| x.weight).sum()).collect();
        Adjacency { out, inc, out_weight, in_weight }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn out_links(&self, n: usize) -> &[Link] {
        &self.out[n]
    }

    pub fn in_links(&self, n: usize) -> &[Link] {
        &self.inc[n]
    }

    pub fn out_weight(&self, n: usize) -> f64 {
        self.out_weight[n]
    }

    pub fn in_weight(&self, n: usize) -> f64 {
        self.in_weight[n]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, l)| l.iter().map(move |x| (s, x.node, x.weight)))
    }

    pub fn reversed(&self) -> Adjacency {
        Adjacency::new(self.node_count(), self.edges().map(|(s, d, w)| (d, s, w)))
    }
}

/// A weighted directed graph whose nodes each stand for a physical port.
pub trait Network: Sync {
    fn adjacency(&self) -> &Adjacency;
    fn node_port(&self, node: usize) -> &PortId;
    fn node_label(&self, node: usize) -> String;

    fn node_count(&self) -> usize {
        self.adjacency().node_count()
    }
}

/// Ship-type and month counts carried by an edge.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeHistograms {
    pub ship_type: BTreeMap<String, u64>,
    pub month: BTreeMap<u8, u64>,
}

impl EdgeHistograms {
    pub fn record(&mut self, ship_type: &str, month: u8) {
        *self.ship_type.entry(ship_type.to_string()).or_insert(0) += 1;
        *self.month.entry(month).or_insert(0) += 1;
    }

    pub fn absorb(&mut self, other: &EdgeHistograms) {
        for (k, v) in &other.ship_type {
            *self.ship_type.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.month {
            *self.month.entry(*k).or_insert(0) += v;
        }
    }
}

/// Plain labelled network, used for synthetic graphs and reversed views.
#[derive(Debug, Clone)]
pub struct SimpleNetwork {
    labels: Vec<String>,
    ports: Vec<PortId>,
    adjacency: Adjacency,
}

impl SimpleNetwork {
    /// Every node is its own port, labelled by its index.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Self {
        let labels: Vec<String> = (0..node_count).map(|i| i.to_string()).collect();
        let ports = labels.iter().map(PortId::new).collect();
        SimpleNetwork { labels, ports, adjacency: Adjacency::new(node_count, edges.iter().copied()) }
    }

    pub fn with_ports(labels: Vec<String>, ports: Vec<PortId>, adjacency: Adjacency) -> Self {
        assert_eq!(labels.len(), adjacency.node_count());
        assert_eq!(ports.len(), adjacency.node_count());
        SimpleNetwork { labels, ports, adjacency }
    }

    /// Same nodes and ports with every edge reversed.
    pub fn reversed_of<N: Network + ?Sized>(net: &N) -> Self {
        let n = net.node_count();
        SimpleNetwork {
            labels: (0..n).map(|i| net.node_label(i)).collect(),
            ports: (0..n).map(|i| net.node_port(i).clone()).collect(),
            adjacency: net.adjacency().reversed(),
        }
    }

    /// Same topology with every weight multiplied by `factor`.
    pub fn scaled_of<N: Network + ?Sized>(net: &N, factor: f64) -> Self {
        let n = net.node_count();
        SimpleNetwork {
            labels: (0..n).map(|i| net.node_label(i)).collect(),
            ports: (0..n).map(|i| net.node_port(i).clone()).collect(),
            adjacency: Adjacency::new(n, net.adjacency().edges().map(|(s, d, w)| (s, d, w * factor))),
        }
    }
}

impl Network for SimpleNetwork {
    fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    fn node_port(&self, node: usize) -> &PortId {
        &self.ports[node]
    }

    fn node_label(&self, node: usize) -> String {
        self.labels[node].clone()
    }
}
