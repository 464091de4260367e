//! Stepwise forward/backward propagation of visit mass from seed nodes, with
//! first-reach contribution attribution per community.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PortId;
use crate::network::Network;

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const MAX_REACHED_NODES: usize = 10_000;
pub const TOP_CONTRIBUTORS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            _ => Err(format!("direction must be 'forward' or 'backward', got '{s}'")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SubgraphError {
    #[error("at least one seed node is required")]
    NoSeeds,
    #[error("unknown seed node {0}")]
    UnknownSeed(usize),
    #[error("subgraph would reach {reached} nodes (limit {limit}); narrow your seeds")]
    TooLarge { reached: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphSession {
    pub direction: Direction,
    pub step_count: usize,
    pub seeds: Vec<usize>,
    /// Visit mass at the current step.
    pub mass: BTreeMap<usize, f64>,
    /// Accumulated reach, clamped to [0, 1].
    pub reach: BTreeMap<usize, f64>,
    pub first_reach_step: BTreeMap<usize, usize>,
    /// (contributor, community) -> number of nodes first reached through it.
    pub contributions: BTreeMap<(usize, usize), u64>,
    pub epsilon: f64,
    pub exhausted: bool,
    pub warnings: Vec<String>,
}

impl SubgraphSession {
    pub fn is_reached(&self, node: usize) -> bool {
        self.reach.get(&node).is_some_and(|&r| r > self.epsilon)
    }

    pub fn reached(&self) -> impl Iterator<Item = usize> + '_ {
        self.reach.iter().filter(|(_, &r)| r > self.epsilon).map(|(&n, _)| n)
    }

    pub fn reached_count(&self) -> usize {
        self.reached().count()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }
}

fn relevant_weight<N: Network + ?Sized>(net: &N, node: usize, direction: Direction) -> f64 {
    match direction {
        Direction::Forward => net.adjacency().out_weight(node),
        Direction::Backward => net.adjacency().in_weight(node),
    }
}

/// Seeds start with mass proportional to their out-weight (forward) or
/// in-weight (backward).
pub fn init_session<N: Network + ?Sized>(
    net: &N,
    seeds: &[usize],
    direction: Direction,
    epsilon: f64,
) -> Result<SubgraphSession, SubgraphError> {
    if seeds.is_empty() {
        return Err(SubgraphError::NoSeeds);
    }
    let seeds: Vec<usize> = seeds.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if let Some(&bad) = seeds.iter().find(|&&s| s >= net.node_count()) {
        return Err(SubgraphError::UnknownSeed(bad));
    }
    let total: f64 = seeds.iter().map(|&s| relevant_weight(net, s, direction)).sum();
    let mut session = SubgraphSession {
        direction,
        step_count: 0,
        seeds: seeds.clone(),
        mass: BTreeMap::new(),
        reach: BTreeMap::new(),
        first_reach_step: BTreeMap::new(),
        contributions: BTreeMap::new(),
        epsilon,
        exhausted: false,
        warnings: Vec::new(),
    };
    for &s in &seeds {
        let w = relevant_weight(net, s, direction);
        let m = if total > 0.0 { w / total } else { 0.0 };
        if w <= 0.0 {
            session.warnings.push(format!(
                "seed {} has no {} edges; it starts with zero mass",
                net.node_label(s),
                if direction == Direction::Forward { "outgoing" } else { "incoming" }
            ));
        }
        if m > 0.0 {
            session.mass.insert(s, m);
        }
        session.reach.insert(s, m.min(1.0));
        if m > epsilon {
            session.first_reach_step.insert(s, 0);
        }
    }
    session.exhausted = session.mass.is_empty();
    Ok(session)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub node: usize,
    pub mass: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub contributor: usize,
    pub by_community: BTreeMap<usize, u64>,
    pub total: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContributionTable {
    pub rows: Vec<ContributionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub newly_reached: Vec<usize>,
    /// Reached nodes and nodes carrying mass, by node id.
    pub nodes: Vec<NodeState>,
    pub top_contributors: ContributionTable,
    pub reached_ports: BTreeSet<PortId>,
    pub total_mass: f64,
    pub exhausted: bool,
}

/// Pushes the current mass one step and updates reach, first-reach steps and
/// contribution credit. On error the session is left untouched.
pub fn trace_step<N: Network + ?Sized>(
    session: &mut SubgraphSession,
    net: &N,
    communities: &[usize],
) -> Result<StepReport, SubgraphError> {
    let adj = net.adjacency();
    let mut next: BTreeMap<usize, f64> = BTreeMap::new();
    // best (predecessor, flow) per target; predecessors visited in ascending id
    let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (&j, &m) in &session.mass {
        let (links, norm) = match session.direction {
            Direction::Forward => (adj.out_links(j), adj.out_weight(j)),
            Direction::Backward => (adj.in_links(j), adj.in_weight(j)),
        };
        if norm <= 0.0 {
            continue;
        }
        for l in links {
            let flow = m * l.weight / norm;
            *next.entry(l.node).or_insert(0.0) += flow;
            let slot = best.entry(l.node).or_insert((j, flow));
            if flow > slot.1 {
                *slot = (j, flow);
            }
        }
    }

    let mut reach = session.reach.clone();
    let mut newly = Vec::new();
    for (&n, &m) in &next {
        let r = reach.entry(n).or_insert(0.0);
        let was = *r > session.epsilon;
        *r = (*r + m).min(1.0);
        if !was && *r > session.epsilon {
            newly.push(n);
        }
    }
    let reached = reach.values().filter(|&&r| r > session.epsilon).count();
    if reached > MAX_REACHED_NODES {
        return Err(SubgraphError::TooLarge { reached, limit: MAX_REACHED_NODES });
    }

    session.step_count += 1;
    let step = session.step_count;
    for &n in &newly {
        session.first_reach_step.entry(n).or_insert(step);
        let (pred, _) = best[&n];
        let community = communities.get(n).copied().unwrap_or(0);
        *session.contributions.entry((pred, community)).or_insert(0) += 1;
    }
    next.retain(|_, m| *m > 0.0);
    session.reach = reach;
    session.mass = next;
    session.exhausted = session.mass.is_empty();

    let mut ids: BTreeSet<usize> = session.reached().collect();
    ids.extend(session.mass.keys().copied());
    let nodes = ids
        .into_iter()
        .map(|n| NodeState {
            node: n,
            mass: session.mass.get(&n).copied().unwrap_or(0.0),
            reach: session.reach.get(&n).copied().unwrap_or(0.0),
        })
        .collect();
    Ok(StepReport {
        step,
        newly_reached: newly,
        nodes,
        top_contributors: top_contributors(session, TOP_CONTRIBUTORS),
        reached_ports: reached_ports(session, net),
        total_mass: session.total_mass(),
        exhausted: session.exhausted,
    })
}

/// Contributors ranked by total credit (descending, ties by node id).
pub fn top_contributors(session: &SubgraphSession, n: usize) -> ContributionTable {
    let mut rows: BTreeMap<usize, ContributionRow> = BTreeMap::new();
    for (&(contributor, community), &count) in &session.contributions {
        let row = rows.entry(contributor).or_insert_with(|| ContributionRow {
            contributor,
            by_community: BTreeMap::new(),
            total: 0,
        });
        *row.by_community.entry(community).or_insert(0) += count;
        row.total += count;
    }
    let mut rows: Vec<ContributionRow> = rows.into_values().collect();
    rows.sort_by(|a, b| b.total.cmp(&a.total).then(a.contributor.cmp(&b.contributor)));
    rows.truncate(n);
    ContributionTable { rows }
}

pub fn reached_ports<N: Network + ?Sized>(session: &SubgraphSession, net: &N) -> BTreeSet<PortId> {
    session.reached().map(|n| net.node_port(n).clone()).collect()
}
