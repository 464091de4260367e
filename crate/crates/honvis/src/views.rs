//! Label-resolved views of library results, shared by the CLI and the API.

use std::collections::{BTreeMap, BTreeSet};

use honvis_core::aggregate::{
    aggregate_network, circular_layout, AggregateError, AggregatedNetwork, GroupingConfig, SectorLayout,
};
use honvis_core::layout::{bundle_edges, BundleParams, BundledChords};
use honvis_core::subgraph::{StepReport, SubgraphSession};
use honvis_core::{HigherOrderNetwork, Network, PortId, PortTable};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStateView {
    pub node: usize,
    pub label: String,
    pub port: PortId,
    pub mass: f64,
    pub reach: f64,
    pub community: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributorView {
    pub node: usize,
    pub label: String,
    pub total: u64,
    pub by_community: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub step: usize,
    pub newly_reached: Vec<String>,
    pub nodes: Vec<NodeStateView>,
    pub top_contributors: Vec<ContributorView>,
    pub reached_ports: BTreeSet<PortId>,
    pub total_mass: f64,
    pub exhausted: bool,
}

pub fn step_view(report: &StepReport, hon: &HigherOrderNetwork, communities: &[usize]) -> StepView {
    StepView {
        step: report.step,
        newly_reached: report.newly_reached.iter().map(|&n| hon.node_label(n)).collect(),
        nodes: report
            .nodes
            .iter()
            .map(|s| NodeStateView {
                node: s.node,
                label: hon.node_label(s.node),
                port: hon.node_port(s.node).clone(),
                mass: s.mass,
                reach: s.reach,
                community: communities.get(s.node).copied().unwrap_or(0),
            })
            .collect(),
        top_contributors: report
            .top_contributors
            .rows
            .iter()
            .map(|r| ContributorView {
                node: r.contributor,
                label: hon.node_label(r.contributor),
                total: r.total,
                by_community: r.by_community.clone(),
            })
            .collect(),
        reached_ports: report.reached_ports.clone(),
        total_mass: report.total_mass,
        exhausted: report.exhausted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachedView {
    pub node: usize,
    pub label: String,
    pub mass: f64,
    pub reach: f64,
    pub first_reach_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at: u64,
    pub direction: String,
    pub step: usize,
    pub seeds: Vec<String>,
    pub reached: Vec<ReachedView>,
    pub total_mass: f64,
    pub exhausted: bool,
    pub warnings: Vec<String>,
}

pub fn session_view(id: &str, created_at: u64, s: &SubgraphSession, hon: &HigherOrderNetwork) -> SessionView {
    let mut ids: BTreeSet<usize> = s.reached().collect();
    ids.extend(s.mass.keys().copied());
    SessionView {
        id: id.to_string(),
        created_at,
        direction: s.direction.to_string(),
        step: s.step_count,
        seeds: s.seeds.iter().map(|&n| hon.node_label(n)).collect(),
        reached: ids
            .into_iter()
            .map(|n| ReachedView {
                node: n,
                label: hon.node_label(n),
                mass: s.mass.get(&n).copied().unwrap_or(0.0),
                reach: s.reach.get(&n).copied().unwrap_or(0.0),
                first_reach_step: s.first_reach_step.get(&n).copied(),
            })
            .collect(),
        total_mass: s.total_mass(),
        exhausted: s.exhausted,
        warnings: s.warnings.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationView {
    pub network: AggregatedNetwork,
    pub layout: SectorLayout,
    pub chords: BundledChords,
}

pub fn aggregation_view(
    hon: &HigherOrderNetwork,
    ports: &PortTable,
    grouping: &GroupingConfig,
    filter: Option<&BTreeSet<usize>>,
    bundle: bool,
) -> Result<AggregationView, AggregateError> {
    let network = aggregate_network(hon, ports, grouping, filter)?;
    let layout = circular_layout(&network, grouping.weight_scheme);
    let endpoints: Vec<[[f64; 2]; 2]> = layout
        .chords
        .iter()
        .map(|c| {
            let [a, b] = c.endpoints();
            [[a.0, a.1], [b.0, b.1]]
        })
        .collect();
    let params = BundleParams { enabled: bundle, ..BundleParams::default() };
    let chords = bundle_edges(&endpoints, &params);
    Ok(AggregationView { network, layout, chords })
}
