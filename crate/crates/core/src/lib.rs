//! Higher-order network (HoN) construction and analytics for trajectory data.
//!
//! The pipeline runs `ingest` (CSV to trajectories), `honbuild` (first-order
//! network, dependency extraction, rewiring), then the analyses in
//! `analytics`, `subgraph`, `aggregate` and `layout`.

pub mod aggregate;
pub mod analytics;
pub mod distribution;
pub mod fixtures;
pub mod honbuild;
pub mod ingest;
pub mod layout;
pub mod network;
pub mod subgraph;

pub use distribution::{kl_divergence, Distribution};
pub use honbuild::{
    build_fon, build_hon, BuildParams, Context, FirstOrderNetwork, HigherOrderNetwork, ThresholdSpec,
};
pub use ingest::{PortId, PortTable, Trajectory, TrajectorySet};
pub use network::{Adjacency, Network, SimpleNetwork};
