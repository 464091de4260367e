//! Deterministic synthetic corpora used by tests, the acceptance suite and
//! demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Hop, PortId, Trajectory, TrajectorySet};
use crate::network::SimpleNetwork;

/// Five ships A->M->X and five ships B->M->Y.
pub fn fig2_trajectories() -> TrajectorySet {
    let mut out = Vec::new();
    for i in 0..10 {
        let ports: &[&str] = if i < 5 { &["A", "M", "X"] } else { &["B", "M", "Y"] };
        let mut t = Trajectory::from_ports(format!("S{:02}", i + 1), ports);
        for (h, hop) in t.hops.iter_mut().enumerate() {
            hop.ship_type = if i % 2 == 0 { "UCC" } else { "MPR" }.to_string();
            hop.month = (i as u8 % 6) + 1 + if h == 2 { 1 } else { 0 };
        }
        out.push(t);
    }
    TrajectorySet::new(out)
}

pub const FIG2_PORTS_CSV: &str = "\
port_id,name,lat,lon,country,eco_realm,temperature,salinity,freshwater
A,Port A,51.9,4.1,NL,Temperate Northern Atlantic,11.5,33.0,false
B,Port B,1.3,103.8,SG,Central Indo-Pacific,28.5,32.5,false
M,Port M,25.0,55.1,AE,Western Indo-Pacific,27.0,40.0,false
X,Port X,40.7,-74.0,US,Temperate Northern Atlantic,13.0,31.5,false
Y,Port Y,31.2,121.5,CN,Temperate Northern Pacific,17.5,30.0,false
";

/// Voyage CSV whose trajectories equal [`fig2_trajectories`] port-wise.
pub fn fig2_voyages_csv() -> String {
    let mut s = String::from("ship_id,ship_type,src_port,dst_port,depart_time,arrive_time\n");
    for i in 0..10u32 {
        let (first, second) = if i < 5 { (("A", "M"), ("M", "X")) } else { (("B", "M"), ("M", "Y")) };
        let ship_type = if i % 2 == 0 { "UCC" } else { "MPR" };
        let month = i % 6 + 1;
        s.push_str(&format!(
            "S{:02},{ship_type},{},{},2020-{month:02}-01T00:00:00Z,2020-{month:02}-10T00:00:00Z\n",
            i + 1,
            first.0,
            first.1
        ));
        s.push_str(&format!(
            "S{:02},{ship_type},{},{},2020-{:02}-12T00:00:00Z,2020-{:02}-20T00:00:00Z\n",
            i + 1,
            second.0,
            second.1,
            month + 1,
            month + 1
        ));
    }
    s
}

pub const SINGAPORE_PORTS_CSV: &str = "\
port_id,name,lat,lon,country,eco_realm,temperature,salinity,freshwater
Singapore,Singapore,1.26,103.84,SG,Central Indo-Pacific,29.0,32.0,false
Port Klang,Port Klang,3.0,101.39,MY,Central Indo-Pacific,29.5,31.0,false
Shanghai,Shanghai,31.23,121.47,CN,Temperate Northern Pacific,17.0,28.0,false
";

/// Three-port corpus whose default build retains `Singapore|Port Klang,Shanghai`.
pub fn singapore_trajectories() -> TrajectorySet {
    let mut out = Vec::new();
    let mut push = |n: usize, ports: &[&str]| {
        for _ in 0..n {
            let id = format!("V{:03}", out.len());
            out.push(Trajectory::from_ports(id, ports));
        }
    };
    push(10, &["Shanghai", "Port Klang", "Singapore", "Shanghai"]);
    push(10, &["Singapore", "Port Klang", "Singapore", "Port Klang"]);
    push(40, &["Shanghai", "Singapore", "Port Klang"]);
    TrajectorySet::new(out)
}

fn port_names(n: usize) -> Vec<PortId> {
    (0..n).map(|i| PortId::new(format!("P{i}"))).collect()
}

fn sequence(ship: usize, ports: Vec<PortId>, rng: &mut impl Rng) -> Trajectory {
    let ship_type = ["UCC", "MPR", "BBU", "TAN"][rng.gen_range(0..4)];
    Trajectory {
        ship_id: format!("ship{ship:05}"),
        hops: ports
            .into_iter()
            .map(|port| Hop { port, ship_type: ship_type.to_string(), month: rng.gen_range(1..=12) })
            .collect(),
    }
}

fn pick_other(rng: &mut impl Rng, n: usize, not: usize) -> usize {
    let k = rng.gen_range(0..n - 1);
    if k >= not {
        k + 1
    } else {
        k
    }
}

/// Second-order Markov corpus over 8 ports.
///
/// Given (previous, current), the next port is a fixed preferred port with
/// probability 0.85 and otherwise uniform over the remaining ports.
pub fn order2_markov_corpus(seed: u64, sequences: usize, length: usize) -> TrajectorySet {
    const PORTS: usize = 8;
    const STICK: f64 = 0.85;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = port_names(PORTS);
    let mut preferred = vec![vec![0usize; PORTS]; PORTS];
    for (prev, row) in preferred.iter_mut().enumerate() {
        for (cur, slot) in row.iter_mut().enumerate() {
            if prev != cur {
                *slot = pick_other(&mut rng, PORTS, cur);
            }
        }
    }
    let trajectories = (0..sequences)
        .map(|s| {
            let mut idx = vec![rng.gen_range(0..PORTS)];
            while idx.len() < length {
                let cur = *idx.last().unwrap();
                let next = if idx.len() == 1 {
                    pick_other(&mut rng, PORTS, cur)
                } else {
                    let want = preferred[idx[idx.len() - 2]][cur];
                    if rng.gen::<f64>() < STICK {
                        want
                    } else {
                        // uniform over ports other than cur and want
                        let others: Vec<usize> = (0..PORTS).filter(|&p| p != cur && p != want).collect();
                        *others.choose(&mut rng).unwrap()
                    }
                };
                idx.push(next);
            }
            let ports = idx.into_iter().map(|i| names[i].clone()).collect();
            sequence(s, ports, &mut rng)
        })
        .collect();
    TrajectorySet::new(trajectories)
}

/// First-order Markov corpus over 8 ports with random transition weights.
pub fn order1_markov_corpus(seed: u64, sequences: usize, length: usize) -> TrajectorySet {
    const PORTS: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = port_names(PORTS);
    let weights: Vec<Vec<f64>> = (0..PORTS)
        .map(|cur| (0..PORTS).map(|p| if p == cur { 0.0 } else { rng.gen_range(0.2..1.0) }).collect())
        .collect();
    let trajectories = (0..sequences)
        .map(|s| {
            let mut idx = vec![rng.gen_range(0..PORTS)];
            while idx.len() < length {
                let row = &weights[*idx.last().unwrap()];
                let total: f64 = row.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut next = 0;
                for (p, &w) in row.iter().enumerate() {
                    if w > 0.0 {
                        next = p;
                        if u < w {
                            break;
                        }
                        u -= w;
                    }
                }
                idx.push(next);
            }
            let ports = idx.into_iter().map(|i| names[i].clone()).collect();
            sequence(s, ports, &mut rng)
        })
        .collect();
    TrajectorySet::new(trajectories)
}

/// Erdos-Renyi style directed graph without self-loops, integer weights in
/// `1..=max_weight`.
pub fn random_network(seed: u64, nodes: usize, edge_prob: f64, max_weight: u64) -> SimpleNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for s in 0..nodes {
        for d in 0..nodes {
            if s != d && rng.gen::<f64>() < edge_prob {
                edges.push((s, d, rng.gen_range(1..=max_weight) as f64));
            }
        }
    }
    SimpleNetwork::from_edges(nodes, &edges)
}

/// Random trajectories over `ports` ports, used by property tests.
pub fn random_trajectories(seed: u64, ports: usize, sequences: usize, max_len: usize) -> TrajectorySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = port_names(ports);
    let trajectories = (0..sequences)
        .map(|s| {
            let len = rng.gen_range(2..=max_len.max(2));
            let mut idx = vec![rng.gen_range(0..ports)];
            while idx.len() < len {
                idx.push(pick_other(&mut rng, ports, *idx.last().unwrap()));
            }
            let ports = idx.into_iter().map(|i| names[i].clone()).collect();
            sequence(s, ports, &mut rng)
        })
        .collect();
    TrajectorySet::new(trajectories)
}
