//! Heterogeneous graph view of a topology and two-hop typed neighbor sampling.
//!
//! Nodes are the vehicles (typed SPV / communication target / sensing
//! target). Edges are typed by the link they stand for: SPV–communication
//! target, SPV–sensing target, and SPV–SPV interference. Each edge carries
//! the inverse path loss (L^A·L^F)⁻¹ of its endpoints.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::error::{Error, Result};
use crate::scenario::{los_blocker_count, Role, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Spv,
    CommTarget,
    SenseTarget,
}

impl From<Role> for NodeType {
    fn from(r: Role) -> Self {
        match r {
            Role::ServiceProvider => NodeType::Spv,
            Role::CommTarget => NodeType::CommTarget,
            Role::SenseTarget => NodeType::SenseTarget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    /// SPV ↔ communication target.
    Comm,
    /// SPV ↔ sensing target.
    Sense,
    /// SPV ↔ SPV.
    Interference,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::Comm, EdgeType::Sense, EdgeType::Interference];

    pub fn index(self) -> usize {
        self as usize
    }

    fn between(a: NodeType, b: NodeType) -> Option<EdgeType> {
        use NodeType::*;
        match (a, b) {
            (Spv, CommTarget) | (CommTarget, Spv) => Some(EdgeType::Comm),
            (Spv, SenseTarget) | (SenseTarget, Spv) => Some(EdgeType::Sense),
            (Spv, Spv) => Some(EdgeType::Interference),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub vehicle_id: u32,
    pub node_type: NodeType,
    /// Blocking SPV count toward each target, in target order.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub edge_type: EdgeType,
    pub weight: f64,
}

/// One entry of a node's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub node: usize,
    pub edge_type: EdgeType,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Perpendicular reach of a blocking SPV around a line of sight, m.
    pub blocker_radius: f64,
    /// Drop edges longer than this, m. `None` keeps every edge.
    pub edge_range_m: Option<f64>,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            blocker_radius: 1.0,
            edge_range_m: None,
        }
    }
}

/// Node indices coincide with the topology's vehicle indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct HeteroGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    feature_len: usize,
    adjacency: Vec<Vec<Neighbor>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    feature_len: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl From<HeteroGraph> for RawGraph {
    fn from(g: HeteroGraph) -> Self {
        RawGraph {
            feature_len: g.feature_len,
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl TryFrom<RawGraph> for HeteroGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        HeteroGraph::from_parts(raw.nodes, raw.edges, raw.feature_len)
    }
}

impl HeteroGraph {
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>, feature_len: usize) -> Result<Self> {
        if let Some(n) = nodes.iter().find(|n| n.features.len() != feature_len) {
            return Err(Error::Shape(format!(
                "node {} has {} features, expected {feature_len}",
                n.vehicle_id,
                n.features.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let (Some(na), Some(nb)) = (nodes.get(e.a), nodes.get(e.b)) else {
                return Err(Error::Shape(format!("edge {}–{} references a missing node", e.a, e.b)));
            };
            if EdgeType::between(na.node_type, nb.node_type) != Some(e.edge_type) || e.a == e.b {
                return Err(Error::Shape(format!(
                    "edge {}–{} of type {:?} joins {:?} and {:?}",
                    e.a, e.b, e.edge_type, na.node_type, nb.node_type
                )));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Shape(format!("edge {}–{} has weight {}", e.a, e.b, e.weight)));
            }
            adjacency[e.a].push(Neighbor {
                node: e.b,
                edge_type: e.edge_type,
                weight: e.weight,
            });
            adjacency[e.b].push(Neighbor {
                node: e.a,
                edge_type: e.edge_type,
                weight: e.weight,
            });
        }
        Ok(Self {
            nodes,
            edges,
            feature_len,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Feature length L (number of target vehicles).
    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.adjacency[node]
    }

    pub fn features(&self, node: usize) -> &[f64] {
        &self.nodes[node].features
    }

    pub fn edge_count(&self, edge_type: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.edge_type == edge_type).count()
    }
}

/// Builds the heterogeneous graph of `topology`. Edges are complete per type
/// unless `options.edge_range_m` prunes long ones.
pub fn build_graph(topology: &Topology, channel_params: &ChannelParams, options: &GraphOptions) -> Result<HeteroGraph> {
    channel_params.validate()?;
    let vs = topology.vehicles();
    let feature_len = topology.target_count();
    let nodes: Vec<Node> = vs
        .iter()
        .enumerate()
        .map(|(v, vehicle)| Node {
            vehicle_id: vehicle.id,
            node_type: vehicle.role.into(),
            features: topology
                .targets()
                .iter()
                .map(|&t| {
                    if t == v {
                        0.0
                    } else {
                        los_blocker_count(topology, v, t, options.blocker_radius) as f64
                    }
                })
                .collect(),
        })
        .collect();

    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize, edge_type: EdgeType| -> Result<()> {
        let d = topology.distance(a, b);
        if options.edge_range_m.is_some_and(|r| d > r) {
            return Ok(());
        }
        let loss = channel::absorption_loss(channel_params, d)? * channel::spreading_loss(channel_params, d)?;
        edges.push(Edge {
            a,
            b,
            edge_type,
            weight: 1.0 / loss,
        });
        Ok(())
    };
    let spvs = topology.spvs();
    for &s in spvs {
        for &c in topology.comm_targets() {
            push(s, c, EdgeType::Comm)?;
        }
    }
    for &s in spvs {
        for &n in topology.sense_targets() {
            push(s, n, EdgeType::Sense)?;
        }
    }
    for (i, &a) in spvs.iter().enumerate() {
        for &b in &spvs[i + 1..] {
            push(a, b, EdgeType::Interference)?;
        }
    }
    HeteroGraph::from_parts(nodes, edges, feature_len)
}

/// Sampled two-hop neighborhood of one source node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledNeighborhood {
    pub source: usize,
    pub first_hop: Vec<Neighbor>,
    /// `second_hop[i]` holds the sampled neighbors of `first_hop[i]`.
    pub second_hop: Vec<Vec<Neighbor>>,
}

impl SampledNeighborhood {
    pub fn first_hop_of(&self, edge_type: EdgeType) -> impl Iterator<Item = &Neighbor> {
        self.first_hop.iter().filter(move |n| n.edge_type == edge_type)
    }

    pub fn second_hop_total(&self) -> usize {
        self.second_hop.iter().map(Vec::len).sum()
    }
}

/// Uniform two-hop sampling without replacement.
///
/// The first hop draws `min(s1, degree)` neighbors of `source`. The second
/// hop budget `s2` is a total: it is dealt round-robin over the first-hop
/// nodes (skipping nodes with no unused candidates), then each node draws its
/// share from its own neighbors, excluding `source`.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    graph: &HeteroGraph,
    source: usize,
    s1: usize,
    s2: usize,
    rng: &mut R,
) -> SampledNeighborhood {
    let first_hop = draw(graph.neighbors(source), s1, rng);

    let candidates: Vec<Vec<Neighbor>> = first_hop
        .iter()
        .map(|n| {
            graph
                .neighbors(n.node)
                .iter()
                .copied()
                .filter(|m| m.node != source)
                .collect()
        })
        .collect();
    let mut quota = vec![0usize; first_hop.len()];
    let mut budget = s2;
    while budget > 0 {
        let mut progressed = false;
        for (q, c) in quota.iter_mut().zip(&candidates) {
            if budget == 0 {
                break;
            }
            if *q < c.len() {
                *q += 1;
                budget -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let second_hop = candidates.iter().zip(&quota).map(|(c, &q)| draw(c, q, rng)).collect();

    SampledNeighborhood {
        source,
        first_hop,
        second_hop,
    }
}

fn draw<R: Rng + ?Sized>(pool: &[Neighbor], amount: usize, rng: &mut R) -> Vec<Neighbor> {
    let amount = amount.min(pool.len());
    let mut picked = index::sample(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::channel::AntennaPattern;
    use crate::scenario::{generate_topology, GeneratorSpec, Point, Region, Vehicle};

    fn default_graph(seed: u64) -> (Topology, HeteroGraph) {
        let t = generate_topology(seed, &GeneratorSpec::default()).unwrap();
        let g = build_graph(&t, &ChannelParams::default(), &GraphOptions::default()).unwrap();
        (t, g)
    }

    fn vehicle(id: u32, role: Role, x: f64, y: f64) -> Vehicle {
        Vehicle {
            id,
            role,
            position: Point::new(x, y),
            heading: 0.0,
            tx_power: if role == Role::ServiceProvider { 10.0 } else { 0.0 },
            antenna: AntennaPattern::default(),
        }
    }

    #[test]
    fn edge_and_feature_counts() {
        let (_, g) = default_graph(1);
        assert_eq!(g.edge_count(EdgeType::Comm), 10);
        assert_eq!(g.edge_count(EdgeType::Sense), 10);
        assert_eq!(g.edge_count(EdgeType::Interference), 10);
        assert!(g.nodes().iter().all(|n| n.features.len() == 4));
        // SPV degree: 4 other SPVs + 4 targets; target degree: 5 SPVs.
        assert_eq!(g.neighbors(0).len(), 8);
        assert_eq!(g.neighbors(5).len(), 5);
    }

    #[test]
    fn features_count_blockers() {
        let t = Topology::new(
            vec![
                vehicle(0, Role::ServiceProvider, 10.0, 50.0),
                vehicle(1, Role::ServiceProvider, 30.0, 50.0),
                vehicle(2, Role::CommTarget, 50.0, 50.0),
                vehicle(3, Role::SenseTarget, 10.0, 90.0),
            ],
            Region::default(),
        )
        .unwrap();
        let g = build_graph(&t, &ChannelParams::default(), &GraphOptions::default()).unwrap();
        assert_eq!(g.features(0), &[1.0, 0.0]);
        assert_eq!(g.features(1), &[0.0, 0.0]);
        // A target's own column is zero; the isolated sensing target sees no blockers.
        assert_eq!(g.features(2), &[0.0, 0.0]);
        assert_eq!(g.features(3), &[0.0, 0.0]);
    }

    #[test]
    fn weights_fall_with_distance() {
        let t = Topology::new(
            vec![
                vehicle(0, Role::ServiceProvider, 10.0, 50.0),
                vehicle(1, Role::CommTarget, 20.0, 50.0),
                vehicle(2, Role::CommTarget, 40.0, 50.0),
            ],
            Region::default(),
        )
        .unwrap();
        let g = build_graph(&t, &ChannelParams::default(), &GraphOptions::default()).unwrap();
        let w = |b| g.neighbors(0).iter().find(|n| n.node == b).unwrap().weight;
        assert!(w(1) > w(2));
        let p = ChannelParams::default();
        let expected = 1.0 / (channel::absorption_loss(&p, 10.0).unwrap() * channel::spreading_loss(&p, 10.0).unwrap());
        assert_eq!(w(1), expected);
    }

    #[test]
    fn edge_range_prunes() {
        let t = generate_topology(2, &GeneratorSpec::default()).unwrap();
        let opts = GraphOptions {
            edge_range_m: Some(40.0),
            ..GraphOptions::default()
        };
        let g = build_graph(&t, &ChannelParams::default(), &opts).unwrap();
        assert!(g.edges().iter().all(|e| t.distance(e.a, e.b) <= 40.0));
        let full = build_graph(&t, &ChannelParams::default(), &GraphOptions::default()).unwrap();
        assert!(g.edges().len() <= full.edges().len());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let (_, g) = default_graph(3);
        let json = serde_json::to_string(&g).unwrap();
        let back: HeteroGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        let mut raw: serde_json::Value = serde_json::from_str(&json).unwrap();
        raw["edges"][0]["edge_type"] = serde_json::json!("interference");
        assert!(serde_json::from_value::<HeteroGraph>(raw).is_err());
    }

    #[test]
    fn figure_five_shape() {
        let (_, g) = default_graph(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = sample_neighborhood(&g, 0, 2, 3, &mut rng);
        assert_eq!(s.first_hop.len(), 2);
        assert_eq!(s.second_hop_total(), 3);
        assert!(s.second_hop.iter().flatten().all(|n| n.node != 0));
    }

    #[test]
    fn small_degree_takes_everything() {
        let (_, g) = default_graph(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_neighborhood(&g, 6, 10, 0, &mut rng);
        let mut nodes: Vec<usize> = s.first_hop.iter().map(|n| n.node).collect();
        nodes.dedup();
        assert_eq!(nodes.len(), 5);
        assert!(s.second_hop.iter().all(Vec::is_empty));
    }

    #[test]
    fn sampling_is_deterministic() {
        let (_, g) = default_graph(6);
        let a = sample_neighborhood(&g, 1, 3, 4, &mut ChaCha8Rng::seed_from_u64(77));
        let b = sample_neighborhood(&g, 1, 3, 4, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }

    #[test]
    fn isolated_node_samples_nothing() {
        let t = generate_topology(7, &GeneratorSpec::default()).unwrap();
        let opts = GraphOptions {
            edge_range_m: Some(0.5),
            ..GraphOptions::default()
        };
        let g = build_graph(&t, &ChannelParams::default(), &opts).unwrap();
        let s = sample_neighborhood(&g, 0, 10, 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.first_hop.is_empty() && s.second_hop.is_empty());
    }

    #[test]
    fn inclusion_frequencies_are_uniform() {
        let (_, g) = default_graph(8);
        let degree = g.neighbors(0).len();
        let (s1, trials) = (3usize, 20_000usize);
        let mut hits = vec![0usize; g.nodes().len()];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..trials {
            for n in sample_neighborhood(&g, 0, s1, 0, &mut rng).first_hop {
                hits[n.node] += 1;
            }
        }
        let p = s1 as f64 / degree as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for n in g.neighbors(0) {
            let dev = (hits[n.node] as f64 - trials as f64 * p).abs();
            assert!(dev <= 3.0 * sigma, "node {} hit {} times", n.node, hits[n.node]);
        }
    }

    proptest! {
        #[test]
        fn graph_invariants_hold(seed in 0u64..2_000) {
            let (t, g) = default_graph(seed);
            for e in g.edges() {
                prop_assert!(e.weight > 0.0);
                let (ra, rb) = (t.vehicle(e.a).role, t.vehicle(e.b).role);
                let ok = match e.edge_type {
                    EdgeType::Comm => matches!((ra, rb), (Role::ServiceProvider, Role::CommTarget)),
                    EdgeType::Sense => matches!((ra, rb), (Role::ServiceProvider, Role::SenseTarget)),
                    EdgeType::Interference => ra == Role::ServiceProvider && rb == Role::ServiceProvider,
                };
                prop_assert!(ok);
            }
            prop_assert!(g.nodes().iter().all(|n| n.features.len() == t.target_count()));
            let again = build_graph(&t, &ChannelParams::default(), &GraphOptions::default()).unwrap();
            prop_assert_eq!(g, again);
        }

        #[test]
        fn sample_bounds_and_partitions(seed in 0u64..500, s1 in 0usize..12, s2 in 0usize..15, rng_seed in 0u64..1000) {
            let (t, g) = default_graph(seed);
            for &k in t.spvs() {
                let s = sample_neighborhood(&g, k, s1, s2, &mut ChaCha8Rng::seed_from_u64(rng_seed));
                prop_assert!(s.first_hop.len() <= s1);
                prop_assert!(s.second_hop_total() <= s2);
                prop_assert_eq!(s.second_hop.len(), s.first_hop.len());
                let typed: usize = EdgeType::ALL.iter().map(|&e| s.first_hop_of(e).count()).sum();
                prop_assert_eq!(typed, s.first_hop.len());
                let mut seen: Vec<usize> = s.first_hop.iter().map(|n| n.node).collect();
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len(), s.first_hop.len());
                for hop in &s.second_hop {
                    let mut ids: Vec<usize> = hop.iter().map(|n| n.node).collect();
                    prop_assert!(!ids.contains(&k));
                    ids.sort_unstable();
                    ids.dedup();
                    prop_assert_eq!(ids.len(), hop.len());
                }
            }
        }
    }
}
