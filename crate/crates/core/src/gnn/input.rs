//! Materialized GNN inputs: a sampled two-hop neighborhood with node
//! features and (rescaled) edge weights copied in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hetgraph::{sample_neighborhood, EdgeType, HeteroGraph, SampledNeighborhood};
use crate::scenario::Topology;

/// How raw inverse path losses are presented to the network.
///
/// Raw weights span roughly 1e-9 to 1e-19 in the default region, far below
/// the scale of the blocker-count features, so the default feeds them in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeScaling {
    Raw,
    /// `(10·log10(g) + offset_db) / span_db`
    Decibel {
        offset_db: f64,
        span_db: f64,
    },
}

impl Default for EdgeScaling {
    fn default() -> Self {
        EdgeScaling::Decibel {
            offset_db: 200.0,
            span_db: 100.0,
        }
    }
}

impl EdgeScaling {
    pub fn apply(&self, g: f64) -> f64 {
        match *self {
            EdgeScaling::Raw => g,
            EdgeScaling::Decibel { offset_db, span_db } => (10.0 * g.log10() + offset_db) / span_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInput {
    pub edge_type: EdgeType,
    pub weight: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstHopInput {
    pub edge_type: EdgeType,
    pub weight: f64,
    pub features: Vec<f64>,
    pub second_hop: Vec<NeighborInput>,
}

/// Everything the encoder reads for one source SPV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInput {
    pub features: Vec<f64>,
    pub first_hop: Vec<FirstHopInput>,
}

impl SampleInput {
    pub fn from_neighborhood(graph: &HeteroGraph, hood: &SampledNeighborhood, scaling: EdgeScaling) -> Self {
        let neighbor = |n: &crate::hetgraph::Neighbor| NeighborInput {
            edge_type: n.edge_type,
            weight: scaling.apply(n.weight),
            features: graph.features(n.node).to_vec(),
        };
        SampleInput {
            features: graph.features(hood.source).to_vec(),
            first_hop: hood
                .first_hop
                .iter()
                .zip(&hood.second_hop)
                .map(|(n, second)| {
                    let NeighborInput {
                        edge_type,
                        weight,
                        features,
                    } = neighbor(n);
                    FirstHopInput {
                        edge_type,
                        weight,
                        features,
                        second_hop: second.iter().map(neighbor).collect(),
                    }
                })
                .collect(),
        }
    }
}

/// One supervised example: an SPV's input and its L+1 target indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub source_id: u32,
    pub input: SampleInput,
    pub label: Vec<f64>,
}

/// Samples and materializes the inputs of every SPV of `topology`, in SPV
/// order, from a generator seeded with `seed`.
pub fn spv_inputs(
    topology: &Topology,
    graph: &HeteroGraph,
    sample_sizes: (usize, usize),
    scaling: EdgeScaling,
    seed: u64,
) -> Vec<SampleInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    topology
        .spvs()
        .iter()
        .map(|&k| {
            let hood = sample_neighborhood(graph, k, sample_sizes.0, sample_sizes.1, &mut rng);
            SampleInput::from_neighborhood(graph, &hood, scaling)
        })
        .collect()
}
