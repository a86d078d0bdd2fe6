//! Experiment configuration: every physical, scenario and training knob,
//! fully defaulted, loadable from TOML as a partial override.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assign::DEFAULT_ENUMERATION_BUDGET;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::gnn::GnnHyperParams;
use crate::hetgraph::GraphOptions;
use crate::jcs::SystemParams;
use crate::scenario::{GeneratorSpec, SensingParams, VehicleCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train: usize,
    pub test: usize,
    pub validate: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        Self {
            train: 1500,
            test: 1000,
            validate: 1000,
        }
    }
}

/// Grids for the sweep tables. Each point trains its own model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// SPV counts, with the base comm/sensing counts.
    pub spv_counts: Vec<usize>,
    /// (comm, sensing) target counts, with the base SPV count.
    pub target_counts: Vec<(usize, usize)>,
    /// Embedding dimensions λ₀, on the base counts.
    pub embedding_dims: Vec<usize>,
    pub train_topologies: usize,
    pub test_topologies: usize,
    pub iterations: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            spv_counts: vec![3, 4, 5, 6, 7],
            target_counts: vec![(1, 1), (2, 1), (2, 2), (3, 2), (3, 3)],
            embedding_dims: vec![16, 32, 64, 128],
            train_topologies: 400,
            test_topologies: 200,
            iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub channel: ChannelParams,
    pub sensing: SensingParams,
    /// Apply absorption on both radar legs instead of once.
    pub roundtrip_absorption: bool,
    pub scenario: GeneratorSpec,
    pub graph: GraphOptions,
    pub gnn: GnnHyperParams,
    pub dataset: DatasetSizes,
    pub enumeration_budget: u64,
    pub train_homogeneous: bool,
    pub bootstrap_resamples: usize,
    pub sweeps: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            channel: ChannelParams::default(),
            sensing: SensingParams::default(),
            roundtrip_absorption: false,
            scenario: GeneratorSpec::default(),
            graph: GraphOptions::default(),
            gnn: GnnHyperParams::default(),
            dataset: DatasetSizes::default(),
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            train_homogeneous: true,
            bootstrap_resamples: 2000,
            sweeps: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small profile for quick runs and CI: T = 500, 100 topologies per split.
    pub fn smoke() -> Self {
        let mut c = Self::default();
        c.gnn.iterations = 500;
        c.dataset = DatasetSizes {
            train: 100,
            test: 100,
            validate: 100,
        };
        c.bootstrap_resamples = 500;
        c.sweeps = SweepConfig {
            spv_counts: vec![4, 5],
            target_counts: vec![(1, 1), (2, 2)],
            embedding_dims: vec![16, 64],
            train_topologies: 60,
            test_topologies: 40,
            iterations: 200,
        };
        c
    }

    /// Base profile overlaid with a TOML document.
    pub fn from_toml_over(base: &Self, text: &str) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overlay);
        let cfg: Self = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, smoke: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_over(&Self::profile(smoke), &text)
    }

    pub fn profile(smoke: bool) -> Self {
        if smoke {
            Self::smoke()
        } else {
            Self::default()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        self.scenario.antenna.validate()?;
        self.gnn.validate()?;
        let VehicleCounts { spv, comm, sense } = self.scenario.counts;
        if spv == 0 || comm + sense == 0 {
            return Err(Error::Config("need at least one SPV and one target".into()));
        }
        if self.dataset.train == 0 || self.dataset.test == 0 {
            return Err(Error::Config("train and test splits must be nonempty".into()));
        }
        if !(self.graph.blocker_radius > 0.0) {
            return Err(Error::Config("blocker radius must be positive".into()));
        }
        Ok(())
    }

    pub fn system(&self) -> SystemParams {
        SystemParams {
            channel: self.channel,
            sensing: self.sensing,
            roundtrip_absorption: self.roundtrip_absorption,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Seed for a named stream, derived from the master seed.
    pub fn derive_seed(&self, stream: &str) -> u64 {
        derive_seed(self.seed, stream)
    }
}

pub fn derive_seed(master: u64, stream: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
