//! Two-hop heterogeneous GNN, written from scratch on dense `f64` matrices.
//!
//! Layer I maps a node and the typed means of its neighbors' `[f ‖ g]`
//! through four blocks `w1..w4`; layer II does the same over the first-hop
//! layer-I outputs with `w5..w8`. A ReLU MLP head turns the λ₀-dimensional
//! embedding into L+1 logits: one per target plus an "idle" class.

mod input;
mod matrix;
mod net;
mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use input::{spv_inputs, EdgeScaling, FirstHopInput, NeighborInput, SampleInput, TrainingSample};
pub use matrix::Matrix;
pub use net::{aggregate_typed, bce_loss, homogeneous_encode, sigmoid};
pub use train::{train, TrainOutcome};

/// Version tag written into every checkpoint.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnMode {
    #[default]
    Heterogeneous,
    /// Single neighbor matrix per hop over the union of all edge types.
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnHyperParams {
    /// λ₀, a multiple of 4.
    pub embedding_dim: usize,
    /// (s₁, s₂); s₂ is the total second-hop budget.
    pub sample_sizes: (usize, usize),
    pub hop_count: usize,
    pub head_layer_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub mode: GnnMode,
    pub edge_scaling: EdgeScaling,
}

impl Default for GnnHyperParams {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            sample_sizes: (10, 10),
            hop_count: 2,
            head_layer_sizes: vec![32, 64, 64],
            learning_rate: 0.7,
            batch_size: 64,
            iterations: 20_000,
            mode: GnnMode::Heterogeneous,
            edge_scaling: EdgeScaling::default(),
        }
    }
}

impl GnnHyperParams {
    pub fn validate(&self) -> Result<()> {
        self.validate_architecture()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config("iterations and batch size must be at least 1".into()));
        }
        Ok(())
    }

    /// The checks that fix parameter shapes.
    pub fn validate_architecture(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.embedding_dim % 4 != 0 {
            return Err(Error::Config(format!(
                "embedding dimension must be a positive multiple of 4, got {}",
                self.embedding_dim
            )));
        }
        if self.hop_count != 2 {
            return Err(Error::Config(format!(
                "the encoder has exactly two hops, got hop_count = {}",
                self.hop_count
            )));
        }
        if self.head_layer_sizes.is_empty() || self.head_layer_sizes.contains(&0) {
            return Err(Error::Config("head layer sizes must be nonempty and positive".into()));
        }
        Ok(())
    }

    fn same_architecture(&self, other: &Self) -> bool {
        self.embedding_dim == other.embedding_dim
            && self.head_layer_sizes == other.head_layer_sizes
            && self.mode == other.mode
    }
}

/// All trainable tensors. Also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// `w1..w8`, stored at indices 0..8.
    pub w: Vec<Matrix>,
    /// Head weights: three hidden layers then the output layer.
    pub head: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn shapes(hyper: &GnnHyperParams, target_count: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let (l, d) = (target_count, hyper.embedding_dim);
        let q = d / 4;
        let w = vec![
            (q, l),
            (q, l + 1),
            (q, l + 1),
            (q, l + 1),
            (q, d),
            (q, d + 1),
            (q, d + 1),
            (q, d + 1),
        ];
        let mut head = Vec::new();
        let mut fan_in = d;
        for &n in hyper.head_layer_sizes.iter().chain(std::iter::once(&(l + 1))) {
            head.push((n, fan_in));
            fan_in = n;
        }
        (w, head)
    }

    pub fn zeros(hyper: &GnnHyperParams, target_count: usize) -> Self {
        let (w, head) = Self::shapes(hyper, target_count);
        Self {
            w: w.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            bias: head.iter().map(|&(r, _)| vec![0.0; r]).collect(),
            head: head.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Parameters) {
        for (x, y) in self.w.iter_mut().zip(&other.w) {
            x.axpy(a, y);
        }
        for (x, y) in self.head.iter_mut().zip(&other.head) {
            x.axpy(a, y);
        }
        for (x, y) in self.bias.iter_mut().zip(&other.bias) {
            for (u, v) in x.iter_mut().zip(y) {
                *u += a * v;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.head).all(Matrix::is_finite) && self.bias.iter().flatten().all(|x| x.is_finite())
    }

    /// Every scalar, in a fixed order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in self.w.iter().chain(&self.head) {
            out.extend_from_slice(m.as_slice());
        }
        for b in &self.bias {
            out.extend_from_slice(b);
        }
        out
    }

    /// Mutable access to the `i`-th scalar of [`Parameters::flat`].
    pub fn flat_mut(&mut self, mut i: usize) -> &mut f64 {
        for m in self.w.iter_mut().chain(self.head.iter_mut()) {
            let n = m.as_slice().len();
            if i < n {
                return &mut m.as_mut_slice()[i];
            }
            i -= n;
        }
        for b in self.bias.iter_mut() {
            if i < b.len() {
                return &mut b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    fn check_shapes(&self, hyper: &GnnHyperParams, target_count: usize) -> Result<()> {
        let (w, head) = Self::shapes(hyper, target_count);
        let found_w: Vec<_> = self.w.iter().map(Matrix::shape).collect();
        let found_h: Vec<_> = self.head.iter().map(Matrix::shape).collect();
        let found_b: Vec<_> = self.bias.iter().map(Vec::len).collect();
        let want_b: Vec<_> = head.iter().map(|s| s.0).collect();
        if found_w != w || found_h != head || found_b != want_b {
            return Err(Error::Shape(format!(
                "parameters {found_w:?}/{found_h:?}/{found_b:?} do not fit λ0 = {}, L = {target_count}, head {:?}",
                hyper.embedding_dim, hyper.head_layer_sizes
            )));
        }
        Ok(())
    }

    /// Copies the shared neighbor matrices into the tied slots.
    fn tie(&mut self) {
        let w2 = self.w[1].clone();
        let w6 = self.w[5].clone();
        self.w[2] = w2.clone();
        self.w[3] = w2;
        self.w[6] = w6.clone();
        self.w[7] = w6;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub hyper: GnnHyperParams,
    /// L, the number of targets the model was built for.
    pub target_count: usize,
    pub seed: u64,
    pub params: Parameters,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    #[serde(flatten)]
    model: GnnModel,
}

impl GnnModel {
    /// Weights uniform on ±1/√fan_in, biases zero.
    pub fn init(hyper: GnnHyperParams, target_count: usize, seed: u64) -> Result<Self> {
        hyper.validate_architecture()?;
        if target_count == 0 {
            return Err(Error::Config("a model needs at least one target".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, head) = Parameters::shapes(&hyper, target_count);
        let mut params = Parameters {
            w: w.iter().map(|&(r, c)| Matrix::uniform(r, c, &mut rng)).collect(),
            head: head.iter().map(|&(r, c)| Matrix::uniform(r, c, &mut rng)).collect(),
            bias: head.iter().map(|&(r, _)| vec![0.0; r]).collect(),
        };
        if hyper.mode == GnnMode::Homogeneous {
            params.tie();
        }
        Ok(Self {
            hyper,
            target_count,
            seed,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.flat().len()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate_architecture()?;
        self.params.check_shapes(&self.hyper, self.target_count)?;
        if !self.params.is_finite() {
            return Err(Error::Shape("model contains non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                c.format_version
            )));
        }
        c.model.validate()?;
        Ok(c.model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Sigmoid of the logits: the per-class service probabilities y_k.
    pub fn probabilities(&self, input: &SampleInput) -> Result<Vec<f64>> {
        Ok(self.logits(input)?.into_iter().map(sigmoid).collect())
    }
}

#[cfg(test)]
mod tests;
