//! Experiment harness: labeled datasets, training, evaluation sweeps and
//! assignment geometry export.
//!
//! Every command writes under one output root:
//!
//! ```text
//! <out>/resolved_config.toml
//! <out>/dataset/{train,validate,test}.json, summary.json, manifest.json
//! <out>/model/{hetero,homo}.json, loss_{hetero,homo}.csv, train_summary.json, manifest.json
//! <out>/eval/metrics.csv, instances.csv, assignments.csv, sweeps.csv, summary.json, manifest.json
//! <out>/explain.json
//! ```
//!
//! Files are written atomically. Each directory's `manifest.json` lists its
//! files with SHA-256 digests and the resolved config hash. JSON outputs
//! carry `schema_version` (checkpoints: `format_version`) and are described
//! by the JSON Schemas in `crates/core/schemas/`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assign::{
    assignment_rows, baseline_location, decide, enumerate_optimal, labels_from_assignment, recheck, SolveResult,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gnn::{spv_inputs, train, GnnHyperParams, GnnMode, GnnModel, SampleInput, TrainingSample};
use crate::hetgraph::{build_graph, HeteroGraph};
use crate::jcs::{self, Mode};
use crate::scenario::{generate_topology, GeneratorSpec, Role, Topology, VehicleCounts};

/// Version of every JSON document and CSV layout this module writes.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

/// Window of the smoothed loss.
pub const LOSS_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validate,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validate => "validate",
            Split::Test => "test",
        }
    }
}

/// One labeled topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// Draw index within the split, counting skipped draws.
    pub index: usize,
    pub topology_seed: u64,
    pub sample_seed: u64,
    pub topology: Topology,
    pub graph: HeteroGraph,
    /// Sampled encoder inputs, one per SPV.
    pub samples: Vec<SampleInput>,
    /// Oracle labels, one L+1 indicator per SPV.
    pub labels: Vec<Vec<f64>>,
    pub oracle: SolveResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub split: Split,
    pub counts: VehicleCounts,
    /// Topologies drawn, including the skipped ones.
    pub drawn: usize,
    /// Draws without any feasible assignment.
    pub infeasible_skipped: usize,
    pub records: Vec<DatasetRecord>,
}

impl DatasetFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        if file.schema_version != OUTPUT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: schema version {} is not supported (expected {OUTPUT_SCHEMA_VERSION})",
                path.display(),
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn target_count(&self) -> usize {
        self.counts.targets()
    }

    pub fn training_samples(&self) -> Vec<TrainingSample> {
        self.records
            .iter()
            .flat_map(|r| {
                r.topology
                    .spvs()
                    .iter()
                    .zip(&r.samples)
                    .zip(&r.labels)
                    .map(|((&k, input), label)| TrainingSample {
                        source_id: r.topology.vehicle(k).id,
                        input: input.clone(),
                        label: label.clone(),
                    })
            })
            .collect()
    }
}

/// Output root and its fixed layout.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn split_file(&self, split: Split) -> PathBuf {
        self.dataset_dir().join(format!("{}.json", split.name()))
    }

    pub fn checkpoint(&self, mode: GnnMode) -> PathBuf {
        self.model_dir().join(format!("{}.json", mode_tag(mode)))
    }
}

fn mode_tag(mode: GnnMode) -> &'static str {
    match mode {
        GnnMode::Heterogeneous => "hetero",
        GnnMode::Homogeneous => "homo",
    }
}

/// Writes through a temporary file in the destination directory, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn to_csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

/// Files of one command, written together with their manifest.
struct Bundle {
    dir: PathBuf,
    command: &'static str,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    fn new(dir: PathBuf, command: &'static str) -> Self {
        Self {
            dir,
            command,
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn commit(self, config_hash: &str) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            entries.push(ManifestEntry {
                file: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
            });
            written.push(path);
        }
        let manifest = Manifest {
            schema_version: OUTPUT_SCHEMA_VERSION,
            command: self.command.to_string(),
            config_hash: config_hash.to_string(),
            files: entries,
        };
        let path = self.dir.join("manifest.json");
        write_atomic(&path, &to_json_bytes(&manifest)?)?;
        written.push(path);
        Ok(written)
    }
}

/// Logs the resolved configuration and stores it next to the outputs.
pub fn record_config(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let text = cfg.to_toml()?;
    log::info!("resolved configuration (hash {}):\n{text}", cfg.hash());
    write_atomic(&layout.root.join("resolved_config.toml"), text.as_bytes())
}

// ---------------------------------------------------------------- dataset

fn check_budget(counts: VehicleCounts, budget: u64) -> Result<()> {
    let candidates = (counts.spv as f64).powi(counts.targets() as i32);
    if candidates > budget as f64 {
        return Err(Error::BudgetExceeded { candidates, budget });
    }
    Ok(())
}

/// Draws `n` topologies, labels the feasible ones with the oracle and
/// skips the rest. Streams are keyed by `stream`, so splits never share
/// seeds.
pub fn generate_split(
    cfg: &ExperimentConfig,
    spec: &GeneratorSpec,
    split: Split,
    n: usize,
    stream: &str,
) -> Result<DatasetFile> {
    check_budget(spec.counts, cfg.enumeration_budget)?;
    let params = cfg.system();
    let drawn: Vec<Option<DatasetRecord>> = (0..n)
        .into_par_iter()
        .map(|index| -> Result<Option<DatasetRecord>> {
            let topology_seed = cfg.derive_seed(&format!("{stream}/{}/topology/{index}", split.name()));
            let sample_seed = cfg.derive_seed(&format!("{stream}/{}/sample/{index}", split.name()));
            let topology = generate_topology(topology_seed, spec)?;
            let oracle = enumerate_optimal(&topology, &params, cfg.enumeration_budget)?;
            if !oracle.result.feasible {
                return Ok(None);
            }
            let graph = build_graph(&topology, &params.channel, &cfg.graph)?;
            let samples = spv_inputs(
                &topology,
                &graph,
                cfg.gnn.sample_sizes,
                cfg.gnn.edge_scaling,
                sample_seed,
            );
            Ok(Some(DatasetRecord {
                index,
                topology_seed,
                sample_seed,
                topology,
                graph,
                samples,
                labels: oracle.labels,
                oracle: oracle.result,
            }))
        })
        .collect::<Result<_>>()?;
    let records: Vec<DatasetRecord> = drawn.into_iter().flatten().collect();
    Ok(DatasetFile {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        split,
        counts: spec.counts,
        drawn: n,
        infeasible_skipped: n - records.len(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub splits: Vec<SplitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub drawn: usize,
    pub records: usize,
    pub infeasible_skipped: usize,
}

/// Generates the train, validate and test splits.
pub fn cmd_dataset(cfg: &ExperimentConfig, layout: &Layout) -> Result<DatasetSummary> {
    cfg.validate()?;
    record_config(cfg, layout)?;
    let hash = cfg.hash();
    let mut bundle = Bundle::new(layout.dataset_dir(), "dataset");
    let mut splits = Vec::new();
    for (split, n) in [
        (Split::Train, cfg.dataset.train),
        (Split::Validate, cfg.dataset.validate),
        (Split::Test, cfg.dataset.test),
    ] {
        let file = generate_split(cfg, &cfg.scenario, split, n, "main")?;
        log::info!(
            "{} split: {} labeled of {} drawn, {} infeasible skipped",
            split.name(),
            file.records.len(),
            file.drawn,
            file.infeasible_skipped
        );
        splits.push(SplitSummary {
            split,
            drawn: file.drawn,
            records: file.records.len(),
            infeasible_skipped: file.infeasible_skipped,
        });
        bundle.add(&format!("{}.json", split.name()), to_json_bytes(&file)?);
    }
    let summary = DatasetSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: hash.clone(),
        splits,
    };
    bundle.add("summary.json", to_json_bytes(&summary)?);
    bundle.commit(&hash)?;
    Ok(summary)
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub loss: f64,
}

/// Trailing moving average; entry `i` averages `trace[i+1-window..=i]`.
/// Empty when the trace is shorter than the window.
pub fn moving_average(trace: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || trace.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(trace.len() + 1 - window);
    let mut sum: f64 = trace[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..trace.len() {
        sum += trace[i] - trace[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Mean of the last `min(window, len)` entries.
pub fn smoothed_final(trace: &[f64], window: usize) -> f64 {
    let w = window.min(trace.len()).max(1);
    trace[trace.len().saturating_sub(w)..].iter().sum::<f64>() / w as f64
}

/// Mean binary cross-entropy of `model` over `samples`.
pub fn mean_loss(model: &GnnModel, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| Ok(crate::gnn::bce_loss(&model.logits(&s.input)?, &s.label)))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mode: GnnMode,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_smoothed_loss: f64,
    /// Mean loss on the validate split; absent when that split is empty.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub training_samples: usize,
    pub models: Vec<ModelSummary>,
}

/// A trained model and its per-iteration loss.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GnnModel,
    pub loss_trace: Vec<f64>,
}

/// Trains one model. Both modes draw initial weights and batches from the
/// same streams, so they see identical data in identical order.
pub fn train_mode(
    cfg: &ExperimentConfig,
    hyper: &GnnHyperParams,
    mode: GnnMode,
    target_count: usize,
    samples: &[TrainingSample],
    stream: &str,
) -> Result<Trained> {
    let hyper = GnnHyperParams { mode, ..hyper.clone() };
    let model = GnnModel::init(hyper.clone(), target_count, cfg.derive_seed(&format!("{stream}/init")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.derive_seed(&format!("{stream}/batches")));
    let out = train(model, samples, &hyper, &mut rng)?;
    Ok(Trained {
        model: out.model,
        loss_trace: out.loss_trace,
    })
}

fn modes(cfg: &ExperimentConfig) -> Vec<GnnMode> {
    if cfg.train_homogeneous {
        vec![GnnMode::Heterogeneous, GnnMode::Homogeneous]
    } else {
        vec![GnnMode::Heterogeneous]
    }
}

/// Trains the heterogeneous model and, unless disabled, the homogeneous
/// one on the train split.
pub fn cmd_train(cfg: &ExperimentConfig, layout: &Layout) -> Result<TrainSummary> {
    cfg.validate()?;
    record_config(cfg, layout)?;
    let hash = cfg.hash();
    let train_file = DatasetFile::load(&layout.split_file(Split::Train))?;
    let l = cfg.scenario.counts.targets();
    if train_file.target_count() != l {
        return Err(Error::Config(format!(
            "dataset has L = {} targets but the configuration has L = {l}; regenerate the dataset",
            train_file.target_count()
        )));
    }
    let samples = train_file.training_samples();
    if samples.is_empty() {
        return Err(Error::Config(
            "the train split has no feasible topologies; draw more topologies".into(),
        ));
    }
    let validation = match DatasetFile::load(&layout.split_file(Split::Validate)) {
        Ok(f) if f.target_count() == l => f.training_samples(),
        _ => Vec::new(),
    };

    let mut bundle = Bundle::new(layout.model_dir(), "train");
    let mut models = Vec::new();
    for mode in modes(cfg) {
        log::info!("training {} model on {} samples", mode_tag(mode), samples.len());
        let t = train_mode(cfg, &cfg.gnn, mode, l, &samples, "main")?;
        let rows: Vec<LossRow> = t
            .loss_trace
            .iter()
            .enumerate()
            .map(|(i, &loss)| LossRow { iteration: i + 1, loss })
            .collect();
        let summary = ModelSummary {
            mode,
            iterations: t.loss_trace.len(),
            initial_loss: t.loss_trace[0],
            final_loss: *t.loss_trace.last().expect("at least one iteration"),
            final_smoothed_loss: smoothed_final(&t.loss_trace, LOSS_WINDOW),
            validation_loss: if validation.is_empty() {
                None
            } else {
                Some(mean_loss(&t.model, &validation)?)
            },
        };
        log::info!(
            "{}: loss {:.4} -> {:.4} (smoothed {:.4})",
            mode_tag(mode),
            summary.initial_loss,
            summary.final_loss,
            summary.final_smoothed_loss
        );
        let mut json = t.model.to_json()?.into_bytes();
        json.push(b'\n');
        bundle.add(&format!("{}.json", mode_tag(mode)), json);
        bundle.add(&format!("loss_{}.csv", mode_tag(mode)), to_csv_bytes(&rows)?);
        models.push(summary);
    }
    let summary = TrainSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: hash.clone(),
        training_samples: samples.len(),
        models,
    };
    bundle.add("train_summary.json", to_json_bytes(&summary)?);
    bundle.commit(&hash)?;
    Ok(summary)
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Heterogeneous GNN followed by the surrogate solver.
    #[serde(rename = "proposed")]
    Proposed,
    /// Exhaustive sum-rate oracle.
    #[serde(rename = "baseline_a")]
    Optimal,
    /// Homogeneous GNN followed by the surrogate solver.
    #[serde(rename = "baseline_b")]
    Homogeneous,
    /// Greedy strongest-signal association from locations only.
    #[serde(rename = "baseline_c")]
    Location,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Optimal, Scheme::Homogeneous, Scheme::Location];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Optimal => "baseline_a",
            Scheme::Homogeneous => "baseline_b",
            Scheme::Location => "baseline_c",
        }
    }
}

/// One scheme on one test topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance: usize,
    pub scheme: Scheme,
    pub feasible: bool,
    /// Sum rate credited to the scheme, bit/s: zero when infeasible.
    pub sum_rate: f64,
    /// Sum rate of the returned assignment regardless of feasibility.
    pub raw_sum_rate: f64,
    pub optimal_sum_rate: f64,
    pub ratio_to_optimal: f64,
    /// SPVs whose predicted target set equals the oracle's.
    pub spv_exact: usize,
    pub spvs: usize,
    /// Matching entries of the L+1 indicator, summed over SPVs.
    pub label_hits: usize,
    pub label_entries: usize,
    /// A result claimed feasible that fails an independent re-check.
    pub unsound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCsvRow {
    pub instance: usize,
    pub scheme: Scheme,
    pub spv_id: u32,
    pub mode: Mode,
    pub target_id: u32,
}

/// Aggregate over the test set for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub instances: usize,
    /// Mean credited sum rate, bit/s.
    pub sum_rate_mean: f64,
    pub raw_sum_rate_mean: f64,
    /// Fraction of SPVs whose predicted target set exactly matches the oracle.
    pub subset_accuracy: f64,
    pub per_label_accuracy: f64,
    pub feasibility_rate: f64,
    pub ratio_mean: f64,
    pub ratio_ci_low: f64,
    pub ratio_ci_high: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub instances: Vec<InstanceRow>,
    pub assignments: Vec<AssignmentCsvRow>,
}

/// Scores `result` against the oracle labels of `record`.
pub fn score(
    record: &DatasetRecord,
    scheme: Scheme,
    result: &SolveResult,
    cfg: &ExperimentConfig,
) -> Result<InstanceRow> {
    let params = cfg.system();
    let report = recheck(&record.topology, result, &params)?;
    let structural = jcs::violations(&record.topology, &result.assignment, &params)?;
    let unsound = result.feasible && !(structural.is_empty() && report.sensing_feasible);
    let sum_rate = if result.feasible { report.objective } else { 0.0 };
    let optimal = record.oracle.objective_true;
    let ratio = if optimal > 0.0 {
        sum_rate / optimal
    } else if result.feasible {
        1.0
    } else {
        0.0
    };
    let predicted = labels_from_assignment(&result.assignment);
    let mut spv_exact = 0;
    let mut label_hits = 0;
    let mut label_entries = 0;
    for (p, t) in predicted.iter().zip(&record.labels) {
        if p == t {
            spv_exact += 1;
        }
        label_hits += p.iter().zip(t).filter(|(a, b)| a == b).count();
        label_entries += t.len();
    }
    Ok(InstanceRow {
        instance: record.index,
        scheme,
        feasible: result.feasible,
        sum_rate,
        raw_sum_rate: report.objective,
        optimal_sum_rate: optimal,
        ratio_to_optimal: ratio,
        spv_exact,
        spvs: record.labels.len(),
        label_hits,
        label_entries,
        unsound,
    })
}

/// Runs every available scheme on every record. Records fan out across
/// threads; rows come back in record order.
pub fn evaluate_records(
    cfg: &ExperimentConfig,
    test: &DatasetFile,
    hetero: &GnnModel,
    homo: Option<&GnnModel>,
    stream: &str,
) -> Result<Evaluation> {
    for m in std::iter::once(hetero).chain(homo) {
        if m.target_count != test.target_count() {
            return Err(Error::Contract(format!(
                "no checkpoint for L = {}: the {} model was trained for L = {}",
                test.target_count(),
                mode_tag(m.hyper.mode),
                m.target_count
            )));
        }
    }
    let params = cfg.system();
    let per_record: Vec<Evaluation> = test
        .records
        .par_iter()
        .map(|record| -> Result<Evaluation> {
            let seed = cfg.derive_seed(&format!("{stream}/decide/{}", record.index));
            let mut runs: Vec<(Scheme, SolveResult)> = vec![
                (
                    Scheme::Proposed,
                    decide(&record.topology, hetero, &cfg.graph, seed, &params)?.result,
                ),
                (Scheme::Optimal, record.oracle.clone()),
            ];
            if let Some(h) = homo {
                runs.push((
                    Scheme::Homogeneous,
                    decide(&record.topology, h, &cfg.graph, seed, &params)?.result,
                ));
            }
            runs.push((Scheme::Location, baseline_location(&record.topology, &params)?));
            let mut ev = Evaluation::default();
            for (scheme, result) in runs {
                ev.instances.push(score(record, scheme, &result, cfg)?);
                ev.assignments.extend(
                    assignment_rows(&record.topology, &result.assignment)
                        .into_iter()
                        .map(|r| AssignmentCsvRow {
                            instance: record.index,
                            scheme,
                            spv_id: r.spv_id,
                            mode: r.mode,
                            target_id: r.target_id,
                        }),
                );
            }
            Ok(ev)
        })
        .collect::<Result<_>>()?;
    let mut all = Evaluation::default();
    for ev in per_record {
        all.instances.extend(ev.instances);
        all.assignments.extend(ev.assignments);
    }
    Ok(all)
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if resamples == 0 {
        return (mean, mean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .sum::<f64>()
                / values.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

/// Aggregates instance rows into one metrics row per scheme present.
pub fn metrics(cfg: &ExperimentConfig, rows: &[InstanceRow], stream: &str) -> Vec<MetricsRow> {
    let hash = cfg.hash();
    Scheme::ALL
        .iter()
        .filter_map(|&scheme| {
            let mine: Vec<&InstanceRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
            if mine.is_empty() {
                return None;
            }
            let n = mine.len() as f64;
            let mean = |f: &dyn Fn(&InstanceRow) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
            let ratios: Vec<f64> = mine.iter().map(|r| r.ratio_to_optimal).collect();
            let (lo, hi) = bootstrap_ci(
                &ratios,
                cfg.bootstrap_resamples,
                cfg.derive_seed(&format!("{stream}/bootstrap/{}", scheme.name())),
            );
            let spvs: usize = mine.iter().map(|r| r.spvs).sum();
            let entries: usize = mine.iter().map(|r| r.label_entries).sum();
            Some(MetricsRow {
                scheme,
                instances: mine.len(),
                sum_rate_mean: mean(&|r| r.sum_rate),
                raw_sum_rate_mean: mean(&|r| r.raw_sum_rate),
                subset_accuracy: mine.iter().map(|r| r.spv_exact).sum::<usize>() as f64 / spvs.max(1) as f64,
                per_label_accuracy: mine.iter().map(|r| r.label_hits).sum::<usize>() as f64 / entries.max(1) as f64,
                feasibility_rate: mean(&|r| if r.feasible { 1.0 } else { 0.0 }),
                ratio_mean: mean(&|r| r.ratio_to_optimal),
                ratio_ci_low: lo,
                ratio_ci_high: hi,
                config_hash: hash.clone(),
            })
        })
        .collect()
}

/// One scheme at one sweep point. Flat, so it fits a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: String,
    pub value: String,
    pub scheme: Scheme,
    pub instances: usize,
    pub sum_rate_mean: f64,
    pub subset_accuracy: f64,
    pub feasibility_rate: f64,
    pub ratio_mean: f64,
    pub ratio_ci_low: f64,
    pub ratio_ci_high: f64,
    pub config_hash: String,
}

impl SweepRow {
    fn new(sweep: &str, value: &str, m: MetricsRow) -> Self {
        Self {
            sweep: sweep.to_string(),
            value: value.to_string(),
            scheme: m.scheme,
            instances: m.instances,
            sum_rate_mean: m.sum_rate_mean,
            subset_accuracy: m.subset_accuracy,
            feasibility_rate: m.feasibility_rate,
            ratio_mean: m.ratio_mean,
            ratio_ci_low: m.ratio_ci_low,
            ratio_ci_high: m.ratio_ci_high,
            config_hash: m.config_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub test_instances: usize,
    pub metrics: Vec<MetricsRow>,
    /// Results claimed feasible that failed re-checking; zero when sound.
    pub unsound_results: usize,
    pub sweeps: Vec<SweepRow>,
}

/// One sweep point: fresh train and test splits for `spec`, a model per
/// mode trained with `hyper`, and the metrics of every scheme.
pub fn sweep_point(
    cfg: &ExperimentConfig,
    spec: &GeneratorSpec,
    hyper: &GnnHyperParams,
    stream: &str,
) -> Result<(Vec<MetricsRow>, usize)> {
    let train_file = generate_split(cfg, spec, Split::Train, cfg.sweeps.train_topologies, stream)?;
    let test = generate_split(cfg, spec, Split::Test, cfg.sweeps.test_topologies, stream)?;
    let samples = train_file.training_samples();
    if samples.is_empty() || test.records.is_empty() {
        log::warn!("sweep point {stream}: no feasible topologies, skipped");
        return Ok((Vec::new(), 0));
    }
    let l = spec.counts.targets();
    let hetero = train_mode(cfg, hyper, GnnMode::Heterogeneous, l, &samples, stream)?.model;
    let homo = if cfg.train_homogeneous {
        Some(train_mode(cfg, hyper, GnnMode::Homogeneous, l, &samples, stream)?.model)
    } else {
        None
    };
    let ev = evaluate_records(cfg, &test, &hetero, homo.as_ref(), stream)?;
    let unsound = ev.instances.iter().filter(|r| r.unsound).count();
    Ok((metrics(cfg, &ev.instances, stream), unsound))
}

/// The sweep tables over SPV count, target counts and embedding dimension.
pub fn sweeps(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, usize)> {
    let hyper = GnnHyperParams {
        iterations: cfg.sweeps.iterations,
        ..cfg.gnn.clone()
    };
    let base = cfg.scenario.counts;
    let mut points: Vec<(&str, String, GeneratorSpec, GnnHyperParams)> = Vec::new();
    for &k in &cfg.sweeps.spv_counts {
        let spec = GeneratorSpec {
            counts: VehicleCounts::new(k, base.comm, base.sense),
            ..cfg.scenario.clone()
        };
        points.push(("spv_count", k.to_string(), spec, hyper.clone()));
    }
    for &(m, n) in &cfg.sweeps.target_counts {
        let spec = GeneratorSpec {
            counts: VehicleCounts::new(base.spv, m, n),
            ..cfg.scenario.clone()
        };
        points.push(("target_counts", format!("{m}x{n}"), spec, hyper.clone()));
    }
    for &d in &cfg.sweeps.embedding_dims {
        let h = GnnHyperParams {
            embedding_dim: d,
            ..hyper.clone()
        };
        h.validate()?;
        points.push(("embedding_dim", d.to_string(), cfg.scenario.clone(), h));
    }
    let mut rows = Vec::new();
    let mut unsound = 0;
    for (sweep, value, spec, h) in points {
        log::info!("sweep {sweep} = {value}");
        let (m, u) = sweep_point(cfg, &spec, &h, &format!("sweep/{sweep}/{value}"))?;
        unsound += u;
        rows.extend(m.into_iter().map(|metrics| SweepRow::new(sweep, &value, metrics)));
    }
    Ok((rows, unsound))
}

/// Evaluates the trained checkpoints on the test split and, optionally,
/// runs the sweep tables.
pub fn cmd_evaluate(cfg: &ExperimentConfig, layout: &Layout, with_sweeps: bool) -> Result<EvalSummary> {
    cfg.validate()?;
    record_config(cfg, layout)?;
    let hash = cfg.hash();
    let test = DatasetFile::load(&layout.split_file(Split::Test))?;
    let hetero = GnnModel::load(&layout.checkpoint(GnnMode::Heterogeneous))?;
    let homo = if cfg.train_homogeneous {
        Some(GnnModel::load(&layout.checkpoint(GnnMode::Homogeneous))?)
    } else {
        None
    };
    let ev = evaluate_records(cfg, &test, &hetero, homo.as_ref(), "main")?;
    let rows = metrics(cfg, &ev.instances, "main");
    for r in &rows {
        log::info!(
            "{}: sum rate {:.4e} bit/s, ratio {:.4} [{:.4}, {:.4}], subset accuracy {:.4}, feasible {:.4}",
            r.scheme.name(),
            r.sum_rate_mean,
            r.ratio_mean,
            r.ratio_ci_low,
            r.ratio_ci_high,
            r.subset_accuracy,
            r.feasibility_rate
        );
    }
    let mut unsound = ev.instances.iter().filter(|r| r.unsound).count();
    let sweep_rows = if with_sweeps {
        let (s, u) = sweeps(cfg)?;
        unsound += u;
        s
    } else {
        Vec::new()
    };

    let mut bundle = Bundle::new(layout.eval_dir(), "evaluate");
    bundle.add("metrics.csv", to_csv_bytes(&rows)?);
    bundle.add("instances.csv", to_csv_bytes(&ev.instances)?);
    bundle.add("assignments.csv", to_csv_bytes(&ev.assignments)?);
    if with_sweeps {
        bundle.add("sweeps.csv", to_csv_bytes(&sweep_rows)?);
    }
    let summary = EvalSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: hash.clone(),
        test_instances: test.records.len(),
        metrics: rows,
        unsound_results: unsound,
        sweeps: sweep_rows,
    };
    bundle.add("summary.json", to_json_bytes(&summary)?);
    bundle.commit(&hash)?;
    Ok(summary)
}

// ---------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub id: u32,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub spv_id: u32,
    pub target_id: u32,
    pub mode: Mode,
    pub sinr: f64,
    pub sinr_db: f64,
    /// bit/s; communication links only.
    pub rate: Option<f64>,
    /// Sensing links only.
    pub meets_min_sinr: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub region_width: f64,
    pub region_height: f64,
    pub vehicles: Vec<VehicleGeometry>,
    pub links: Vec<LinkGeometry>,
    pub sum_rate: f64,
    pub feasible: bool,
}

/// Geometry and per-link quality of the proposed decision on `topology`.
pub fn explain(cfg: &ExperimentConfig, model: &GnnModel, topology: &Topology, seed: u64) -> Result<ExplainReport> {
    let params = cfg.system();
    let decision = decide(topology, model, &cfg.graph, seed, &params)?;
    let report = recheck(topology, &decision.result, &params)?;
    let mut links: Vec<LinkGeometry> = report
        .comm
        .iter()
        .map(|l| LinkGeometry {
            spv_id: l.spv_id,
            target_id: l.target_id,
            mode: Mode::Comm,
            sinr: l.sinr,
            sinr_db: 10.0 * l.sinr.log10(),
            rate: Some(l.rate),
            meets_min_sinr: None,
        })
        .collect();
    links.extend(report.sense.iter().map(|l| LinkGeometry {
        spv_id: l.spv_id,
        target_id: l.target_id,
        mode: Mode::Sense,
        sinr: l.sinr,
        sinr_db: 10.0 * l.sinr.log10(),
        rate: None,
        meets_min_sinr: Some(l.feasible),
    }));
    Ok(ExplainReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        region_width: topology.region().width,
        region_height: topology.region().height,
        vehicles: topology
            .vehicles()
            .iter()
            .map(|v| VehicleGeometry {
                id: v.id,
                role: v.role,
                x: v.position.x,
                y: v.position.y,
                heading: v.heading,
            })
            .collect(),
        links,
        sum_rate: report.objective,
        feasible: decision.result.feasible,
    })
}

/// Where `cmd_explain` takes its topology from.
#[derive(Debug, Clone)]
pub enum TopologySource {
    /// A topology JSON file.
    File(PathBuf),
    /// A record of the test split, by position.
    TestRecord(usize),
    /// A freshly generated topology.
    Generated,
}

pub fn cmd_explain(cfg: &ExperimentConfig, layout: &Layout, source: &TopologySource) -> Result<ExplainReport> {
    cfg.validate()?;
    record_config(cfg, layout)?;
    let model = GnnModel::load(&layout.checkpoint(GnnMode::Heterogeneous))?;
    let topology = match source {
        TopologySource::File(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        TopologySource::TestRecord(i) => {
            let test = DatasetFile::load(&layout.split_file(Split::Test))?;
            let n = test.records.len();
            test.records
                .into_iter()
                .nth(*i)
                .ok_or_else(|| Error::Config(format!("test split has {n} records, asked for record {i}")))?
                .topology
        }
        TopologySource::Generated => generate_topology(cfg.derive_seed("explain/topology"), &cfg.scenario)?,
    };
    let report = explain(cfg, &model, &topology, cfg.derive_seed("explain/decide"))?;
    write_atomic(&layout.root.join("explain.json"), &to_json_bytes(&report)?)?;
    Ok(report)
}
