//! End-to-end runs: train over the stream, evaluate after each task, collect
//! diagnostics and write a report directory.
//!
//! Report layout:
//!
//! ```text
//! config.json                 resolved configuration (with seed)
//! accuracy_matrix.csv         task × checkpoint accuracies
//! metrics.json                final metrics
//! loss_log.csv                per-step loss components
//! buffer_snapshots/task_<i>.csv   buffer features after task i
//! test_snapshots/task_<i>.csv     probe test-point features after task i
//! checkpoints/task_<i>.json   model after task i
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{generate, DatasetConfig, StreamPair};
use crate::error::{Error, Result};
use crate::fmap::{fmap_report, FmapReport};
use crate::graph::{build_knn_graph, EmbeddingBatch, DEFAULT_K};
use crate::learner::{forward, save_checkpoint, ModelConfig, ModelParams};
use crate::metrics::{
    adjusted_forgetting, final_average_accuracy, intra_class_variance, knn_accuracy,
    label_signal_variation, AccuracyMatrix,
};
use crate::replay::buffer::ReplayBuffer;
use crate::replay::stream::{Task, TaskStream};
use crate::replay::train::{evaluate, train_task, Learner, Method, StepLog, TrainConfig};
use crate::rng::{derive, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Extractor widths; the last one is the feature dimension.
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![64, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// k of the latent graphs used for diagnostics.
    pub graph_k: usize,
    pub knn_ks: Vec<usize>,
    /// Test points per class (from the early tasks) tracked across checkpoints.
    pub fmap_points_per_class: usize,
    pub fmap_rank: usize,
    pub fmap_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            graph_k: DEFAULT_K,
            knn_ks: vec![5, 11],
            fmap_points_per_class: 20,
            fmap_rank: 25,
            fmap_threshold: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        if self.analysis.graph_k == 0 || self.analysis.fmap_rank == 0 {
            return Err(Error::InvalidParameter("graph_k and fmap_rank must be positive".into()));
        }
        if let Some(k) = self.analysis.knn_ks.iter().find(|&&k| k == 0 || k % 2 == 0) {
            return Err(Error::InvalidParameter(format!("k-NN k must be odd and positive, got {k}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub final_average_accuracy: f64,
    pub adjusted_forgetting: Option<f64>,
    /// Label-signal variation of the buffer graph after each task.
    pub sigma_per_task: Vec<Option<f64>>,
    pub intra_class_variance: Option<f64>,
    /// Keyed by k; buffer features as support, all test points as queries.
    pub knn_accuracy: BTreeMap<String, f64>,
    /// Off-diagonal energy of the functional map between the probe graphs at
    /// the mid-stream and final checkpoints; `None` for single-task runs.
    pub off_diagonal_energy: Option<f64>,
}

/// Features of a labelled point set at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Snapshot {
    pub fn to_batch(&self) -> Result<EmbeddingBatch> {
        EmbeddingBatch::new(self.features.clone(), self.labels.clone())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub accuracy: AccuracyMatrix,
    pub metrics: MetricsSummary,
    pub buffer_snapshots: Vec<Snapshot>,
    pub test_snapshots: Vec<Snapshot>,
    pub checkpoints: Vec<ModelParams>,
    pub loss_log: Vec<StepLog>,
}

/// Early-task test points followed across checkpoints: the first
/// `per_class` test points of each class in the first `max(1, T/2)` tasks.
pub fn probe_points(test: &TaskStream, per_class: usize) -> Task {
    let early = (test.len() / 2).max(1);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for task in &test.tasks()[..early] {
        let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &l) in task.labels.iter().enumerate() {
            let n = taken.entry(l).or_insert(0);
            if *n < per_class {
                *n += 1;
                rows.push(task.inputs.row(i));
                labels.push(l);
            }
        }
    }
    let inputs = ndarray::stack(Axis(0), &rows).expect("probe rows share width");
    Task { inputs, labels }
}

/// Checkpoint (0-based task index) compared against the final one: after
/// `T/2` tasks. `None` when `T < 2`.
pub fn mid_checkpoint(tasks: usize) -> Option<usize> {
    (tasks >= 2).then(|| tasks / 2 - 1)
}

/// Functional map between the probe graphs at the mid-stream and final
/// checkpoints.
pub fn stream_fmap(test_snapshots: &[Snapshot], analysis: &AnalysisConfig) -> Result<Option<FmapReport>> {
    let Some(mid) = mid_checkpoint(test_snapshots.len()) else {
        return Ok(None);
    };
    let a = test_snapshots[mid].to_batch()?;
    let b = test_snapshots[test_snapshots.len() - 1].to_batch()?;
    fmap_report(&a, &b, analysis.graph_k, analysis.fmap_rank, analysis.fmap_threshold).map(Some)
}

fn snapshot(model: &ModelParams, inputs: &Array2<f64>, labels: &[usize]) -> Result<Snapshot> {
    let trace = forward(model, inputs.view())?;
    Ok(Snapshot {
        features: trace.features,
        labels: labels.to_vec(),
    })
}

/// Label-signal variation of the k-NN graph over a snapshot (`k` capped at
/// `n − 1`); `None` for fewer than two points.
pub fn snapshot_sigma(s: &Snapshot, k: usize) -> Result<Option<f64>> {
    if s.labels.len() <= 1 {
        return Ok(None);
    }
    let k = k.min(s.labels.len() - 1);
    let g = build_knn_graph(&s.to_batch()?, k)?;
    Ok(Some(label_signal_variation(&g)))
}

struct Progress {
    accuracy: AccuracyMatrix,
    buffer_snapshots: Vec<Snapshot>,
    test_snapshots: Vec<Snapshot>,
    checkpoints: Vec<ModelParams>,
    loss_log: Vec<StepLog>,
}

/// Trains and evaluates one configuration on `streams`.
///
/// `Joint` trains a single merged task and is evaluated on the merged test
/// split. When `out` is given the report is written there; if training
/// diverges, whatever was collected so far is flushed before the error is
/// returned.
pub fn run_experiment(streams: &StreamPair, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (train, test) = if cfg.train.method == Method::Joint {
        (
            TaskStream::new(vec![streams.train.merged()])?,
            TaskStream::new(vec![streams.test.merged()])?,
        )
    } else {
        (streams.train.clone(), streams.test.clone())
    };
    if train.len() != test.len() {
        return Err(Error::InvalidInput("train and test streams differ in task count".into()));
    }

    let num_classes = streams.train.classes().into_iter().max().map_or(0, |c| c + 1);
    let model_cfg = ModelConfig {
        input_dim: streams.train.input_dim(),
        hidden: cfg.model.hidden.clone(),
        num_classes,
    };
    let model = ModelParams::init(model_cfg, &mut derive(cfg.train.seed, Purpose::Init, 0, 0))?;
    let mut state = Learner {
        model,
        buffer: ReplayBuffer::new(cfg.train.buffer_size),
        step: 0,
    };
    let probes = probe_points(&streams.test, cfg.analysis.fmap_points_per_class);

    let mut progress = Progress {
        accuracy: AccuracyMatrix::new(train.len()),
        buffer_snapshots: Vec::new(),
        test_snapshots: Vec::new(),
        checkpoints: Vec::new(),
        loss_log: Vec::new(),
    };

    let result = (|| -> Result<()> {
        for (i, task) in train.tasks().iter().enumerate() {
            let logs = train_task(&mut state, task, i, &cfg.train)?;
            progress.loss_log.extend(logs);
            progress.accuracy.push_checkpoint(evaluate(&state.model, &test, i)?)?;
            if !state.buffer.is_empty() {
                let (bx, by) = state.buffer.to_arrays()?;
                progress.buffer_snapshots.push(snapshot(&state.model, &bx, &by)?);
            }
            progress.test_snapshots.push(snapshot(&state.model, &probes.inputs, &probes.labels)?);
            progress.checkpoints.push(state.model.clone());
        }
        Ok(())
    })();

    if let Err(e) = result {
        if let Some(dir) = out {
            write_partial(dir, cfg, &progress, &e)?;
        }
        return Err(e);
    }

    let metrics = summarize(&progress, &state.model, &test, &cfg.analysis)?;
    let report = ExperimentReport {
        config: cfg.clone(),
        accuracy: progress.accuracy,
        metrics,
        buffer_snapshots: progress.buffer_snapshots,
        test_snapshots: progress.test_snapshots,
        checkpoints: progress.checkpoints,
        loss_log: progress.loss_log,
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

/// Generates the dataset for `cfg` (seeded by the run seed unless the data
/// config pins one) and runs the experiment.
pub fn run_seeded(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    let mut data = cfg.data.clone();
    data.seed = Some(data.seed.unwrap_or(cfg.train.seed));
    let streams = generate(&data)?;
    run_experiment(&streams, cfg, out)
}

fn summarize(
    progress: &Progress,
    model: &ModelParams,
    test: &TaskStream,
    analysis: &AnalysisConfig,
) -> Result<MetricsSummary> {
    let sigma_per_task = progress
        .buffer_snapshots
        .iter()
        .map(|s| snapshot_sigma(s, analysis.graph_k))
        .collect::<Result<Vec<_>>>()?;

    let mut intra = None;
    let mut knn = BTreeMap::new();
    if let Some(last) = progress.buffer_snapshots.last() {
        let support = last.to_batch()?;
        intra = intra_class_variance(&support).ok();
        let merged = test.merged();
        let queries = snapshot(model, &merged.inputs, &merged.labels)?.to_batch()?;
        for &k in &analysis.knn_ks {
            if k <= support.len() {
                knn.insert(k.to_string(), knn_accuracy(&support, &queries, k)?);
            }
        }
    }
    Ok(MetricsSummary {
        final_average_accuracy: final_average_accuracy(&progress.accuracy)?,
        adjusted_forgetting: adjusted_forgetting(&progress.accuracy)?,
        sigma_per_task,
        intra_class_variance: intra,
        knn_accuracy: knn,
        off_diagonal_energy: stream_fmap(&progress.test_snapshots, analysis)?
            .map(|f| f.meta.off_diagonal_energy),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `label,f0,…` rows.
pub fn write_snapshot(s: &Snapshot, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..s.features.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (row, &l) in s.features.rows().into_iter().zip(&s.labels) {
        let mut rec = vec![l.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 2 {
        return Err(Error::Load(format!("{} has no feature columns", path.display())));
    }
    let mut labels = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Load(format!("{} row {i}: bad {what}", path.display()));
        labels.push(rec[0].parse().map_err(|_| parse_err("label"))?);
        for field in rec.iter().skip(1) {
            flat.push(field.parse::<f64>().map_err(|_| parse_err("feature"))?);
        }
    }
    let features = Array2::from_shape_vec((labels.len(), width - 1), flat)
        .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    Ok(Snapshot { features, labels })
}

fn accuracy_csv(m: &AccuracyMatrix) -> String {
    let t = m.tasks();
    let mut out = String::from("task");
    for j in 1..=t {
        out.push_str(&format!(",after_task_{j}"));
    }
    out.push('\n');
    for i in 0..t {
        out.push_str(&(i + 1).to_string());
        for j in 0..t {
            out.push(',');
            if let Some(v) = m.get(i, j) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

fn loss_log_csv(log: &[StepLog]) -> String {
    let mut out = String::from("step,task,epoch,loss_stream,loss_buffer,loss_casper,total\n");
    for s in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.step, s.task, s.epoch, s.loss_stream, s.loss_buffer, s.loss_casper, s.total
        ));
    }
    out
}

fn write_common(
    dir: &Path,
    cfg: &ExperimentConfig,
    accuracy: &AccuracyMatrix,
    loss_log: &[StepLog],
    buffer: &[Snapshot],
    test: &[Snapshot],
    checkpoints: &[ModelParams],
) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join("config.json"), &serde_json::to_string_pretty(cfg)?)?;
    write_text(&dir.join("accuracy_matrix.csv"), &accuracy_csv(accuracy))?;
    write_text(&dir.join("loss_log.csv"), &loss_log_csv(loss_log))?;
    for (name, snaps) in [("buffer_snapshots", buffer), ("test_snapshots", test)] {
        let sub = dir.join(name);
        create_dir(&sub)?;
        for (i, s) in snaps.iter().enumerate() {
            write_snapshot(s, &sub.join(format!("task_{}.csv", i + 1)))?;
        }
    }
    let ck = dir.join("checkpoints");
    create_dir(&ck)?;
    for (i, p) in checkpoints.iter().enumerate() {
        save_checkpoint(p, &ck.join(format!("task_{}.json", i + 1)))?;
    }
    Ok(())
}

fn write_partial(dir: &Path, cfg: &ExperimentConfig, p: &Progress, err: &Error) -> Result<()> {
    write_common(
        dir,
        cfg,
        &p.accuracy,
        &p.loss_log,
        &p.buffer_snapshots,
        &p.test_snapshots,
        &p.checkpoints,
    )?;
    write_text(&dir.join("error.txt"), &format!("{err}\n"))
}

impl ExperimentReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_common(
            dir,
            &self.config,
            &self.accuracy,
            &self.loss_log,
            &self.buffer_snapshots,
            &self.test_snapshots,
            &self.checkpoints,
        )?;
        write_text(&dir.join("metrics.json"), &serde_json::to_string_pretty(&self.metrics)?)
    }

    pub fn final_sigma(&self) -> Option<f64> {
        self.metrics.sigma_per_task.last().copied().flatten()
    }
}
