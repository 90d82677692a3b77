use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{backward_and_step, cross_entropy_with_grad, forward, LossGrads, ModelParams};
use crate::replay::buffer::{Exemplar, ReplayBuffer};
use crate::replay::stream::{Task, TaskStream};
use crate::rng::{derive, Purpose};
use crate::spectral::{casper_batch_loss, CasperConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Experience replay.
    Er,
    /// Experience replay plus the eigengap regularizer.
    ErCasper,
    /// Sequential training without replay (lower bound).
    Finetune,
    /// All tasks merged into one (upper bound).
    Joint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Er => "er",
            Method::ErCasper => "er_casper",
            Method::Finetune => "finetune",
            Method::Joint => "joint",
        }
    }

    pub fn replays(self) -> bool {
        matches!(self, Method::Er | Method::ErCasper)
    }

    pub fn regularizes(self) -> bool {
        self == Method::ErCasper
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "er" => Ok(Method::Er),
            "er_casper" => Ok(Method::ErCasper),
            "finetune" => Ok(Method::Finetune),
            "joint" => Ok(Method::Joint),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub buffer_size: usize,
    pub casper: CasperConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::ErCasper,
            lr: 0.05,
            batch_size: 32,
            epochs: 30,
            buffer_size: 100,
            casper: CasperConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter("batch_size and epochs must be positive".into()));
        }
        if self.method.replays() && self.buffer_size == 0 {
            return Err(Error::InvalidParameter(format!(
                "method {} needs a positive buffer_size",
                self.method.name()
            )));
        }
        self.casper.validate()
    }

    fn casper_active(&self) -> bool {
        self.method.regularizes() && self.casper.rho > 0.0
    }
}

/// Loss components of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub task: usize,
    pub epoch: usize,
    pub loss_stream: f64,
    pub loss_buffer: f64,
    pub loss_casper: f64,
    /// `loss_stream + loss_buffer + rho * loss_casper`.
    pub total: f64,
}

/// Running state threaded through consecutive tasks.
#[derive(Debug, Clone)]
pub struct Learner {
    pub model: ModelParams,
    pub buffer: ReplayBuffer<Exemplar>,
    pub step: u64,
}

fn rows_of(task: &Task, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    (
        task.inputs.select(Axis(0), idx),
        idx.iter().map(|&i| task.labels[i]).collect(),
    )
}

/// Buffer rows grouped by class, with each class's row positions in the buffer.
fn group_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Trains on one task, optimizing
/// `ℓ_stream + ℓ_buffer + ρ·ℓ_casper` with one SGD step per stream batch.
///
/// Every stream item is offered to the reservoir once, during the first
/// epoch, after the step that used it.
pub fn train_task(
    state: &mut Learner,
    task: &Task,
    task_index: usize,
    cfg: &TrainConfig,
) -> Result<Vec<StepLog>> {
    cfg.validate()?;
    let t = task_index as u32;
    let mut replay_rng = derive(cfg.seed, Purpose::Replay, t, 0);
    let mut reservoir_rng = derive(cfg.seed, Purpose::Reservoir, t, 0);
    let mut casper_rng = derive(cfg.seed, Purpose::Casper, t, 0);
    let rho = cfg.casper.rho;

    let mut logs = Vec::new();
    let mut order: Vec<usize> = (0..task.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = derive(cfg.seed, Purpose::Shuffle, t, epoch as u32);
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(cfg.batch_size) {
            let (stream_x, stream_y) = rows_of(task, chunk);
            let n_stream = stream_y.len();

            let mut blocks = vec![stream_x];
            let mut replay_y = Vec::new();
            if cfg.method.replays() && !state.buffer.is_empty() {
                let idx = state.buffer.sample_indices(n_stream, &mut replay_rng);
                let items = state.buffer.items();
                let dim = task.inputs.ncols();
                let mut flat = Vec::with_capacity(idx.len() * dim);
                for &i in &idx {
                    flat.extend(items[i].input.iter().copied());
                    replay_y.push(items[i].label);
                }
                blocks.push(Array2::from_shape_vec((idx.len(), dim), flat).expect("buffer rows share width"));
            }
            let n_replay = replay_y.len();

            // Whole buffer, forwarded through the live extractor.
            let mut casper_rows = None;
            if cfg.casper_active() && !state.buffer.is_empty() {
                let (bx, by) = state.buffer.to_arrays()?;
                blocks.push(bx);
                casper_rows = Some(by);
            }

            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            let inputs = concatenate(Axis(0), &views).expect("blocks share width");
            let trace = forward(&state.model, inputs.view())?;

            let mut dlogits = Array2::zeros(trace.logits.raw_dim());
            let (loss_stream, g_stream) =
                cross_entropy_with_grad(trace.logits.slice(s![..n_stream, ..]), &stream_y)?;
            dlogits.slice_mut(s![..n_stream, ..]).assign(&g_stream);
            let mut loss_buffer = 0.0;
            if n_replay > 0 {
                let span = s![n_stream..n_stream + n_replay, ..];
                let (l, g) = cross_entropy_with_grad(trace.logits.slice(span), &replay_y)?;
                dlogits.slice_mut(span).assign(&g);
                loss_buffer = l;
            }

            let mut loss_casper = 0.0;
            let mut dfeatures = None;
            if let Some(buffer_labels) = casper_rows {
                let offset = n_stream + n_replay;
                let feats = trace.features.slice(s![offset.., ..]);
                let groups = group_by_class(&buffer_labels);
                let by_class: BTreeMap<usize, Array2<f64>> = groups
                    .iter()
                    .map(|(&c, rows)| (c, feats.select(Axis(0), rows)))
                    .collect();
                match casper_batch_loss(&by_class, &cfg.casper, &mut casper_rng) {
                    Ok(out) => {
                        loss_casper = out.loss;
                        let mut df = Array2::zeros(trace.features.raw_dim());
                        for (class, rows) in &groups {
                            let g = &out.grads[class];
                            for (local, &row) in rows.iter().enumerate() {
                                df.row_mut(offset + row).scaled_add(rho, &g.row(local));
                            }
                        }
                        dfeatures = Some(df);
                    }
                    Err(Error::InsufficientClasses { .. }) => {}
                    Err(e) => return Err(e),
                }
            }

            let total = loss_stream + loss_buffer + rho * loss_casper;
            if !total.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at step {} (task {task_index}, epoch {epoch})",
                    state.step
                )));
            }
            let grads = LossGrads {
                logits: dlogits,
                features: dfeatures,
            };
            state.model = backward_and_step(&state.model, &trace, &grads, cfg.lr)?;
            logs.push(StepLog {
                step: state.step,
                task: task_index,
                epoch,
                loss_stream,
                loss_buffer,
                loss_casper,
                total,
            });
            state.step += 1;

            if epoch == 0 {
                for &i in chunk {
                    let item = Exemplar {
                        input: task.inputs.row(i).to_owned(),
                        label: task.labels[i],
                    };
                    state.buffer.offer(item, &mut reservoir_rng);
                }
            }
        }
    }
    Ok(logs)
}

/// Class-IL predictions: argmax over every class logit (lowest index on ties).
pub fn predict(model: &ModelParams, inputs: ndarray::ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let trace = forward(model, inputs)?;
    Ok(trace
        .logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Accuracy (percent) on the test split of each task `0..=upto`.
pub fn evaluate(model: &ModelParams, stream: &TaskStream, upto: usize) -> Result<Vec<f64>> {
    if upto >= stream.len() {
        return Err(Error::InvalidInput(format!(
            "cannot evaluate up to task {upto} of a {}-task stream",
            stream.len()
        )));
    }
    stream.tasks()[..=upto]
        .iter()
        .map(|task| {
            let pred = predict(model, task.inputs.view())?;
            let correct = pred.iter().zip(&task.labels).filter(|(p, y)| p == y).count();
            Ok(100.0 * correct as f64 / task.len() as f64)
        })
        .collect()
}
