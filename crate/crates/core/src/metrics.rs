//! Scalar diagnostics for continual-learning runs.
//!
//! Accuracy-based metrics read an [`AccuracyMatrix`] whose entry `(i, j)` is
//! the accuracy (percent) on the test split of task `i` after training on task
//! `j`, defined for `i <= j`.

use std::collections::BTreeMap;

use log::warn;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EmbeddingBatch, LatentGraph};
use crate::learner::knn_classify;

/// Guards the relative-forgetting ratio against a zero peak.
pub const PEAK_FLOOR: f64 = 1e-9;

/// Lower-triangular task-by-checkpoint accuracy table, filled column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    tasks: usize,
    /// `columns[j][i]` = accuracy on task `i` after task `j`.
    columns: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            columns: Vec::with_capacity(tasks),
        }
    }

    /// Appends the evaluation after the next task: one accuracy per task seen
    /// so far.
    pub fn push_checkpoint(&mut self, row: Vec<f64>) -> Result<()> {
        let j = self.columns.len();
        if j >= self.tasks {
            return Err(Error::InvalidInput(format!("matrix already has {} checkpoints", self.tasks)));
        }
        if row.len() != j + 1 {
            return Err(Error::InvalidInput(format!(
                "checkpoint {j} needs {} accuracies, got {}",
                j + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("accuracy {v} outside [0, 100]")));
        }
        self.columns.push(row);
        Ok(())
    }

    pub fn from_columns(tasks: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new(tasks);
        for c in columns {
            m.push_checkpoint(c)?;
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn is_complete(&self) -> bool {
        self.columns.len() == self.tasks
    }

    /// Accuracy on task `i` after task `j` (0-based), if recorded.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.columns.get(j).and_then(|c| c.get(i)).copied()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Mean accuracy over all tasks after the last one.
pub fn final_average_accuracy(m: &AccuracyMatrix) -> Result<f64> {
    if !m.is_complete() || m.tasks == 0 {
        return Err(Error::InvalidInput(format!(
            "accuracy matrix has {} of {} checkpoints",
            m.columns.len(),
            m.tasks
        )));
    }
    let last = &m.columns[m.tasks - 1];
    Ok(last.iter().sum::<f64>() / last.len() as f64)
}

/// Forgetting relative to each task's peak, bounded to `[0, 100]`.
///
/// For every task but the last, the drop from its best earlier accuracy to
/// its final accuracy is divided by that best accuracy (gains count as zero);
/// the mean ratio is reported in percent. `None` for single-task matrices.
pub fn adjusted_forgetting(m: &AccuracyMatrix) -> Result<Option<f64>> {
    if !m.is_complete() {
        return Err(Error::InvalidInput("accuracy matrix is incomplete".into()));
    }
    let t = m.tasks;
    if t < 2 {
        return Ok(None);
    }
    let last = &m.columns[t - 1];
    let mut total = 0.0;
    for (i, &end) in last.iter().enumerate().take(t - 1) {
        let peak = (i..t - 1)
            .map(|j| m.columns[j][i])
            .fold(f64::NEG_INFINITY, f64::max);
        total += ((peak - end) / peak.max(PEAK_FLOOR)).max(0.0);
    }
    Ok(Some((100.0 * total / (t - 1) as f64).clamp(0.0, 100.0)))
}

/// Total adjacency weight between differently-labelled nodes, over ordered
/// pairs (each undirected edge counts twice).
pub fn label_signal_variation(g: &LatentGraph) -> f64 {
    let labels = g.labels();
    let a = g.adjacency();
    let mut sigma = 0.0;
    for (i, row) in a.axis_iter(Axis(0)).enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if labels[i] != labels[j] {
                sigma += w;
            }
        }
    }
    sigma
}

/// Mean over classes of the mean per-dimension population variance.
/// Classes with a single sample are skipped.
pub fn intra_class_variance(batch: &EmbeddingBatch) -> Result<f64> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in batch.labels().iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut values = Vec::new();
    for (class, rows) in &by_class {
        if rows.len() < 2 {
            warn!("class {class} has a single sample; excluded from intra-class variance");
            continue;
        }
        let feats = batch.features().select(Axis(0), rows);
        let var = feats.var_axis(Axis(0), 0.0);
        values.push(var.mean().expect("dim >= 1"));
    }
    if values.is_empty() {
        return Err(Error::InvalidInput("no class has at least two samples".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Percentage of `queries` whose k-NN prediction over `support` is correct.
pub fn knn_accuracy(support: &EmbeddingBatch, queries: &EmbeddingBatch, k: usize) -> Result<f64> {
    let pred = knn_classify(support.features(), support.labels(), queries.features(), k)?;
    let correct = pred.iter().zip(queries.labels()).filter(|(p, y)| p == y).count();
    Ok(100.0 * correct as f64 / queries.len() as f64)
}
