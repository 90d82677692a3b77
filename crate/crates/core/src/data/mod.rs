//! Class-incremental datasets: synthetic generators and CSV loading.
//!
//! Classes are split into tasks in ascending class-id order, `classes_per_task`
//! at a time, unless an explicit partition is given for CSV data.

mod csv_source;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use csv_source::{load_csv, write_csv};
pub use synthetic::{concentric_rings, gaussian_blobs};

use crate::error::{Error, Result};
use crate::replay::TaskStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GaussianBlobs,
    ConcentricRings,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub generator: Generator,
    pub num_classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Minimum distance between class centres (blobs) or ring spacing.
    pub separation: f64,
    /// Standard deviation of the isotropic per-point noise.
    pub noise: f64,
    pub num_tasks: usize,
    pub classes_per_task: usize,
    /// Fixed dataset seed; when absent the experiment's run seed is used.
    pub seed: Option<u64>,
    pub csv_path: Option<PathBuf>,
    pub label_column: String,
    /// Explicit class-to-task partition for CSV data.
    pub partition: Option<Vec<Vec<usize>>>,
    /// Fraction of each class held out for testing (CSV data).
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            generator: Generator::GaussianBlobs,
            num_classes: 10,
            dim: 16,
            train_per_class: 100,
            test_per_class: 100,
            separation: 4.0,
            noise: 1.0,
            num_tasks: 5,
            classes_per_task: 2,
            seed: None,
            csv_path: None,
            label_column: "label".into(),
            partition: None,
            test_fraction: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generator == Generator::Csv {
            if self.csv_path.is_none() {
                return Err(Error::InvalidParameter("csv generator needs csv_path".into()));
            }
            if !(0.0..1.0).contains(&self.test_fraction) {
                return Err(Error::InvalidParameter(format!(
                    "test_fraction must be in [0, 1), got {}",
                    self.test_fraction
                )));
            }
            return Ok(());
        }
        if self.num_classes != self.num_tasks * self.classes_per_task {
            return Err(Error::InvalidParameter(format!(
                "num_classes = {} must equal num_tasks * classes_per_task = {} * {}",
                self.num_classes, self.num_tasks, self.classes_per_task
            )));
        }
        if self.num_tasks == 0 || self.classes_per_task == 0 {
            return Err(Error::InvalidParameter("need at least one task and one class per task".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise must be >= 0, got {}", self.noise)));
        }
        if self.dim == 0 || self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidParameter(
                "dim and per-class sample counts must be positive".into(),
            ));
        }
        if self.generator == Generator::ConcentricRings && self.dim < 2 {
            return Err(Error::InvalidParameter("concentric rings need dim >= 2".into()));
        }
        Ok(())
    }

    /// Classes of each task when classes are split in ascending order.
    pub fn default_partition(&self) -> Vec<Vec<usize>> {
        (0..self.num_tasks)
            .map(|t| (t * self.classes_per_task..(t + 1) * self.classes_per_task).collect())
            .collect()
    }
}

/// Train and test streams with identical task partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPair {
    pub train: TaskStream,
    pub test: TaskStream,
}

/// Builds the streams described by `cfg`, seeded by `cfg.seed` (0 if absent).
pub fn generate(cfg: &DatasetConfig) -> Result<StreamPair> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(0);
    match cfg.generator {
        Generator::GaussianBlobs => gaussian_blobs(cfg, seed),
        Generator::ConcentricRings => concentric_rings(cfg, seed),
        Generator::Csv => {
            let path = cfg.csv_path.as_ref().expect("validated");
            let partition = match &cfg.partition {
                Some(p) => p.clone(),
                None => csv_source::ascending_partition(path, &cfg.label_column, cfg.classes_per_task)?,
            };
            load_csv(path, &cfg.label_column, &partition, cfg.test_fraction, seed)
        }
    }
}
