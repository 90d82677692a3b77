//! The continual-learning harness: task streams, the reservoir buffer and the
//! training loop.

mod buffer;
mod experiment;
mod stream;
mod train;

pub use buffer::{Exemplar, ReplayBuffer};
pub use experiment::{
    mid_checkpoint, probe_points, read_snapshot, run_experiment, run_seeded, snapshot_sigma,
    stream_fmap, write_snapshot, AnalysisConfig, ExperimentConfig, ExperimentReport,
    MetricsSummary, ModelSpec, Snapshot,
};
pub use stream::{Task, TaskStream};
pub use train::{evaluate, predict, train_task, Learner, Method, StepLog, TrainConfig};
