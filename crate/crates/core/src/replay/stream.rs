use std::collections::BTreeSet;

use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};

/// One task: inputs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Task {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::InvalidInput("task has no examples".into()));
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} inputs",
                labels.len(),
                inputs.nrows()
            )));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }
}

/// Ordered tasks with pairwise-disjoint label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    tasks: Vec<Task>,
}

impl TaskStream {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidInput("stream has no tasks".into()));
        }
        let dim = tasks[0].inputs.ncols();
        let mut seen = BTreeSet::new();
        for (i, task) in tasks.iter().enumerate() {
            if task.inputs.ncols() != dim {
                return Err(Error::InvalidInput(format!(
                    "task {i} has input width {}, expected {dim}",
                    task.inputs.ncols()
                )));
            }
            for class in task.classes() {
                if !seen.insert(class) {
                    return Err(Error::InvalidPartition(format!(
                        "class {class} appears in more than one task"
                    )));
                }
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks[0].inputs.ncols()
    }

    pub fn classes(&self) -> BTreeSet<usize> {
        self.tasks.iter().flat_map(|t| t.classes()).collect()
    }

    /// All tasks merged into one, in task order.
    pub fn merged(&self) -> Task {
        let views: Vec<_> = self.tasks.iter().map(|t| t.inputs.view()).collect();
        let inputs = concatenate(Axis(0), &views).expect("tasks share input width");
        let labels = self.tasks.iter().flat_map(|t| t.labels.iter().copied()).collect();
        Task { inputs, labels }
    }
}
