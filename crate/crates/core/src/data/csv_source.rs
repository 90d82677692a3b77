//! CSV-backed streams.
//!
//! Expected layout: a header row, one label column (default `label`) and
//! numeric feature columns (written as `f0..f{d-1}` by [`write_csv`]).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::data::StreamPair;
use crate::error::{Error, Result};
use crate::replay::{Task, TaskStream};
use crate::rng::{derive, Purpose};

struct RawTable {
    features: Array2<f64>,
    labels: Vec<usize>,
}

/// Labels that all parse as non-negative integers are used as-is; otherwise
/// distinct label strings are coded by their sorted order.
fn code_labels(raw: &[String]) -> Vec<usize> {
    let parsed: Option<Vec<usize>> = raw.iter().map(|s| s.trim().parse().ok()).collect();
    if let Some(ids) = parsed {
        return ids;
    }
    let distinct: BTreeSet<&str> = raw.iter().map(|s| s.trim()).collect();
    let code: BTreeMap<&str, usize> = distinct.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    raw.iter().map(|s| code[s.trim()]).collect()
}

fn read_table(path: &Path, label_column: &str) -> Result<RawTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Load(format!("label column `{label_column}` not found in {}", path.display())))?;
    let width = headers.len() - 1;
    if width == 0 {
        return Err(Error::Load("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Load(format!(
                "row {row_idx}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                if field.trim().is_empty() {
                    return Err(Error::Load(format!("row {row_idx}: missing label")));
                }
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Load(format!(
                    "row {row_idx}, column `{}`: not a number: `{field}`",
                    &headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Load(format!(
                    "row {row_idx}, column `{}`: missing or non-finite value",
                    &headers[col]
                )));
            }
            values.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Load(format!("{} has no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((raw_labels.len(), width), values).expect("rectangular");
    Ok(RawTable {
        features,
        labels: code_labels(&raw_labels),
    })
}

pub(crate) fn ascending_partition(path: &Path, label_column: &str, classes_per_task: usize) -> Result<Vec<Vec<usize>>> {
    if classes_per_task == 0 {
        return Err(Error::InvalidPartition("classes_per_task must be positive".into()));
    }
    let table = read_table(path, label_column)?;
    let classes: Vec<usize> = table.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    Ok(classes.chunks(classes_per_task).map(<[usize]>::to_vec).collect())
}

fn check_partition(partition: &[Vec<usize>], present: &BTreeSet<usize>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (t, classes) in partition.iter().enumerate() {
        if classes.is_empty() {
            return Err(Error::InvalidPartition(format!("task {t} has no classes")));
        }
        for &c in classes {
            if !seen.insert(c) {
                return Err(Error::InvalidPartition(format!("class {c} assigned to more than one task")));
            }
            if !present.contains(&c) {
                return Err(Error::InvalidPartition(format!("class {c} has no rows")));
            }
        }
    }
    if let Some(missing) = present.difference(&seen).next() {
        return Err(Error::InvalidPartition(format!("class {missing} is not assigned to any task")));
    }
    Ok(())
}

/// Loads a CSV into train/test streams.
///
/// Each class is shuffled with `seed` and `round(n · test_fraction)` of its
/// rows (at least one when the class has two or more rows and the fraction
/// is positive) go to the test split. Features are standardized per column
/// with the train split's mean and population standard deviation.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    partition: &[Vec<usize>],
    test_fraction: f64,
    seed: u64,
) -> Result<StreamPair> {
    let table = read_table(path, label_column)?;
    let present: BTreeSet<usize> = table.labels.iter().copied().collect();
    check_partition(partition, &present)?;

    let mut rng = derive(seed, Purpose::Data, 0, 1);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in table.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut is_test = vec![false; table.labels.len()];
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        let mut n_test = (rows.len() as f64 * test_fraction).round() as usize;
        if test_fraction > 0.0 && rows.len() >= 2 {
            n_test = n_test.clamp(1, rows.len() - 1);
        }
        for &r in rows.iter().take(n_test) {
            is_test[r] = true;
        }
    }

    let train_rows: Vec<usize> = (0..is_test.len()).filter(|&i| !is_test[i]).collect();
    let train_feats = table.features.select(Axis(0), &train_rows);
    let mean = train_feats.mean_axis(Axis(0)).expect("train split is non-empty");
    let std = train_feats.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let standardized = (&table.features - &mean) / &std;

    let build = |want_test: bool| -> Result<TaskStream> {
        let mut tasks = Vec::with_capacity(partition.len());
        for classes in partition {
            let rows: Vec<usize> = (0..table.labels.len())
                .filter(|&i| is_test[i] == want_test && classes.contains(&table.labels[i]))
                .collect();
            if rows.is_empty() {
                return Err(Error::Load(format!(
                    "task with classes {classes:?} has no {} rows",
                    if want_test { "test" } else { "train" }
                )));
            }
            let labels = rows.iter().map(|&i| table.labels[i]).collect();
            tasks.push(Task::new(standardized.select(Axis(0), &rows), labels)?);
        }
        TaskStream::new(tasks)
    };
    Ok(StreamPair {
        train: build(false)?,
        test: build(true)?,
    })
}

/// Writes every task of `stream` as `label,f0,…` rows.
pub fn write_csv(stream: &TaskStream, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = stream.input_dim();
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for task in stream.tasks() {
        for (row, &label) in task.inputs.rows().into_iter().zip(&task.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
