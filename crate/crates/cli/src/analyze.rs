//! `casper analyze`: cross-run tables from per-run report directories.
//!
//! ```text
//! sigma_curve.csv       method,task,mean,std,n     buffer-graph σ after each task
//! knn_table.csv         method,k,mean,std,n        buffer-support k-NN accuracy
//! fmap_od_e.csv         method,seed,off_diagonal_energy
//! fmap_summary.csv      method,mean,std,n
//! fmap/<method>/seed_<s>/{fmap.csv,fmap_display.csv,fmap_meta.json}
//! ```
//!
//! Standard deviations are sample deviations (`n − 1`), 0 for a single run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use casper_core::replay::{
    read_snapshot, snapshot_sigma, stream_fmap, ExperimentConfig, Method, MetricsSummary, Snapshot,
};

use crate::error::{CliError, CliResult};

/// One run directory loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub metrics: MetricsSummary,
    pub buffer_snapshots: Vec<Snapshot>,
    pub test_snapshots: Vec<Snapshot>,
}

impl LoadedRun {
    pub fn method(&self) -> Method {
        self.config.train.method
    }

    pub fn seed(&self) -> u64 {
        self.config.train.seed
    }
}

fn is_run_dir(p: &Path) -> bool {
    p.join("config.json").is_file()
}

/// Expands each argument into run directories: a run directory itself, or
/// any directory containing runs up to two levels down (`<method>/seed_<s>`).
pub fn discover_runs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for input in inputs {
        if is_run_dir(input) {
            runs.push(input.clone());
            continue;
        }
        if !input.is_dir() {
            return Err(CliError::Runtime(format!("{} is not a directory", input.display())));
        }
        let mut found = Vec::new();
        for level1 in sorted_subdirs(input)? {
            if is_run_dir(&level1) {
                found.push(level1);
            } else {
                found.extend(sorted_subdirs(&level1)?.into_iter().filter(|d| is_run_dir(d)));
            }
        }
        if found.is_empty() {
            return Err(CliError::Runtime(format!("no run reports under {}", input.display())));
        }
        runs.extend(found);
    }
    Ok(runs)
}

fn sorted_subdirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn snapshot_files(dir: &Path) -> Vec<PathBuf> {
    (1..)
        .map(|i| dir.join(format!("task_{i}.csv")))
        .take_while(|p| p.is_file())
        .collect()
}

/// Loads a run, or lists what it is missing.
pub fn load_run(dir: &Path) -> CliResult<LoadedRun> {
    let mut missing = Vec::new();
    for f in ["config.json", "metrics.json"] {
        if !dir.join(f).is_file() {
            missing.push(f.to_string());
        }
    }
    let buffer = snapshot_files(&dir.join("buffer_snapshots"));
    let test = snapshot_files(&dir.join("test_snapshots"));
    if buffer.is_empty() {
        missing.push("buffer_snapshots/task_1.csv".into());
    }
    if test.is_empty() {
        missing.push("test_snapshots/task_1.csv".into());
    }
    if !missing.is_empty() {
        return Err(CliError::Runtime(format!("{} is missing {}", dir.display(), missing.join(", "))));
    }
    let read_all = |files: &[PathBuf]| -> CliResult<Vec<Snapshot>> {
        files
            .iter()
            .map(|p| read_snapshot(p).map_err(CliError::from))
            .collect()
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config: read_json(&dir.join("config.json"))?,
        metrics: read_json(&dir.join("metrics.json"))?,
        buffer_snapshots: read_all(&buffer)?,
        test_snapshots: read_all(&test)?,
    })
}

/// `(mean, sample std, n)`.
pub fn mean_std(values: &[f64]) -> (f64, f64, usize) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std, n)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    /// Runs left out of the functional-map comparison, with the reason.
    pub fmap_skipped: Vec<(PathBuf, String)>,
    /// Mean off-diagonal energy per method.
    pub od_e: BTreeMap<Method, f64>,
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn run_analyze(inputs: &[PathBuf], out: &Path) -> CliResult<AnalyzeOutcome> {
    let dirs = discover_runs(inputs)?;
    let mut runs = Vec::with_capacity(dirs.len());
    let mut problems = Vec::new();
    for d in &dirs {
        match load_run(d) {
            Ok(r) => runs.push(r),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Runtime(problems.join("\n")));
    }
    runs.sort_by_key(|r| (r.method(), r.seed()));
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    // σ per task
    let mut sigma: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (i, s) in r.buffer_snapshots.iter().enumerate() {
            if let Some(v) = snapshot_sigma(s, r.config.analysis.graph_k)? {
                sigma.entry((r.method(), i + 1)).or_default().push(v);
            }
        }
    }
    let mut text = String::from("method,task,mean,std,n\n");
    for ((m, task), vals) in &sigma {
        let (mean, std, n) = mean_std(vals);
        text.push_str(&format!("{},{task},{mean},{std},{n}\n", m.name()));
    }
    write(&out.join("sigma_curve.csv"), &text)?;

    // k-NN table
    let mut knn: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in &r.metrics.knn_accuracy {
            let k: usize = k
                .parse()
                .map_err(|_| CliError::Runtime(format!("{}: bad k-NN key `{k}`", r.dir.display())))?;
            knn.entry((r.method(), k)).or_default().push(*v);
        }
    }
    let mut text = String::from("method,k,mean,std,n\n");
    for ((m, k), vals) in &knn {
        let (mean, std, n) = mean_std(vals);
        text.push_str(&format!("{},{k},{mean},{std},{n}\n", m.name()));
    }
    write(&out.join("knn_table.csv"), &text)?;

    // functional maps, mid-stream vs final
    let mut skipped = Vec::new();
    let mut per_run = String::from("method,seed,off_diagonal_energy\n");
    let mut od_e: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        match stream_fmap(&r.test_snapshots, &r.config.analysis)? {
            Some(report) => {
                report.write(&out.join("fmap").join(r.method().name()).join(format!("seed_{}", r.seed())))?;
                let e = report.meta.off_diagonal_energy;
                per_run.push_str(&format!("{},{},{e}\n", r.method().name(), r.seed()));
                od_e.entry(r.method()).or_default().push(e);
            }
            None => skipped.push((
                r.dir.clone(),
                "single-task run has no mid-stream checkpoint to compare against".to_string(),
            )),
        }
    }
    if od_e.is_empty() {
        return Err(CliError::Runtime(
            "functional-map comparison refused: every run is single-task, so there is no mid-stream checkpoint"
                .into(),
        ));
    }
    write(&out.join("fmap_od_e.csv"), &per_run)?;
    let mut text = String::from("method,mean,std,n\n");
    let mut means = BTreeMap::new();
    for (m, vals) in &od_e {
        let (mean, std, n) = mean_std(vals);
        text.push_str(&format!("{},{mean},{std},{n}\n", m.name()));
        means.insert(*m, mean);
    }
    write(&out.join("fmap_summary.csv"), &text)?;
    Ok(AnalyzeOutcome {
        fmap_skipped: skipped,
        od_e: means,
    })
}
