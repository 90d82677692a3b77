//! `casper train`: one experiment per (method, seed), then an aggregate
//! `summary.csv` and a `manifest.json`.
//!
//! ```text
//! <out>/manifest.json
//! <out>/summary.csv
//! <out>/<method>/seed_<s>/...   per-run report
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use casper_core::replay::{run_seeded, ExperimentReport, Method};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, SeedSpec};
use crate::error::{CliError, CliResult};

/// Enough to rerun a `train` invocation: `train --config manifest.json`
/// reproduces every numeric output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: BenchConfig,
    pub seeds: Vec<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Run directories relative to the output root, in summary order.
    pub runs: Vec<String>,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub seed: u64,
    pub final_average_accuracy: f64,
    pub adjusted_forgetting: Option<f64>,
    pub final_sigma: Option<f64>,
    /// `(k, accuracy)` for every configured k.
    pub knn: Vec<(usize, Option<f64>)>,
    pub intra_class_variance: Option<f64>,
    pub off_diagonal_energy: Option<f64>,
}

impl SummaryRow {
    fn from_report(report: &ExperimentReport, knn_ks: &[usize]) -> Self {
        let m = &report.metrics;
        Self {
            method: report.config.train.method,
            seed: report.config.train.seed,
            final_average_accuracy: m.final_average_accuracy,
            adjusted_forgetting: m.adjusted_forgetting,
            final_sigma: report.final_sigma(),
            knn: knn_ks
                .iter()
                .map(|&k| (k, m.knn_accuracy.get(&k.to_string()).copied()))
                .collect(),
            intra_class_variance: m.intra_class_variance,
            off_diagonal_energy: m.off_diagonal_energy,
        }
    }

    pub fn knn_at(&self, k: usize) -> Option<f64> {
        self.knn.iter().find(|(kk, _)| *kk == k).and_then(|(_, v)| *v)
    }
}

pub fn run_dir_name(method: Method, seed: u64) -> String {
    format!("{}/seed_{seed}", method.name())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow], knn_ks: &[usize]) -> String {
    let mut out = String::from("method,seed,final_average_accuracy,adjusted_forgetting,final_sigma");
    for k in knn_ks {
        out.push_str(&format!(",knn_{k}"));
    }
    out.push_str(",intra_class_variance,off_diagonal_energy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.method.name(),
            r.seed,
            r.final_average_accuracy,
            cell(r.adjusted_forgetting),
            cell(r.final_sigma)
        ));
        for &k in knn_ks {
            out.push(',');
            out.push_str(&cell(r.knn_at(k)));
        }
        out.push_str(&format!(",{},{}\n", cell(r.intra_class_variance), cell(r.off_diagonal_energy)));
    }
    out
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<SummaryRow>,
    pub summary_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs every configured method over `seeds` and writes the reports under
/// `out`. Runs execute in parallel; outputs do not depend on scheduling.
pub fn run_train(cfg: &BenchConfig, seeds: &[u64], out: &Path) -> CliResult<TrainOutcome> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(CliError::Config("no seeds given".into()));
    }
    let started = unix_now();
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let jobs: Vec<(Method, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let knn_ks = &cfg.analysis.knn_ks;
    let results: Vec<CliResult<SummaryRow>> = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let dir = out.join(run_dir_name(method, seed));
            let report = run_seeded(&cfg.experiment(method, seed), Some(&dir)).map_err(|e| {
                CliError::Runtime(format!("{} seed {seed}: {e}", method.name()))
            })?;
            Ok(SummaryRow::from_report(&report, knn_ks))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "))));
    }

    let summary_path = out.join("summary.csv");
    fs::write(&summary_path, summary_csv(&rows, knn_ks)).map_err(|e| CliError::io(&summary_path, e))?;

    let manifest = RunManifest {
        version: format!("casper v{}", env!("CARGO_PKG_VERSION")),
        config: BenchConfig {
            seeds: SeedSpec::List(seeds.to_vec()),
            ..cfg.clone()
        },
        seeds: seeds.to_vec(),
        started_unix: started,
        finished_unix: unix_now(),
        runs: jobs.iter().map(|&(m, s)| run_dir_name(m, s)).collect(),
    };
    let manifest_path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&manifest_path, text).map_err(|e| CliError::io(&manifest_path, e))?;
    Ok(TrainOutcome {
        rows,
        summary_path,
        manifest_path,
    })
}
