//! Benchmark configuration files and dotted-path overrides.
//!
//! ```toml
//! methods = ["er", "er_casper"]
//! seeds = "1..10"
//!
//! [data]
//! separation = 4.0
//!
//! [train]
//! lr = 0.1
//!
//! [casper]
//! rho = 3.0
//! ```
//!
//! Every section is optional and falls back to the library defaults.

use std::fs;
use std::path::Path;

use casper_core::data::DatasetConfig;
use casper_core::replay::{AnalysisConfig, ExperimentConfig, Method, ModelSpec, TrainConfig};
use casper_core::spectral::CasperConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::train::RunManifest;

/// Optimizer and buffer settings shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub buffer_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            buffer_size: t.buffer_size,
        }
    }
}

/// Either an explicit list or an inclusive range such as `"1..10"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Text(String),
}

impl SeedSpec {
    pub fn resolve(&self) -> CliResult<Vec<u64>> {
        match self {
            SeedSpec::List(v) if v.is_empty() => Err(CliError::Config("seed list is empty".into())),
            SeedSpec::List(v) => Ok(v.clone()),
            SeedSpec::Text(s) => parse_seeds(s),
        }
    }
}

/// Parses `"a..b"` or `"a..=b"` (both inclusive), `"a"` or `"a,b,c"`.
pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Config(format!("cannot parse seeds `{s}`; expected e.g. `1..5` or `1,2,3`"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(num).collect::<CliResult<Vec<_>>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub seeds: SeedSpec,
    pub data: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainSection,
    pub casper: CasperConfig,
    pub analysis: AnalysisConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Er, Method::ErCasper],
            seeds: SeedSpec::List(vec![1]),
            data: DatasetConfig::default(),
            model: ModelSpec::default(),
            train: TrainSection::default(),
            casper: CasperConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl BenchConfig {
    /// The experiment for one method and seed.
    pub fn experiment(&self, method: Method, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            data: self.data.clone(),
            model: self.model.clone(),
            train: TrainConfig {
                method,
                lr: self.train.lr,
                batch_size: self.train.batch_size,
                epochs: self.train.epochs,
                buffer_size: self.train.buffer_size,
                casper: self.casper.clone(),
                seed,
            },
            analysis: self.analysis.clone(),
        }
    }

    /// Validates every method's experiment.
    pub fn validate(&self) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods configured".into()));
        }
        self.seeds.resolve()?;
        for &m in &self.methods {
            self.experiment(m, 0)
                .validate()
                .map_err(|e| CliError::Config(format!("method {}: {e}", m.name())))?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config, or the `config` of a `manifest.json` written by a
    /// previous run.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str::<RunManifest>(&text)
                .map(|m| m.config)
                .map_err(|e| CliError::Config(e.to_string()))
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies `key.path=value` overrides. Values are parsed as TOML
    /// literals, falling back to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> CliResult<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Table::try_from(self)
            .map_err(|e| CliError::Config(format!("cannot re-serialize config: {e}")))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
            let key = key.trim();
            set_path(&mut root, key, parse_value(raw.trim()))?;
            // deserialize after each override so errors name the offending key
            toml::Value::Table(root.clone())
                .try_into::<BenchConfig>()
                .map_err(|e| CliError::Config(format!("override `{key}`: {}", e.message())))?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = match table.get_mut(*part) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CliError::Config(format!("override `{key}`: `{part}` is not a section"))),
            None => return Err(CliError::Config(format!("override `{key}`: unknown key `{part}`"))),
        };
    }
    let leaf = parts[parts.len() - 1];
    // integers are accepted where the current value is a float
    let value = match (table.get(leaf), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(leaf.to_string(), value);
    Ok(())
}
