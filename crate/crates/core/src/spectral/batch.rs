//! Monte Carlo sub-graph estimator.
//!
//! Building the graph over the whole buffer every step is wasteful, so each
//! step draws `mc_samples` sub-graphs: `p` distinct classes, then `t`
//! exemplars from each, and enforces the eigengap at `p` on each sub-graph.
//! The estimate is the mean loss; gradients are accumulated with weight
//! `1 / mc_samples`.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EmbeddingBatch, DEFAULT_K};
use crate::spectral::loss::casper_loss_and_grad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CasperConfig {
    /// Weight of the eigengap term in the total objective.
    pub rho: f64,
    /// Classes per sub-graph.
    pub p: usize,
    /// Exemplars per class in a sub-graph.
    pub t: usize,
    pub mc_samples: usize,
    pub k: usize,
}

impl Default for CasperConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            p: 4,
            t: 8,
            mc_samples: 2,
            k: DEFAULT_K,
        }
    }
}

impl CasperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be >= 0, got {}", self.rho)));
        }
        if self.p < 2 || self.t < 2 {
            return Err(Error::InvalidParameter(format!(
                "need p >= 2 and t >= 2, got p = {}, t = {}",
                self.p, self.t
            )));
        }
        if self.mc_samples == 0 || self.k == 0 {
            return Err(Error::InvalidParameter(
                "mc_samples and k must be positive".into(),
            ));
        }
        if self.p * self.t < self.k + 1 {
            return Err(Error::InvalidParameter(format!(
                "sub-graphs of p*t = {} nodes cannot host k = {} neighbours",
                self.p * self.t,
                self.k
            )));
        }
        Ok(())
    }
}

/// One drawn sub-graph: `(class, row)` per node, in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSample {
    pub nodes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct BatchCasper {
    /// Mean sub-graph loss.
    pub loss: f64,
    /// Per class, a gradient with the same shape as that class's feature
    /// matrix. Rows never sampled are zero.
    pub grads: BTreeMap<usize, Array2<f64>>,
    pub samples: Vec<SubgraphSample>,
    /// Number of sub-graphs whose cut eigenvalue was degenerate.
    pub degenerate: usize,
}

impl BatchCasper {
    /// `(class, row)` of every exemplar that appeared in some sub-graph.
    pub fn sampled_exemplars(&self) -> BTreeSet<(usize, usize)> {
        self.samples
            .iter()
            .flat_map(|s| s.nodes.iter().copied())
            .collect()
    }
}

/// Draws the sub-graph node sets without evaluating anything.
pub fn draw_subgraphs<R: Rng + ?Sized>(
    class_sizes: &BTreeMap<usize, usize>,
    cfg: &CasperConfig,
    rng: &mut R,
) -> Result<Vec<SubgraphSample>> {
    let eligible: Vec<usize> = class_sizes
        .iter()
        .filter(|(_, &size)| size >= cfg.t)
        .map(|(&class, _)| class)
        .collect();
    if eligible.len() < cfg.p {
        return Err(Error::InsufficientClasses {
            needed: cfg.p,
            per_class: cfg.t,
            available: eligible.len(),
        });
    }
    let mut samples = Vec::with_capacity(cfg.mc_samples);
    for _ in 0..cfg.mc_samples {
        let mut classes: Vec<usize> = index::sample(rng, eligible.len(), cfg.p)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        classes.sort_unstable();
        let mut nodes = Vec::with_capacity(cfg.p * cfg.t);
        for class in classes {
            let size = class_sizes[&class];
            nodes.extend(index::sample(rng, size, cfg.t).into_iter().map(|row| (class, row)));
        }
        samples.push(SubgraphSample { nodes });
    }
    Ok(samples)
}

/// Monte Carlo eigengap loss over class-grouped features.
pub fn casper_batch_loss<R: Rng + ?Sized>(
    features_by_class: &BTreeMap<usize, Array2<f64>>,
    cfg: &CasperConfig,
    rng: &mut R,
) -> Result<BatchCasper> {
    cfg.validate()?;
    let sizes: BTreeMap<usize, usize> = features_by_class
        .iter()
        .map(|(&c, f)| (c, f.nrows()))
        .collect();
    let samples = draw_subgraphs(&sizes, cfg, rng)?;
    let weight = 1.0 / cfg.mc_samples as f64;

    let mut grads: BTreeMap<usize, Array2<f64>> = features_by_class
        .iter()
        .map(|(&c, f)| (c, Array2::zeros(f.raw_dim())))
        .collect();
    let mut loss = 0.0;
    let mut degenerate = 0;
    for sample in &samples {
        let rows: Vec<_> = sample
            .nodes
            .iter()
            .map(|&(class, row)| features_by_class[&class].row(row))
            .collect();
        let features = ndarray::stack(Axis(0), &rows)
            .map_err(|e| Error::InvalidInput(format!("ragged class features: {e}")))?;
        let labels = sample.nodes.iter().map(|&(class, _)| class).collect();
        let batch = EmbeddingBatch::new(features, labels)?;
        let out = casper_loss_and_grad(&batch, cfg.k, cfg.p)?;
        loss += weight * out.loss;
        degenerate += usize::from(out.degenerate);
        for (node, &(class, row)) in sample.nodes.iter().enumerate() {
            if let Some(g) = grads.get_mut(&class) {
                g.row_mut(row).scaled_add(weight, &out.grad.row(node));
            }
        }
    }
    Ok(BatchCasper {
        loss,
        grads,
        samples,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sizes(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn config_validation() {
        assert!(CasperConfig::default().validate().is_ok());
        let bad = CasperConfig { p: 1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CasperConfig { p: 2, t: 2, k: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CasperConfig { rho: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_classes_are_not_eligible() {
        let cfg = CasperConfig { p: 2, t: 3, k: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = draw_subgraphs(&sizes(&[(0, 5), (1, 2)]), &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InsufficientClasses { available: 1, .. }));
    }

    #[test]
    fn draws_distinct_classes_and_rows() {
        let cfg = CasperConfig { p: 3, t: 4, k: 3, mc_samples: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = draw_subgraphs(&sizes(&[(0, 6), (2, 9), (5, 4), (7, 10), (8, 1)]), &cfg, &mut rng).unwrap();
        assert_eq!(samples.len(), 5);
        for s in samples {
            assert_eq!(s.nodes.len(), 12);
            let classes: BTreeSet<usize> = s.nodes.iter().map(|n| n.0).collect();
            assert_eq!(classes.len(), 3);
            assert!(!classes.contains(&8));
            let unique: BTreeSet<_> = s.nodes.iter().collect();
            assert_eq!(unique.len(), 12);
        }
    }
}
