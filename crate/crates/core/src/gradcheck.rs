//! Central finite-difference checks of the analytic gradients.
//!
//! Two suites run on random instances:
//!
//! - **features**: the eigengap loss against the embedding matrix, with the
//!   k-NN edge set frozen at the unperturbed point;
//! - **model**: `CE + ρ·ℓ_casper(features)` through a two-layer MLP against
//!   every parameter.
//!
//! The error of one instance is `‖a − f‖ / max(‖a‖, ‖f‖, 1e-8)` over the
//! whole gradient. Instances sitting on a non-differentiable point
//! (repeated eigenvalues at the cut, a cosine at the edge-weight floor, a
//! pre-activation at the ReLU hinge) are redrawn.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{cosine_matrix, knn_topology, EmbeddingBatch, KnnTopology, EDGE_FLOOR};
use crate::learner::{
    backward, cross_entropy, cross_entropy_with_grad, forward, LossGrads, ModelConfig, ModelParams,
};
use crate::rng::{derive, Purpose};
use crate::spectral::{casper_grad_on_topology, casper_loss_on_topology};

/// Margin kept from every kink so that a step of `h` cannot cross it.
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS_PER_INSTANCE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    /// Accepted instances per suite.
    pub instances: usize,
    pub step: f64,
    pub seed: u64,
    /// Weight of the eigengap term in the model suite.
    pub rho: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            step: 1e-5,
            seed: 0,
            rho: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub instances: usize,
    /// Draws rejected for sitting too close to a kink.
    pub redrawn: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub features: SuiteResult,
    pub model: SuiteResult,
}

impl GradcheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.features.max_relative_error.max(self.model.max_relative_error)
    }
}

/// `‖a − f‖ / max(‖a‖, ‖f‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, f)| a - f));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(1e-8);
    diff / scale
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// True when some selected edge's cosine sits within the margin of the
/// weight floor.
fn near_floor(batch: &EmbeddingBatch, topo: &KnnTopology) -> bool {
    let cos = cosine_matrix(batch.features());
    topo.pairs()
        .iter()
        .any(|&(i, j)| (cos[[i, j]] - EDGE_FLOOR).abs() < KINK_MARGIN)
}

/// Central differences of `f` over every coordinate of `x`.
fn central_differences(
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn features_instance<R: Rng + ?Sized>(rng: &mut R, h: f64) -> Result<Option<f64>> {
    let n = rng.random_range(8..=24);
    let d = rng.random_range(4..=16);
    let k = rng.random_range(2..=5);
    let g = rng.random_range(2..=4);
    let labels = (0..n).map(|i| i % g).collect::<Vec<_>>();
    let batch = EmbeddingBatch::new(gaussian(rng, n, d), labels.clone())?;
    let topo = knn_topology(&batch, k)?;
    let analytic = casper_grad_on_topology(&batch, &topo, g)?;
    if analytic.degenerate || near_floor(&batch, &topo) {
        return Ok(None);
    }
    let x = batch.features().iter().copied().collect::<Vec<_>>();
    let numeric = central_differences(&x, h, |p| {
        let f = Array2::from_shape_vec((n, d), p.to_vec()).expect("shape preserved");
        casper_loss_on_topology(&EmbeddingBatch::new(f, labels.clone())?, &topo, g)
    })?;
    let a = analytic.grad.iter().copied().collect::<Vec<_>>();
    Ok(Some(relative_error(&a, &numeric)))
}

/// Loss of the model suite with the edge set held at `topo`.
fn model_loss(
    params: &ModelParams,
    inputs: &Array2<f64>,
    labels: &[usize],
    topo: &KnnTopology,
    g: usize,
    rho: f64,
) -> Result<f64> {
    let trace = forward(params, inputs.view())?;
    let ce = cross_entropy(trace.logits.view(), labels)?;
    let batch = EmbeddingBatch::new(trace.features, labels.to_vec())?;
    Ok(ce + rho * casper_loss_on_topology(&batch, topo, g)?)
}

fn model_instance<R: Rng + ?Sized>(rng: &mut R, h: f64, rho: f64) -> Result<Option<f64>> {
    let n = rng.random_range(8..=16);
    let g = rng.random_range(2..=4);
    let k = rng.random_range(2..=4);
    let config = ModelConfig {
        input_dim: rng.random_range(3..=6),
        hidden: vec![rng.random_range(6..=10), rng.random_range(4..=6)],
        num_classes: g + 1,
    };
    let params = ModelParams::init(config.clone(), rng)?;
    let inputs = gaussian(rng, n, config.input_dim);
    let labels = (0..n).map(|i| i % g).collect::<Vec<_>>();

    let trace = forward(&params, inputs.view())?;
    if trace
        .pre_activations
        .iter()
        .any(|z| z.iter().any(|v| v.abs() < KINK_MARGIN))
    {
        return Ok(None);
    }
    let batch = EmbeddingBatch::new(trace.features.clone(), labels.clone())?;
    let topo = knn_topology(&batch, k)?;
    let casper = casper_grad_on_topology(&batch, &topo, g)?;
    if casper.degenerate || near_floor(&batch, &topo) {
        return Ok(None);
    }
    let (_, dlogits) = cross_entropy_with_grad(trace.logits.view(), &labels)?;
    let grads = LossGrads {
        logits: dlogits,
        features: Some(casper.grad * rho),
    };
    let analytic = backward(&params, &trace, &grads)?.to_flat();
    let numeric = central_differences(&params.to_flat(), h, |p| {
        let perturbed = ModelParams::from_flat(config.clone(), p)?;
        model_loss(&perturbed, &inputs, &labels, &topo, g, rho)
    })?;
    Ok(Some(relative_error(&analytic, &numeric)))
}

fn run_suite<R: Rng + ?Sized>(
    rng: &mut R,
    instances: usize,
    mut draw: impl FnMut(&mut R) -> Result<Option<f64>>,
) -> Result<SuiteResult> {
    let mut result = SuiteResult {
        instances: 0,
        redrawn: 0,
        max_relative_error: 0.0,
    };
    while result.instances < instances {
        match draw(rng)? {
            Some(e) => {
                result.instances += 1;
                result.max_relative_error = result.max_relative_error.max(e);
            }
            None => {
                result.redrawn += 1;
                if result.redrawn > MAX_DRAWS_PER_INSTANCE * instances {
                    return Err(Error::Generation(format!(
                        "only {} of {instances} differentiable instances after {} draws",
                        result.instances, result.redrawn
                    )));
                }
            }
        }
    }
    Ok(result)
}

/// Runs both suites.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.instances == 0 || cfg.step.is_nan() || cfg.step <= 0.0 {
        return Err(Error::InvalidParameter("instances and step must be positive".into()));
    }
    let h = cfg.step;
    let features = run_suite(&mut derive(cfg.seed, Purpose::Analysis, 0, 0), cfg.instances, |r| {
        features_instance(r, h)
    })?;
    let model = run_suite(&mut derive(cfg.seed, Purpose::Analysis, 0, 1), cfg.instances, |r| {
        model_instance(r, h, cfg.rho)
    })?;
    Ok(GradcheckReport { features, model })
}
