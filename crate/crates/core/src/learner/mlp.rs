use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the network: `input_dim → hidden[0] → … → hidden[last]` with
/// ReLU after every extractor layer, then a linear head to `num_classes`.
/// An empty `hidden` makes the extractor the identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Affine map `x W + b`, `W` stored as `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..=a)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub extractor: Vec<Layer>,
    pub head: Layer,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let extractor = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::glorot(i, o, rng))
            .collect();
        let head = Layer::glorot(config.feature_dim(), config.num_classes, rng);
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let extractor = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        let head = Layer::zeros(config.feature_dim(), config.num_classes);
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Layer::param_count).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.extractor.iter().chain(std::iter::once(&self.head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.extractor.iter_mut().chain(std::iter::once(&mut self.head))
    }

    /// Parameters in layer order, each layer's weight (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn from_flat(config: ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if flat.len() != params.param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                params.param_count(),
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        let mut values = flat.iter().copied();
        for layer in params.layers_mut() {
            for (dst, src) in layer.weight.iter_mut().chain(layer.bias.iter_mut()).zip(&mut values) {
                *dst = src;
            }
        }
        Ok(params)
    }
}

/// Intermediate values retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Array2<f64>,
    /// Pre-activation of each extractor layer.
    pub pre_activations: Vec<Array2<f64>>,
    /// Post-ReLU output of each extractor layer.
    pub activations: Vec<Array2<f64>>,
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
}

pub fn forward(params: &ModelParams, inputs: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
    if inputs.ncols() != params.config.input_dim {
        return Err(Error::InvalidInput(format!(
            "input width {} does not match model input {}",
            inputs.ncols(),
            params.config.input_dim
        )));
    }
    let mut pre_activations = Vec::with_capacity(params.extractor.len());
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(params.extractor.len());
    for layer in &params.extractor {
        let x = activations.last().map_or(inputs, |a| a.view());
        let pre = layer.apply(x);
        activations.push(pre.mapv(|v| v.max(0.0)));
        pre_activations.push(pre);
    }
    let features = activations
        .last()
        .cloned()
        .unwrap_or_else(|| inputs.to_owned());
    let logits = params.head.apply(features.view());
    Ok(ForwardTrace {
        inputs: inputs.to_owned(),
        pre_activations,
        activations,
        features,
        logits,
    })
}

fn check_labels(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.nrows() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            logits.nrows()
        )));
    }
    if logits.nrows() == 0 {
        return Err(Error::InvalidInput("cross-entropy of an empty batch".into()));
    }
    let classes = logits.ncols();
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn log_softmax_row(row: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.mapv(|v| v - lse)
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| -log_softmax_row(row)[y])
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy_with_grad(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))).zip(labels) {
        let logp = log_softmax_row(row);
        total -= logp[y];
        g.assign(&logp.mapv(|v| v.exp() / n));
        g[y] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Upstream gradients entering the network. `features` is added to the
/// gradient flowing back from the head before it enters the extractor.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub logits: Array2<f64>,
    pub features: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub extractor: Vec<Layer>,
    pub head: Layer,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        self.extractor
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

fn layer_grad(input: ArrayView2<'_, f64>, upstream: &Array2<f64>) -> Layer {
    Layer {
        weight: input.t().dot(upstream),
        bias: upstream.sum_axis(Axis(0)),
    }
}

pub fn backward(params: &ModelParams, trace: &ForwardTrace, grads: &LossGrads) -> Result<Gradients> {
    let n = trace.inputs.nrows();
    if grads.logits.dim() != trace.logits.dim() {
        return Err(Error::InvalidInput(format!(
            "logit gradient shape {:?} does not match logits {:?}",
            grads.logits.dim(),
            trace.logits.dim()
        )));
    }
    if trace.activations.len() != params.extractor.len() {
        return Err(Error::InvalidInput("trace does not belong to these parameters".into()));
    }
    let head = layer_grad(trace.features.view(), &grads.logits);
    let mut upstream = grads.logits.dot(&params.head.weight.t());
    if let Some(extra) = &grads.features {
        if extra.dim() != upstream.dim() {
            return Err(Error::InvalidInput(format!(
                "feature gradient shape {:?} does not match features {:?}",
                extra.dim(),
                upstream.dim()
            )));
        }
        upstream += extra;
    }

    let mut extractor = Vec::with_capacity(params.extractor.len());
    for (idx, layer) in params.extractor.iter().enumerate().rev() {
        let pre = &trace.pre_activations[idx];
        let dpre = ndarray::Zip::from(&upstream)
            .and(pre)
            .map_collect(|&g, &z| if z > 0.0 { g } else { 0.0 });
        let input = if idx == 0 {
            trace.inputs.view()
        } else {
            trace.activations[idx - 1].view()
        };
        extractor.push(layer_grad(input, &dpre));
        if idx > 0 {
            upstream = dpre.dot(&layer.weight.t());
        }
    }
    extractor.reverse();

    let out = Gradients { extractor, head };
    if let Some(pos) = out.to_flat().iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!(
            "non-finite gradient at flat parameter {pos} (batch of {n})"
        )));
    }
    Ok(out)
}

/// `θ ← θ − lr·∇θ`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, lr: f64) -> ModelParams {
    let mut next = params.clone();
    for (layer, g) in next
        .layers_mut()
        .zip(grads.extractor.iter().chain(std::iter::once(&grads.head)))
    {
        layer.weight.scaled_add(-lr, &g.weight);
        layer.bias.scaled_add(-lr, &g.bias);
    }
    next
}

pub fn backward_and_step(
    params: &ModelParams,
    trace: &ForwardTrace,
    grads: &LossGrads,
    lr: f64,
) -> Result<ModelParams> {
    let g = backward(params, trace, grads)?;
    Ok(sgd_step(params, &g, lr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(hidden: Vec<usize>) -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            hidden,
            num_classes: 4,
        }
    }

    #[test]
    fn identity_extractor_zero_head_is_uniform() {
        let p = ModelParams::zeros(config(vec![])).unwrap();
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let t = forward(&p, x.view()).unwrap();
        assert_eq!(t.features, x);
        assert!(t.logits.iter().all(|&v| v == 0.0));
        let ce = cross_entropy(t.logits.view(), &[0, 3]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_inputs_give_identical_rows() {
        let p = ModelParams::init(config(vec![5, 4]), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = Array2::from_shape_fn((6, 3), |(_, j)| j as f64 - 0.7);
        let t = forward(&p, x.view()).unwrap();
        for r in 1..6 {
            assert_eq!(t.features.row(r), t.features.row(0));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = ModelParams::zeros(config(vec![2])).unwrap();
        assert!(matches!(
            forward(&p, Array2::zeros((2, 4)).view()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = Array2::zeros((3, 10));
        let ce = cross_entropy(uniform.view(), &[0, 5, 9]).unwrap();
        assert!((ce - 10f64.ln()).abs() < 1e-12);

        let confident = array![[1000.0, 0.0, 0.0]];
        assert!(cross_entropy(confident.view(), &[0]).unwrap() < 1e-12);

        assert!(matches!(
            cross_entropy(confident.view(), &[3]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_grads_or_zero_lr_leave_params_unchanged() {
        let p = ModelParams::init(config(vec![5]), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Array2::from_elem((2, 3), 0.3);
        let t = forward(&p, x.view()).unwrap();
        let zero = LossGrads {
            logits: Array2::zeros((2, 4)),
            features: Some(Array2::zeros((2, 5))),
        };
        assert_eq!(backward_and_step(&p, &t, &zero, 0.5).unwrap(), p);

        let (_, dlogits) = cross_entropy_with_grad(t.logits.view(), &[1, 2]).unwrap();
        let g = LossGrads { logits: dlogits, features: None };
        assert_eq!(backward_and_step(&p, &t, &g, 0.0).unwrap(), p);
        assert_ne!(backward_and_step(&p, &t, &g, 0.1).unwrap(), p);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let p = ModelParams::init(config(vec![]), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let t = forward(&p, Array2::from_elem((1, 3), 1.0).view()).unwrap();
        let g = LossGrads {
            logits: array![[f64::NAN, 0.0, 0.0, 0.0]],
            features: None,
        };
        assert!(matches!(backward(&p, &t, &g), Err(Error::Divergence(_))));
    }

    #[test]
    fn flat_round_trip() {
        let p = ModelParams::init(config(vec![5, 2]), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.param_count());
        assert_eq!(ModelParams::from_flat(p.config().clone(), &flat).unwrap(), p);
        assert!(ModelParams::from_flat(p.config().clone(), &flat[1..]).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let p = ModelParams::init(config(vec![7]), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let a = (6.0f64 / 10.0).sqrt();
        assert!(p.extractor[0].weight.iter().all(|w| w.abs() <= a));
        assert!(p.extractor[0].bias.iter().all(|&b| b == 0.0));
    }
}
