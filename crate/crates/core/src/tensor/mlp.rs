//! Fully connected softmax classifier with an explicit backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer widths `[d_in, h_1, ..., h_L, c]` plus the hidden nonlinearity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Input(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Input(format!(
                "layer widths must be positive, got {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out x in]`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Weights and biases of every layer, in layer order.
///
/// Gradients reuse the same layout (see [`GradSet`]), which makes the
/// element-wise arithmetic of the optimisers and the EMA teacher shape-safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<DenseLayer>,
}

/// Gradient of a scalar loss with respect to every entry of a [`ParamSet`].
pub type GradSet = ParamSet;

impl ParamSet {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| DenseLayer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    /// He-normal weights for ReLU, Glorot-normal for tanh; zero biases.
    /// The output layer always uses the Glorot scale.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut params = Self::zeros(spec);
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let (fan_out, fan_in) = layer.weight.shape();
            let var = if l < last && spec.activation == Activation::Relu {
                2.0 / fan_in as f64
            } else {
                2.0 / (fan_in + fan_out) as f64
            };
            let normal = Normal::new(0.0, var.sqrt()).expect("positive variance");
            for w in layer.weight.values_mut() {
                *w = normal.sample(rng);
            }
        }
        params
    }

    /// Rebuild from a flat array in layer order (weights row-major, then biases).
    pub fn from_flat(spec: &MlpSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.num_params() {
            return Err(Error::LengthMismatch(format!(
                "{} values for a network with {} parameters",
                flat.len(),
                spec.num_params()
            )));
        }
        let mut params = Self::zeros(spec);
        for (dst, &v) in params.iter_mut().zip(flat) {
            *dst = v;
        }
        Ok(params)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.values().len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.values().iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.values_mut().iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access to the `index`-th entry in flat order.
    pub fn flat_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.values().len();
            if index < nw {
                return &mut layer.weight.values_mut()[index];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        self.layers.len() == spec.num_layers()
            && self
                .layers
                .iter()
                .zip(spec.layer_sizes.windows(2))
                .all(|(l, w)| l.weight.shape() == (w[1], w[0]) && l.bias.len() == w[1])
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }

    fn ensure_same_shape(&self, other: &ParamSet) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension("parameter sets have different layouts".into()))
        }
    }

    /// `self + scale * other`
    pub fn add_scaled(&self, other: &ParamSet, scale: f64) -> Result<ParamSet> {
        self.ensure_same_shape(other)?;
        let mut out = self.clone();
        for (o, &v) in out.iter_mut().zip(other.iter()) {
            *o += scale * v;
        }
        Ok(out)
    }

    pub fn add_scaled_in_place(&mut self, other: &ParamSet, scale: f64) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (o, &v) in self.iter_mut().zip(other.iter()) {
            *o += scale * v;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.iter_mut() {
            *v *= factor;
        }
    }

    pub fn dot(&self, other: &ParamSet) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.same_shape(other) && self.iter().zip(other.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Row-stochastic class probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxOutput {
    probs: Matrix,
}

/// Row-sum tolerance for accepting externally built distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl SoftmaxOutput {
    /// Wrap rows that already form valid distributions.
    pub fn new(probs: Matrix) -> Result<Self> {
        for (i, row) in probs.iter_rows().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Input(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Input(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    /// Softmax of each row with per-row max subtraction. Entries that
    /// underflow are raised to the smallest positive normal float.
    pub fn from_logits(logits: &Matrix) -> Self {
        let mut probs = raw_softmax(logits);
        for v in probs.values_mut() {
            *v = v.max(f64::MIN_POSITIVE);
        }
        Self { probs }
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn into_probs(self) -> Matrix {
        self.probs
    }

    pub fn rows(&self) -> usize {
        self.probs.rows()
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

/// Row softmax without the underflow floor; the loss gradients use this so
/// that an exactly one-hot prediction yields an exactly zero gradient.
pub(crate) fn raw_softmax(logits: &Matrix) -> Matrix {
    let mut probs = logits.clone();
    for r in 0..probs.rows() {
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    input: Matrix,
    /// Pre-activations of every layer; the last entry holds the logits.
    pre: Vec<Matrix>,
    /// Hidden-layer outputs (one per hidden layer).
    hidden: Vec<Matrix>,
    activation: Activation,
}

impl ActivationCache {
    pub fn logits(&self) -> &Matrix {
        self.pre.last().expect("at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Output of the layer feeding layer `l`.
    fn layer_input(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.input
        } else {
            &self.hidden[l - 1]
        }
    }
}

pub fn forward(spec: &MlpSpec, params: &ParamSet, x: &Matrix) -> Result<(ActivationCache, SoftmaxOutput)> {
    if !params.matches(spec) {
        return Err(Error::Dimension("parameters do not match the network layout".into()));
    }
    if x.cols() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} features, network expects {}",
            x.cols(),
            spec.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut hidden = Vec::with_capacity(n_layers - 1);
    for (l, layer) in params.layers.iter().enumerate() {
        let input = if l == 0 { x } else { &hidden[l - 1] };
        let mut z = input.matmul_transposed(&layer.weight)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if l + 1 < n_layers {
            let mut a = z.clone();
            for v in a.values_mut() {
                *v = spec.activation.apply(*v);
            }
            hidden.push(a);
        }
        pre.push(z);
    }
    let out = SoftmaxOutput::from_logits(pre.last().unwrap());
    let cache = ActivationCache {
        input: x.clone(),
        pre,
        hidden,
        activation: spec.activation,
    };
    Ok((cache, out))
}

/// Backpropagate a gradient with respect to the logits through the network.
pub fn backward_from_logits(params: &ParamSet, cache: &ActivationCache, dlogits: Matrix) -> Result<GradSet> {
    let stale = params.layers.len() != cache.pre.len()
        || params.layers.iter().zip(&cache.pre).enumerate().any(|(l, (layer, z))| {
            z.cols() != layer.weight.rows() || cache.layer_input(l).cols() != layer.weight.cols()
        });
    if stale {
        return Err(Error::State(
            "activation cache was produced by a differently shaped network".into(),
        ));
    }
    if dlogits.shape() != cache.logits().shape() {
        return Err(Error::Dimension(format!(
            "logit gradient is {:?}, logits are {:?}",
            dlogits.shape(),
            cache.logits().shape()
        )));
    }

    let mut grads = params.clone();
    let mut delta = dlogits;
    for l in (0..params.layers.len()).rev() {
        let input = cache.layer_input(l);
        let g = &mut grads.layers[l];
        g.weight = delta.transpose_matmul(input)?;
        for (j, b) in g.bias.iter_mut().enumerate() {
            *b = (0..delta.rows()).map(|r| delta.get(r, j)).sum();
        }
        if l > 0 {
            let mut back = delta.matmul(&params.layers[l].weight)?;
            let z = &cache.pre[l - 1];
            let a = &cache.hidden[l - 1];
            for ((d, &zv), &av) in back.values_mut().iter_mut().zip(z.values()).zip(a.values()) {
                *d *= cache.activation.derivative(zv, av);
            }
            delta = back;
        }
    }
    Ok(grads)
}
