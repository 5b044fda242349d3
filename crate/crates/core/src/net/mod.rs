//! Feed-forward MLP with a single noise injection node (NIN).
//!
//! The NIN emits one scalar ε per sample. It reaches the network through the
//! trainable noise injection weights (NIW) `niw`, which shift the
//! preactivations of layer `ni_layer`:
//!
//! ```text
//! z(ℓ) = a(ℓ) · W(ℓ) + b(ℓ)            (+ ε · niw  when ℓ = ni_layer)
//! a(ℓ+1) = act(z(ℓ))                   for hidden layers
//! output = z(N_L - 1)                  (the last layer is affine)
//! ```
//!
//! Weights are stored input-major: `W(ℓ)` has shape `d_ℓ × d_{ℓ+1}`, so a
//! batch of row vectors multiplies from the left.

mod backward;
mod train;

pub use backward::{backward, batch_loss, sgd_step, Gradients};
pub use train::{
    evaluate, train, TrainConfig, TrajectoryEntry, TrajectoryRecord, DEFAULT_DIVERGENCE_THRESHOLD,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Linear,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at `z`. ReLU uses the subgradient 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½‖output − y‖²` per sample.
    #[default]
    Mse,
    /// Softmax cross-entropy against an integer class.
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `W(ℓ) ~ N(0, 1/d_ℓ)`, and the NIW with the fan-in of its layer.
    #[default]
    FanIn,
    /// Every weight (including the NIW) drawn from `N(0, v)`.
    Variance(f64),
}

/// Network weights, biases and the noise injection weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_weights: Vec<Array2<f64>>,
    pub layer_biases: Vec<Array1<f64>>,
    pub niw: Array1<f64>,
    pub ni_layer: usize,
    pub activation: Activation,
}

/// Labels of one sample.
#[derive(Debug, Clone, Copy)]
pub enum Label<'a> {
    Target(ArrayView1<'a, f64>),
    Class(usize),
}

/// Labels of a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Dense targets, one row per sample.
    Targets(Array2<f64>),
    /// Class indices.
    Classes(Vec<usize>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Targets(t) => t.nrows(),
            Labels::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Label<'_> {
        match self {
            Labels::Targets(t) => Label::Target(t.row(i)),
            Labels::Classes(c) => Label::Class(c[i]),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Labels {
        match self {
            Labels::Targets(t) => Labels::Targets(t.select(Axis(0), rows)),
            Labels::Classes(c) => Labels::Classes(rows.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// A mini-batch: inputs, labels and one ε per sample.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Labels,
    pub noise: Array1<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, labels: Labels, noise: Array1<f64>) -> Result<Self> {
        let n = inputs.nrows();
        if n == 0 {
            return Err(Error::Data("batch is empty".into()));
        }
        if labels.len() != n || noise.len() != n {
            return Err(Error::Data(format!(
                "batch rows disagree: inputs {n}, labels {}, noise {}",
                labels.len(),
                noise.len()
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Output of a single-sample forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: Array1<f64>,
    /// Preactivations `z(ℓ)` of every layer, NIN shift included.
    pub preacts: Vec<Array1<f64>>,
}

pub fn init_mlp(
    arch: &[usize],
    activation: Activation,
    ni_layer: usize,
    init: InitScheme,
    seed: u64,
) -> Result<MlpParams> {
    if arch.len() < 2 {
        return Err(Error::Config(format!(
            "architecture needs at least input and output widths, got {arch:?}"
        )));
    }
    if arch.contains(&0) {
        return Err(Error::Config(format!("zero layer width in {arch:?}")));
    }
    let layers = arch.len() - 1;
    if ni_layer >= layers {
        return Err(Error::Config(format!(
            "ni_layer {ni_layer} out of range for {layers} weight layers"
        )));
    }
    if let InitScheme::Variance(v) = init {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Config(format!(
                "init variance must be >= 0, got {v}"
            )));
        }
    }
    let std_for = |fan_in: usize| match init {
        InitScheme::FanIn => (1.0 / fan_in as f64).sqrt(),
        InitScheme::Variance(v) => v.sqrt(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |std: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        std * z
    };
    let mut layer_weights = Vec::with_capacity(layers);
    let mut layer_biases = Vec::with_capacity(layers);
    for l in 0..layers {
        let std = std_for(arch[l]);
        layer_weights.push(Array2::from_shape_simple_fn((arch[l], arch[l + 1]), || {
            draw(std)
        }));
        layer_biases.push(Array1::zeros(arch[l + 1]));
    }
    let std = std_for(arch[ni_layer]);
    let niw = Array1::from_shape_simple_fn(arch[ni_layer + 1], || draw(std));

    Ok(MlpParams {
        layer_weights,
        layer_biases,
        niw,
        ni_layer,
        activation,
    })
}

impl MlpParams {
    pub fn num_layers(&self) -> usize {
        self.layer_weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layer_weights[self.num_layers() - 1].ncols()
    }

    /// Structural invariants: consistent widths and NIW length.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_layers();
        if n == 0 || self.layer_biases.len() != n {
            return Err(Error::Config(
                "weights and biases disagree in layer count".into(),
            ));
        }
        for l in 0..n {
            let w = &self.layer_weights[l];
            if self.layer_biases[l].len() != w.ncols() {
                return Err(Error::Config(format!("bias {l} has wrong length")));
            }
            if l + 1 < n && w.ncols() != self.layer_weights[l + 1].nrows() {
                return Err(Error::Config(format!(
                    "layers {l} and {} do not chain",
                    l + 1
                )));
            }
        }
        if self.ni_layer >= n {
            return Err(Error::Config(format!(
                "ni_layer {} out of range",
                self.ni_layer
            )));
        }
        if self.niw.len() != self.layer_weights[self.ni_layer].ncols() {
            return Err(Error::Config(
                "niw length differs from its layer width".into(),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layer_weights
            .iter()
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self
                .layer_biases
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
            && self.niw.iter().all(|v| v.is_finite())
    }

    pub fn niw_norm(&self) -> f64 {
        self.niw.dot(&self.niw).sqrt()
    }

    /// Frobenius norm of every weight matrix.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.layer_weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// The same network with the noise injection node removed.
    pub fn without_niw(&self) -> MlpParams {
        let mut p = self.clone();
        p.niw.fill(0.0);
        p
    }

    /// All parameters in a fixed order: per layer weights (row-major) then
    /// bias, then the NIW.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.layer_weights.iter().zip(&self.layer_biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out.extend(self.niw.iter().copied());
        out
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<MlpParams> {
        let mut p = self.clone();
        let mut it = flat.iter().copied();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| -> Result<()> {
            for v in dst {
                *v = it
                    .next()
                    .ok_or_else(|| Error::Config("flat parameter vector too short".into()))?;
            }
            Ok(())
        };
        for (w, b) in p.layer_weights.iter_mut().zip(p.layer_biases.iter_mut()) {
            fill(&mut w.iter_mut())?;
            fill(&mut b.iter_mut())?;
        }
        fill(&mut p.niw.iter_mut())?;
        if flat.len() != self.to_flat().len() {
            return Err(Error::Config("flat parameter vector too long".into()));
        }
        Ok(p)
    }
}

/// Forward pass for one input with injected value `eps`.
pub fn forward(params: &MlpParams, input: ArrayView1<'_, f64>, eps: f64) -> Result<Forward> {
    if input.len() != params.input_dim() {
        return Err(Error::Data(format!(
            "input has length {}, network expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    if !input.iter().all(|v| v.is_finite()) || !eps.is_finite() {
        return Err(Error::Numeric("non-finite input".into()));
    }
    let n = params.num_layers();
    let mut preacts = Vec::with_capacity(n);
    let mut a = input.to_owned();
    for l in 0..n {
        let mut z = a.dot(&params.layer_weights[l]) + &params.layer_biases[l];
        if l == params.ni_layer && eps != 0.0 {
            z.scaled_add(eps, &params.niw);
        }
        if l + 1 < n {
            a = z.mapv(|v| params.activation.apply(v));
        } else {
            a = z.clone();
        }
        preacts.push(z);
    }
    Ok(Forward { output: a, preacts })
}

/// Batched forward pass: returns the preactivations of every layer and the
/// inputs to every layer (`acts[0]` is the batch itself).
pub(crate) fn forward_batch(
    params: &MlpParams,
    inputs: ArrayView2<'_, f64>,
    noise: Option<ArrayView1<'_, f64>>,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let n = params.num_layers();
    let mut preacts = Vec::with_capacity(n);
    let mut acts = Vec::with_capacity(n);
    acts.push(inputs.to_owned());
    for l in 0..n {
        let mut z = acts[l].dot(&params.layer_weights[l]);
        z += &params.layer_biases[l];
        if l == params.ni_layer {
            if let Some(eps) = noise {
                if eps.iter().any(|&e| e != 0.0) {
                    let col = eps.insert_axis(Axis(1));
                    let row = params.niw.view().insert_axis(Axis(0));
                    z += &col.dot(&row);
                }
            }
        }
        if l + 1 < n {
            let act = params.activation;
            acts.push(z.mapv(|v| act.apply(v)));
        }
        preacts.push(z);
    }
    (preacts, acts)
}

fn one_hot_check(class: usize, dim: usize) -> Result<()> {
    if class >= dim {
        return Err(Error::Data(format!(
            "class label {class} out of range for {dim} outputs"
        )));
    }
    Ok(())
}

/// Loss of a single output against its label.
pub fn loss_eval(output: ArrayView1<'_, f64>, label: Label<'_>, kind: LossKind) -> Result<f64> {
    match (kind, label) {
        (LossKind::Mse, Label::Target(y)) => {
            if y.len() != output.len() {
                return Err(Error::Data(format!(
                    "target has length {}, output has {}",
                    y.len(),
                    output.len()
                )));
            }
            Ok(0.5
                * output
                    .iter()
                    .zip(y)
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum::<f64>())
        }
        (LossKind::Mse, Label::Class(c)) => {
            one_hot_check(c, output.len())?;
            Ok(0.5
                * output
                    .iter()
                    .enumerate()
                    .map(|(k, o)| {
                        let t = if k == c { 1.0 } else { 0.0 };
                        (o - t) * (o - t)
                    })
                    .sum::<f64>())
        }
        (LossKind::CrossEntropy, Label::Class(c)) => {
            one_hot_check(c, output.len())?;
            Ok(log_sum_exp(output) - output[c])
        }
        (LossKind::CrossEntropy, Label::Target(_)) => Err(Error::Data(
            "cross-entropy needs integer class labels".into(),
        )),
    }
}

pub(crate) fn log_sum_exp(logits: ArrayView1<'_, f64>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
