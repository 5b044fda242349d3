use ndarray::{Array1, Array2, Axis};

use super::{forward_batch, log_sum_exp, Batch, Labels, LossKind, MlpParams};
use crate::error::{Error, Result};

/// Batch-averaged gradients, laid out like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layer_weights: Vec<Array2<f64>>,
    pub layer_biases: Vec<Array1<f64>>,
    pub niw: Array1<f64>,
}

impl Gradients {
    /// Same ordering as [`MlpParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.layer_weights.iter().zip(&self.layer_biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out.extend(self.niw.iter().copied());
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum()
    }
}

fn check_batch(params: &MlpParams, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Data("batch is empty".into()));
    }
    if batch.inputs.ncols() != params.input_dim() {
        return Err(Error::Data(format!(
            "batch inputs have {} columns, network expects {}",
            batch.inputs.ncols(),
            params.input_dim()
        )));
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters are not finite".into()));
    }
    Ok(())
}

/// Mean loss over the batch and its derivative with respect to the output
/// (already divided by |B|).
pub(crate) fn output_loss_and_delta(
    output: &Array2<f64>,
    labels: &Labels,
    kind: LossKind,
) -> Result<(f64, Array2<f64>)> {
    let n = output.nrows();
    let k = output.ncols();
    let scale = 1.0 / n as f64;
    let mut delta = Array2::zeros((n, k));
    let mut total = 0.0;
    match (kind, labels) {
        (LossKind::Mse, Labels::Targets(y)) => {
            if y.ncols() != k {
                return Err(Error::Data(format!(
                    "targets have {} columns, network outputs {k}",
                    y.ncols()
                )));
            }
            for ((d, o), t) in delta.iter_mut().zip(output.iter()).zip(y.iter()) {
                let r = o - t;
                total += 0.5 * r * r;
                *d = r * scale;
            }
        }
        (LossKind::Mse, Labels::Classes(c)) => {
            for (i, &class) in c.iter().enumerate() {
                if class >= k {
                    return Err(Error::Data(format!("class label {class} out of range")));
                }
                for j in 0..k {
                    let t = if j == class { 1.0 } else { 0.0 };
                    let r = output[[i, j]] - t;
                    total += 0.5 * r * r;
                    delta[[i, j]] = r * scale;
                }
            }
        }
        (LossKind::CrossEntropy, Labels::Classes(c)) => {
            for (i, &class) in c.iter().enumerate() {
                if class >= k {
                    return Err(Error::Data(format!("class label {class} out of range")));
                }
                let row = output.row(i);
                let lse = log_sum_exp(row);
                total += lse - row[class];
                for j in 0..k {
                    let p = (row[j] - lse).exp();
                    let t = if j == class { 1.0 } else { 0.0 };
                    delta[[i, j]] = (p - t) * scale;
                }
            }
        }
        (LossKind::CrossEntropy, Labels::Targets(_)) => {
            return Err(Error::Data(
                "cross-entropy needs integer class labels".into(),
            ))
        }
    }
    Ok((total * scale, delta))
}

/// Mean loss of the batch, with each sample's ε injected.
pub fn batch_loss(params: &MlpParams, batch: &Batch, kind: LossKind) -> Result<f64> {
    check_batch(params, batch)?;
    let (mut preacts, _) = forward_batch(params, batch.inputs.view(), Some(batch.noise.view()));
    let output = preacts.pop().expect("at least one layer");
    Ok(output_loss_and_delta(&output, &batch.labels, kind)?.0)
}

/// Mean batch loss, its exact gradients, and the network outputs.
pub(crate) fn loss_and_gradients(
    params: &MlpParams,
    batch: &Batch,
    kind: LossKind,
) -> Result<(f64, Gradients, Array2<f64>)> {
    check_batch(params, batch)?;
    let (preacts, acts) = forward_batch(params, batch.inputs.view(), Some(batch.noise.view()));
    let layers = params.num_layers();
    let (loss, mut delta) = output_loss_and_delta(&preacts[layers - 1], &batch.labels, kind)?;

    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    let mut gniw = Array1::zeros(params.niw.len());
    for l in (0..layers).rev() {
        gw[l] = acts[l].t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l == params.ni_layer {
            gniw = batch.noise.dot(&delta);
        }
        if l > 0 {
            let mut back = delta.dot(&params.layer_weights[l].t());
            let act = params.activation;
            back.zip_mut_with(&preacts[l - 1], |d, &z| *d *= act.derivative(z));
            delta = back;
        }
    }
    let grads = Gradients {
        layer_weights: gw,
        layer_biases: gb,
        niw: gniw,
    };
    let mut preacts = preacts;
    Ok((loss, grads, preacts.pop().expect("at least one layer")))
}

/// Batch-averaged gradients of the loss, including the NIW gradient
/// `mean_i ε_i · ∂ℓ_i/∂z(ni_layer)`.
pub fn backward(params: &MlpParams, batch: &Batch, kind: LossKind) -> Result<Gradients> {
    loss_and_gradients(params, batch, kind).map(|(_, g, _)| g)
}

impl MlpParams {
    /// In-place `θ ← θ − η·grad` for every parameter group.
    pub fn apply_sgd(&mut self, grads: &Gradients, eta: f64) -> Result<()> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {eta}"
            )));
        }
        if grads.layer_weights.len() != self.num_layers() || grads.niw.len() != self.niw.len() {
            return Err(Error::Config(
                "gradient shape differs from parameters".into(),
            ));
        }
        for (w, g) in self.layer_weights.iter_mut().zip(&grads.layer_weights) {
            w.scaled_add(-eta, g);
        }
        for (b, g) in self.layer_biases.iter_mut().zip(&grads.layer_biases) {
            b.scaled_add(-eta, g);
        }
        self.niw.scaled_add(-eta, &grads.niw);
        Ok(())
    }
}

pub fn sgd_step(params: &MlpParams, grads: &Gradients, eta: f64) -> Result<MlpParams> {
    let mut next = params.clone();
    next.apply_sgd(grads, eta)?;
    Ok(next)
}
