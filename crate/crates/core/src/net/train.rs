use std::io::Write;

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{loss_and_gradients, output_loss_and_delta};
use super::{
    argmax, forward_batch, init_mlp, Activation, Batch, InitScheme, Labels, LossKind, MlpParams,
};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, NoiseStream};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Everything `train` needs besides the data and the noise spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub ni_layer: usize,
    pub init: InitScheme,
    pub loss: LossKind,
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional cap on the total number of SGD steps.
    pub max_steps: Option<u64>,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    /// Config files set this through `noise.seed`.
    #[serde(skip)]
    pub noise_seed: u64,
    pub log_every: u64,
    /// Test metrics are computed every `eval_every` steps and at the end.
    pub eval_every: u64,
    /// Evaluate on at most this many held-out samples; 0 means all.
    pub eval_limit: usize,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![256],
            activation: Activation::Relu,
            ni_layer: 0,
            init: InitScheme::FanIn,
            loss: LossKind::Mse,
            eta: 0.01,
            batch_size: 256,
            epochs: 10,
            max_steps: None,
            init_seed: 0,
            shuffle_seed: 1,
            noise_seed: 2,
            log_every: 1,
            eval_every: 10,
            eval_limit: 2000,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.log_every == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "log_every and eval_every must be >= 1".into(),
            ));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence_threshold must be > 0".into()));
        }
        Ok(())
    }
}

/// One logged step. Losses and norms refer to the parameters *before* the
/// update of step `step`; `train_loss` and `train_acc` are those of the
/// mini-batch used at that step, noise included.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub step: u64,
    pub epoch: u64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub niw_norm: f64,
    pub weight_norms: Vec<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub entries: Vec<TrajectoryEntry>,
    pub diverged: bool,
}

impl TrajectoryRecord {
    pub fn train_losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.train_loss).collect()
    }

    pub fn niw_norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.niw_norm).collect()
    }

    /// `(step, test_loss)` for entries where the test set was evaluated.
    pub fn test_losses(&self) -> Vec<(u64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.test_loss.map(|l| (e.step, l)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let layers = self.entries.first().map_or(0, |e| e.weight_norms.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "step",
            "train_loss",
            "test_loss",
            "train_acc",
            "test_acc",
            "niw_norm",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..layers).map(|l| format!("w_norm_{l}")));
        header.push("diverged".into());
        w.write_record(&header).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.entries {
            let mut row = vec![
                e.step.to_string(),
                e.train_loss.to_string(),
                opt(e.test_loss),
                opt(e.train_acc),
                opt(e.test_acc),
                e.niw_norm.to_string(),
            ];
            row.extend(e.weight_norms.iter().map(|v| v.to_string()));
            row.push(u8::from(e.diverged).to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Mean loss (and accuracy for class labels) over `split` with the NIN
/// output held at 0. Never touches a noise stream.
pub fn evaluate(
    params: &MlpParams,
    split: &Split,
    kind: LossKind,
    limit: Option<usize>,
) -> Result<(f64, Option<f64>)> {
    let n = limit.map_or(split.len(), |l| l.min(split.len()));
    if n == 0 {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    const CHUNK: usize = 1024;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let inputs = split.inputs.select(Axis(0), &rows);
        let labels = split.labels.select(&rows);
        let (mut pre, _) = forward_batch(params, inputs.view(), None);
        let out = pre.pop().expect("at least one layer");
        let (chunk_loss, _) = output_loss_and_delta(&out, &labels, kind)?;
        loss_sum += chunk_loss * rows.len() as f64;
        if let Labels::Classes(c) = &labels {
            correct += count_correct(&out, c);
        }
        start = end;
    }
    let acc = matches!(split.labels, Labels::Classes(_)).then(|| correct as f64 / n as f64);
    Ok((loss_sum / n as f64, acc))
}

fn count_correct(out: &ndarray::Array2<f64>, classes: &[usize]) -> usize {
    out.rows()
        .into_iter()
        .zip(classes)
        .filter(|(row, &c)| argmax(row.view()) == c)
        .count()
}

fn output_width(config: &TrainConfig, dataset: &Dataset) -> Result<usize> {
    match (&dataset.train.labels, dataset.num_classes) {
        (Labels::Classes(_), Some(k)) => Ok(k),
        (Labels::Targets(t), _) => Ok(t.ncols()),
        (Labels::Classes(_), None) => Err(Error::Data(format!(
            "class labels without a class count (loss {:?})",
            config.loss
        ))),
    }
}

/// Train an NIN-augmented MLP with vanilla SGD. Test metrics are computed
/// on `dataset.val` with ε = 0.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    noise: &NoiseSpec,
) -> Result<TrajectoryRecord> {
    train_full(config, dataset, noise).map(|(r, _)| r)
}

/// Like [`train`], also returning the final parameters.
pub fn train_full(
    config: &TrainConfig,
    dataset: &Dataset,
    noise: &NoiseSpec,
) -> Result<(TrajectoryRecord, MlpParams)> {
    config.validate()?;
    let n = dataset.train.len();
    if n == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut arch = vec![dataset.input_dim];
    arch.extend(&config.hidden);
    arch.push(output_width(config, dataset)?);
    let mut params = init_mlp(
        &arch,
        config.activation,
        config.ni_layer,
        config.init,
        config.init_seed,
    )?;
    let stream = NoiseStream::new(*noise, n, config.noise_seed)?;

    let batches_per_epoch = n.div_ceil(config.batch_size) as u64;
    let total_steps =
        (config.epochs as u64 * batches_per_epoch).min(config.max_steps.unwrap_or(u64::MAX));
    let mut record = TrajectoryRecord::default();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..n).collect();

    'epochs: for epoch in 0..config.epochs as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
        rng.set_stream(epoch);
        order.iter_mut().enumerate().for_each(|(i, v)| *v = i);
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            if step >= total_steps {
                break 'epochs;
            }
            let last = step + 1 == total_steps;
            let eps: Result<Vec<f64>> = idx.iter().map(|&i| stream.query(epoch, i)).collect();
            let batch = Batch::new(
                dataset.train.inputs.select(Axis(0), idx),
                dataset.train.labels.select(idx),
                Array1::from(eps?),
            )?;
            let evaluated = match loss_and_gradients(&params, &batch, config.loss) {
                Ok(v) => Some(v),
                Err(Error::Numeric(_)) => None,
                Err(e) => return Err(e),
            };
            let diverged = match &evaluated {
                Some((loss, _, _)) => !loss.is_finite() || *loss > config.divergence_threshold,
                None => true,
            };
            if diverged || last || step.is_multiple_of(config.log_every) {
                let (train_loss, train_acc) = match &evaluated {
                    Some((loss, _, out)) => (
                        *loss,
                        match &batch.labels {
                            Labels::Classes(c) => {
                                Some(count_correct(out, c) as f64 / c.len() as f64)
                            }
                            Labels::Targets(_) => None,
                        },
                    ),
                    None => (f64::NAN, None),
                };
                let (test_loss, test_acc) =
                    if !diverged && (last || step.is_multiple_of(config.eval_every)) {
                        let (l, a) = evaluate(
                            &params,
                            &dataset.val,
                            config.loss,
                            (config.eval_limit > 0).then_some(config.eval_limit),
                        )?;
                        (Some(l), a)
                    } else {
                        (None, None)
                    };
                record.entries.push(TrajectoryEntry {
                    step,
                    epoch,
                    train_loss,
                    test_loss,
                    train_acc,
                    test_acc,
                    niw_norm: params.niw_norm(),
                    weight_norms: params.weight_norms(),
                    diverged,
                });
            }
            if diverged {
                record.diverged = true;
                break 'epochs;
            }
            let (_, grads, _) = evaluated.expect("checked above");
            params.apply_sgd(&grads, config.eta)?;
            step += 1;
        }
    }
    Ok((record, params))
}
