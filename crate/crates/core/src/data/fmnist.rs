//! Fashion-MNIST preparation: flatten, shuffle, split, subset, standardize.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::idx::load_idx;
use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::net::Labels;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// One mean and one standard deviation over all training pixels.
    #[default]
    Scalar,
    /// A mean and standard deviation per pixel position.
    PerPixel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FmnistOptions {
    /// Fraction of the training file used for training; the rest is the
    /// validation split.
    pub split: f64,
    /// Cap on the number of training samples.
    pub subset: Option<usize>,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for FmnistOptions {
    fn default() -> Self {
        FmnistOptions {
            split: 0.6,
            subset: Some(8000),
            seed: 0,
            normalization: Normalization::Scalar,
        }
    }
}

fn load_pair(dir: &Path, images: &str, labels: &str) -> Result<(Array2<f64>, Vec<usize>)> {
    let img = load_idx(dir.join(images))?;
    let lab = load_idx(dir.join(labels))?;
    if img.dims.len() < 2 || lab.dims.len() != 1 || img.dims[0] != lab.dims[0] {
        return Err(Error::Data(format!(
            "{images} dims {:?} do not match {labels} dims {:?}",
            img.dims, lab.dims
        )));
    }
    let n = img.dims[0];
    let width: usize = img.dims[1..].iter().product();
    let inputs = Array2::from_shape_vec((n, width), img.data.to_f64())
        .map_err(|e| Error::Data(e.to_string()))?;
    let classes = lab
        .data
        .to_f64()
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Data(format!("invalid class label {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((inputs, classes))
}

/// Mean and population standard deviation; zero spread maps to 1.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(inputs: &Array2<f64>, mode: Normalization) -> Self {
        let d = inputs.ncols();
        match mode {
            Normalization::Scalar => {
                let (m, s) = moments(inputs.iter().copied());
                Standardizer {
                    mean: Array1::from_elem(d, m),
                    std: Array1::from_elem(d, s),
                }
            }
            Normalization::PerPixel => {
                let (mean, std): (Vec<f64>, Vec<f64>) = inputs
                    .axis_iter(Axis(1))
                    .map(|col| moments(col.iter().copied()))
                    .unzip();
                Standardizer {
                    mean: Array1::from(mean),
                    std: Array1::from(std),
                }
            }
        }
    }

    pub fn apply(&self, inputs: &mut Array2<f64>) {
        for mut row in inputs.rows_mut() {
            row -= &self.mean;
            row /= &self.std;
        }
    }
}

/// Prepare FMNIST with scalar standardization.
pub fn prepare_fmnist(
    dir: impl AsRef<Path>,
    split_ratio: f64,
    subset_size: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    prepare_fmnist_with(
        dir,
        &FmnistOptions {
            split: split_ratio,
            subset: subset_size,
            seed,
            normalization: Normalization::Scalar,
        },
    )
}

/// Load the IDX files under `dir`, shuffle the training file with `seed`,
/// split it, cap the training part at `subset`, and standardize every split
/// with statistics of the (capped) training part. Raw 0–255 pixel values
/// are standardized directly.
pub fn prepare_fmnist_with(dir: impl AsRef<Path>, opts: &FmnistOptions) -> Result<Dataset> {
    if !(opts.split > 0.0 && opts.split < 1.0) {
        return Err(Error::Config(format!(
            "split must be in (0, 1), got {}",
            opts.split
        )));
    }
    let dir = dir.as_ref();
    let (inputs, classes) = load_pair(dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let n = inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let cut = (opts.split * n as f64).round() as usize;
    if cut == 0 || cut == n {
        return Err(Error::Data(format!(
            "split {} of {n} samples is degenerate",
            opts.split
        )));
    }
    let mut train_rows = order[..cut].to_vec();
    if let Some(cap) = opts.subset {
        if cap == 0 {
            return Err(Error::Config("subset must be >= 1".into()));
        }
        train_rows.truncate(cap);
    }
    let full = Split {
        inputs,
        labels: Labels::Classes(classes),
    };
    let mut train = full.select(&train_rows);
    let mut val = full.select(&order[cut..]);

    let dims = full.inputs.ncols();
    let mut test = if dir.join(TEST_IMAGES).exists() {
        let (inputs, classes) = load_pair(dir, TEST_IMAGES, TEST_LABELS)?;
        Some(Split {
            inputs,
            labels: Labels::Classes(classes),
        })
    } else {
        None
    };

    let standardizer = Standardizer::fit(&train.inputs, opts.normalization);
    standardizer.apply(&mut train.inputs);
    standardizer.apply(&mut val.inputs);
    if let Some(t) = test.as_mut() {
        if t.inputs.ncols() != dims {
            return Err(Error::Data(
                "test images differ in size from training images".into(),
            ));
        }
        standardizer.apply(&mut t.inputs);
    }
    let num_classes = match &full.labels {
        Labels::Classes(c) => c.iter().max().map_or(0, |m| m + 1).max(10),
        Labels::Targets(_) => unreachable!(),
    };
    Ok(Dataset {
        train,
        val,
        test,
        input_dim: dims,
        num_classes: Some(num_classes),
    })
}
