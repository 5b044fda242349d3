//! Seeded synthetic data.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::net::Labels;

/// Univariate regression samples with exact labels `y = M·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `m` inputs `x ~ N(0, σ_x²)` with labels `y = M·x`.
pub fn gen_linear_data(m: usize, sigma_x: f64, target: f64, seed: u64) -> Result<LinearData> {
    if m == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let normal = Normal::new(0.0, sigma_x)
        .ok()
        .filter(|_| sigma_x > 0.0)
        .ok_or_else(|| Error::Config(format!("sigma_x must be > 0, got {sigma_x}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..m).map(|_| normal.sample(&mut rng)).collect();
    let y = x.iter().map(|v| target * v).collect();
    Ok(LinearData { x, y })
}

impl LinearData {
    /// As a regression dataset with one input and one target column; the
    /// last `val` samples form the held-out split.
    pub fn into_dataset(self, val: usize) -> Result<Dataset> {
        let n = self.x.len();
        if val >= n {
            return Err(Error::Config(
                "validation split leaves no training data".into(),
            ));
        }
        let cut = n - val;
        let split = |r: std::ops::Range<usize>| Split {
            inputs: Array2::from_shape_vec((r.len(), 1), self.x[r.clone()].to_vec()).unwrap(),
            labels: Labels::Targets(
                Array2::from_shape_vec((r.len(), 1), self.y[r].to_vec()).unwrap(),
            ),
        };
        Ok(Dataset {
            train: split(0..cut),
            val: split(cut..n),
            test: None,
            input_dim: 1,
            num_classes: None,
        })
    }
}

/// Two Gaussian classes in `dim` dimensions with means ±1 along every axis.
/// `n` training samples plus `n/2` held-out ones.
pub fn two_blobs(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |m: usize| {
        let classes: Vec<usize> = (0..m).map(|_| rng.random_range(0..2)).collect();
        let mut inputs = Array2::zeros((m, dim));
        for (i, &c) in classes.iter().enumerate() {
            let centre = if c == 0 { -1.0 } else { 1.0 };
            let noise: Array1<f64> = (0..dim)
                .map(|_| rand_distr::StandardNormal.sample(&mut rng))
                .collect();
            inputs.row_mut(i).assign(&(noise + centre));
        }
        Split {
            inputs,
            labels: Labels::Classes(classes),
        }
    };
    let train = make(n);
    let val = make(n / 2);
    Dataset {
        train,
        val,
        test: None,
        input_dim: dim,
        num_classes: Some(2),
    }
}
