//! Datasets: IDX parsing, FMNIST preparation and synthetic generators.

pub mod fmnist;
pub mod idx;
pub mod synthetic;

pub use fmnist::{prepare_fmnist, prepare_fmnist_with, FmnistOptions, Normalization};
pub use idx::{load_idx, parse_idx, write_idx, IdxData, IdxTensor};
pub use synthetic::{gen_linear_data, LinearData};

use ndarray::{Array2, Axis};

use crate::net::Labels;

/// Inputs and labels of one split, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Array2<f64>,
    pub labels: Labels,
}

impl Split {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Split {
        Split {
            inputs: self.inputs.select(Axis(0), rows),
            labels: self.labels.select(rows),
        }
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Split {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    /// Held-out split; "test" metrics during training are computed here.
    pub val: Split,
    /// The separate test file, when one exists.
    pub test: Option<Split>,
    pub input_dim: usize,
    /// `None` for regression targets.
    pub num_classes: Option<usize>,
}
