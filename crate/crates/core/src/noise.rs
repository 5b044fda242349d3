//! Injected noise: the scalar ε fed through the noise injection node.
//!
//! Draws are counter based. A value is a pure function of
//! `(seed, epoch, sample_index)`, so resampled noise is reproducible under
//! any batch ordering and no generator state is threaded through training.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh ε for every sample at every epoch.
    #[default]
    ResampledPerEpoch,
    /// One ε per sample, drawn once and reused for the whole run.
    FixedPerSample,
    /// ε ≡ 0.
    Off,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resampled" | "resampled_per_epoch" => Ok(NoiseMode::ResampledPerEpoch),
            "fixed" | "fixed_per_sample" => Ok(NoiseMode::FixedPerSample),
            "off" => Ok(NoiseMode::Off),
            other => Err(Error::Config(format!("unknown noise mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
}

/// Scale and sampling mode of the injected noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_eps: f64,
    pub mode: NoiseMode,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn new(sigma_eps: f64, mode: NoiseMode) -> Self {
        NoiseSpec {
            sigma_eps,
            mode,
            distribution: NoiseDistribution::Gaussian,
        }
    }

    pub fn off() -> Self {
        NoiseSpec::new(0.0, NoiseMode::Off)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.sigma_eps
            )));
        }
        Ok(())
    }
}

// Stream id reserved for the fixed-per-sample table.
const FIXED_TABLE_STREAM: u64 = u64::MAX;

/// Standard normal draw addressed by `(seed, stream, index)`.
pub(crate) fn counter_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // two u64 draws (four 32-bit words) per index
    rng.set_word_pos(u128::from(index) * 4);
    let a = rng.next_u64();
    let b = rng.next_u64();
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Source of ε values for a dataset of fixed size.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    spec: NoiseSpec,
    seed: u64,
    dataset_size: usize,
    table: Option<Vec<f64>>,
}

impl NoiseStream {
    pub fn new(spec: NoiseSpec, dataset_size: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let table = (spec.mode == NoiseMode::FixedPerSample).then(|| {
            (0..dataset_size as u64)
                .map(|i| spec.sigma_eps * counter_normal(seed, FIXED_TABLE_STREAM, i))
                .collect()
        });
        Ok(NoiseStream {
            spec,
            seed,
            dataset_size,
            table,
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn dataset_size(&self) -> usize {
        self.dataset_size
    }

    /// ε for `sample_index` during `epoch`.
    pub fn query(&self, epoch: u64, sample_index: usize) -> Result<f64> {
        if sample_index >= self.dataset_size {
            return Err(Error::Data(format!(
                "noise query for sample {sample_index} but dataset has {} samples",
                self.dataset_size
            )));
        }
        Ok(match (&self.table, self.spec.mode) {
            (_, NoiseMode::Off) => 0.0,
            (Some(table), _) => table[sample_index],
            (None, _) => {
                self.spec.sigma_eps * counter_normal(self.seed, epoch, sample_index as u64)
            }
        })
    }
}
