//! Run configuration: a single TOML document with one section per module.
//!
//! Every field has a default, unknown keys are rejected, and a resolved
//! config serializes back to a document that reproduces the run exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{prepare_fmnist_with, synthetic, Dataset, FmnistOptions, Normalization};
use crate::error::{Error, Result};
use crate::linear::LinearState;
use crate::moments::{EpsDistribution, MomentExperiment, QDistribution};
use crate::net::TrainConfig;
use crate::noise::{NoiseMode, NoiseSpec};
use crate::phases::ClassifierParams;

/// Environment variable consulted when `data.dir` is unset.
pub const DATA_DIR_ENV: &str = "NINLAB_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub noise: NoiseConfig,
    pub train: TrainConfig,
    pub linear: LinearConfig,
    pub scan: ScanSettings,
    pub moments: MomentsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Fmnist,
    /// Two Gaussian blobs; needs no files.
    TwoBlobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding the FMNIST IDX files.
    pub dir: Option<PathBuf>,
    /// Training-set cap; 0 keeps the whole training split.
    pub subset: usize,
    pub split: f64,
    pub seed: u64,
    pub normalization: Normalization,
    pub blobs_samples: usize,
    pub blobs_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        let f = FmnistOptions::default();
        DataConfig {
            source: DataSource::Fmnist,
            dir: None,
            subset: f.subset.unwrap_or(0),
            split: f.split,
            seed: f.seed,
            normalization: f.normalization,
            blobs_samples: 2000,
            blobs_dim: 8,
        }
    }
}

impl DataConfig {
    pub fn fmnist_options(&self) -> FmnistOptions {
        FmnistOptions {
            split: self.split,
            subset: (self.subset > 0).then_some(self.subset),
            seed: self.seed,
            normalization: self.normalization,
        }
    }

    /// `data.dir`, else `$NINLAB_DATA_DIR`.
    pub fn resolved_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.dir {
            return Ok(d.clone());
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) if !d.is_empty() => Ok(PathBuf::from(d)),
            _ => Err(Error::Data(format!(
                "no dataset directory: set data.dir, pass --data-dir or export {DATA_DIR_ENV}"
            ))),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self.source {
            DataSource::Fmnist => prepare_fmnist_with(self.resolved_dir()?, &self.fmnist_options()),
            DataSource::TwoBlobs => {
                if self.blobs_samples < 4 || self.blobs_dim == 0 {
                    return Err(Error::Config(
                        "two_blobs needs >= 4 samples and dim >= 1".into(),
                    ));
                }
                Ok(synthetic::two_blobs(
                    self.blobs_samples,
                    self.blobs_dim,
                    self.seed,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub mode: NoiseMode,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.0,
            mode: NoiseMode::ResampledPerEpoch,
            seed: TrainConfig::default().noise_seed,
        }
    }
}

impl NoiseConfig {
    pub fn spec(&self) -> NoiseSpec {
        NoiseSpec::new(self.sigma, self.mode)
    }
}

/// Linear toy model. σ_ε and the seed come from the noise section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub w0: f64,
    pub w1: f64,
    pub w_ni: f64,
    pub m: f64,
    pub sigma_x: f64,
    pub eta: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Draw real batches instead of using the averaged recursion.
    pub empirical: bool,
}

impl Default for LinearConfig {
    fn default() -> Self {
        let s = LinearState::default();
        LinearConfig {
            w0: s.w0,
            w1: s.w1,
            w_ni: s.w_ni,
            m: s.m,
            sigma_x: s.sigma_x,
            eta: s.eta,
            batch_size: s.batch_size,
            steps: 2000,
            empirical: false,
        }
    }
}

impl LinearConfig {
    pub fn state(&self, sigma_eps: f64) -> LinearState {
        LinearState {
            w0: self.w0,
            w1: self.w1,
            w_ni: self.w_ni,
            m: self.m,
            sigma_x: self.sigma_x,
            sigma_eps,
            eta: self.eta,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanModel {
    #[default]
    Linear,
    Mlp,
}

impl std::str::FromStr for ScanModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScanModel::Linear),
            "mlp" => Ok(ScanModel::Mlp),
            _ => Err(Error::Config(format!("unknown model `{s}` (linear|mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub model: ScanModel,
    /// `start:stop:count` (inclusive, evenly spaced) or a comma list.
    pub grid: String,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 picks the machine's parallelism.
    pub workers: usize,
    pub classifier: ClassifierParams,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            model: ScanModel::Linear,
            grid: "0:20:41".into(),
            seeds: vec![0, 1, 2, 3, 4],
            workers: 4,
            classifier: ClassifierParams::default(),
        }
    }
}

impl ScanSettings {
    pub fn sigma_grid(&self) -> Result<Vec<f64>> {
        parse_grid(&self.grid)
    }
}

/// Parse `start:stop:count` or `a,b,c`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number `{t}` in grid `{s}`")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad count in grid `{s}`")))?;
            match n {
                0 => return Err(Error::Config(format!("grid `{s}` has no points"))),
                1 => vec![a],
                _ => (0..n)
                    .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                    .collect(),
            }
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => {
            return Err(Error::Config(format!(
                "grid `{s}` is neither start:stop:count nor a list"
            )))
        }
    };
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("grid `{s}` has non-finite values")));
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub n: u32,
    pub batch_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub eps: EpsDistribution,
    pub q: QDistribution,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        MomentsConfig {
            n: 2,
            batch_size: 100,
            trials: 100_000,
            seed: 1,
            eps: EpsDistribution::Gaussian { sigma: 1.0 },
            q: QDistribution::Constant { value: 1.0 },
        }
    }
}

impl MomentsConfig {
    pub fn experiment(&self) -> MomentExperiment {
        MomentExperiment {
            n: self.n,
            batch_size: self.batch_size,
            trials: self.trials,
            q: self.q,
            eps: self.eps,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Training config with the noise seed taken from the noise section.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            noise_seed: self.noise.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.noise.spec().validate()?;
        self.linear.state(self.noise.sigma).validate()?;
        if !(self.data.split > 0.0 && self.data.split < 1.0) {
            return Err(Error::Config(format!(
                "data.split must lie in (0, 1), got {}",
                self.data.split
            )));
        }
        self.scan.sigma_grid()?;
        if self.scan.seeds.is_empty() {
            return Err(Error::Config("scan.seeds is empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_exactly() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut c = RunConfig::default();
        c.noise.sigma = 0.1 + 0.2;
        c.train.eta = 1.0 / 3.0;
        c.linear.w_ni = -7.25e-13;
        c.data.dir = Some("some/dir".into());
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml("[train]\nlr = 0.1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("[nosie]\nsigma = 1\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c =
            RunConfig::from_toml("[noise]\nsigma = 3.5\nmode = \"fixed_per_sample\"\n").unwrap();
        assert_eq!(c.noise.sigma, 3.5);
        assert_eq!(c.noise.mode, NoiseMode::FixedPerSample);
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn noise_seed_comes_from_noise_section() {
        let c = RunConfig::from_toml("[noise]\nseed = 77\n").unwrap();
        assert_eq!(c.train_config().noise_seed, 77);
        assert!(RunConfig::from_toml("[train]\nnoise_seed = 3\n").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:20:41").unwrap().len(), 41);
        assert_eq!(parse_grid("0:20:41").unwrap()[40], 20.0);
        assert_eq!(parse_grid("0:20:41").unwrap()[1], 0.5);
        assert_eq!(parse_grid("1, 2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_grid("3:9:1").unwrap(), vec![3.0]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn missing_data_dir_is_a_data_error() {
        let c = DataConfig {
            dir: None,
            ..DataConfig::default()
        };
        if std::env::var_os(DATA_DIR_ENV).is_none() {
            assert!(matches!(c.resolved_dir(), Err(Error::Data(_))));
        }
        let c = DataConfig {
            dir: Some("x".into()),
            ..c
        };
        assert_eq!(c.resolved_dir().unwrap(), PathBuf::from("x"));
    }
}
