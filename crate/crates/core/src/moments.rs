//! Mean and variance of the batch average of `q·εⁿ`.
//!
//! For i.i.d. samples, `(1/|B|) Σ q_i ε_iⁿ` has mean `⟨q⟩⟨εⁿ⟩` and variance
//! `(⟨ε²ⁿ⟩Q² − ⟨q⟩²⟨εⁿ⟩²)/|B|` with `Q² = ⟨q²⟩`. For odd `n` and symmetric
//! ε the mean vanishes and only a `1/√|B|` fluctuation survives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the theorem, in terms of raw moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub n: u32,
    pub batch_size: usize,
    pub trials: usize,
    pub q_mean: f64,
    /// `Q = √⟨q²⟩`.
    pub q_rms: f64,
    /// `⟨εⁿ⟩`.
    pub eps_moment_n: f64,
    /// `⟨ε²ⁿ⟩`.
    pub eps_moment_2n: f64,
}

/// Relative slack allowed on the moment inequalities.
const SLACK: f64 = 1e-12;

impl MomentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.batch_size == 0 || self.trials < 1000 {
            return Err(Error::Config(format!(
                "need n >= 1, batch_size >= 1, trials >= 1000; got {}, {}, {}",
                self.n, self.batch_size, self.trials
            )));
        }
        let q2 = self.q_rms * self.q_rms;
        if self.q_rms < 0.0 || q2 < self.q_mean * self.q_mean * (1.0 - SLACK) {
            return Err(Error::InconsistentSpec(format!(
                "Q² = {q2} is below ⟨q⟩² = {}",
                self.q_mean * self.q_mean
            )));
        }
        let en2 = self.eps_moment_n * self.eps_moment_n;
        if self.eps_moment_2n < 0.0 || self.eps_moment_2n < en2 * (1.0 - SLACK) {
            return Err(Error::InconsistentSpec(format!(
                "⟨ε²ⁿ⟩ = {} is below ⟨εⁿ⟩² = {en2}",
                self.eps_moment_2n
            )));
        }
        Ok(())
    }
}

/// Analytic `(mean, variance)` of the batch average.
pub fn theorem_moments(spec: &MomentSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let mean = spec.q_mean * spec.eps_moment_n;
    let var = (spec.eps_moment_2n * spec.q_rms * spec.q_rms - mean * mean) / spec.batch_size as f64;
    if var < 0.0 {
        if var > -SLACK * mean * mean {
            return Ok((mean, 0.0));
        }
        return Err(Error::InconsistentSpec(format!("negative variance {var}")));
    }
    Ok((mean, var))
}

/// Symmetric, zero-mean noise distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EpsDistribution {
    Gaussian {
        sigma: f64,
    },
    /// Uniform on `[−a, a]`.
    Uniform {
        a: f64,
    },
}

impl EpsDistribution {
    /// `⟨ε^k⟩`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        match *self {
            EpsDistribution::Gaussian { sigma } => {
                let double_factorial: f64 = (1..k).step_by(2).map(f64::from).product();
                sigma.powi(k as i32) * double_factorial
            }
            EpsDistribution::Uniform { a } => a.powi(k as i32) / f64::from(k + 1),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            EpsDistribution::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            EpsDistribution::Uniform { a } => a * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// Distribution of the sample-dependent factor `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QDistribution {
    Constant { value: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl QDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            QDistribution::Constant { value } => value,
            QDistribution::Gaussian { mean, .. } => mean,
        }
    }

    pub fn rms(&self) -> f64 {
        match *self {
            QDistribution::Constant { value } => value.abs(),
            QDistribution::Gaussian { mean, std } => (mean * mean + std * std).sqrt(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            QDistribution::Constant { value } => value,
            QDistribution::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
        }
    }
}

/// A concrete experiment: distributions plus sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentExperiment {
    pub n: u32,
    pub batch_size: usize,
    pub trials: usize,
    pub q: QDistribution,
    pub eps: EpsDistribution,
}

impl MomentExperiment {
    pub fn spec(&self) -> MomentSpec {
        MomentSpec {
            n: self.n,
            batch_size: self.batch_size,
            trials: self.trials,
            q_mean: self.q.mean(),
            q_rms: self.q.rms(),
            eps_moment_n: self.eps.raw_moment(self.n),
            eps_moment_2n: self.eps.raw_moment(2 * self.n),
        }
    }
}

/// Monte-Carlo estimates over `trials` batch averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMoments {
    pub mean: f64,
    /// Unbiased sample variance of the batch averages.
    pub variance: f64,
    pub mean_std_error: f64,
    /// Standard error of `variance`.
    pub var_std_error: f64,
}

/// Pairwise summation.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

const SHARD: usize = 4096;

/// Draw `trials` independent batches and summarize their averages of
/// `q·εⁿ`. Trials are sharded with one ChaCha stream per shard, so the
/// result does not depend on the thread count.
pub fn mc_batch_moments(
    n: u32,
    q: &QDistribution,
    eps: &EpsDistribution,
    batch_size: usize,
    trials: usize,
    seed: u64,
) -> Result<McMoments> {
    if batch_size == 0 || trials < 2 {
        return Err(Error::Config("need batch_size >= 1 and trials >= 2".into()));
    }
    let shards = trials.div_ceil(SHARD);
    let means: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let count = SHARD.min(trials - s * SHARD);
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut acc = 0.0;
                for _ in 0..batch_size {
                    let qi = q.sample(&mut rng);
                    let ei = eps.sample(&mut rng);
                    acc += qi * ei.powi(n as i32);
                }
                out.push(acc / batch_size as f64);
            }
            out
        })
        .collect();
    let nf = trials as f64;
    let mean = pairwise_sum(&means) / nf;
    let dev2: Vec<f64> = means.iter().map(|x| (x - mean) * (x - mean)).collect();
    let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
    let m2 = pairwise_sum(&dev2) / nf;
    let m4 = pairwise_sum(&dev4) / nf;
    let variance = m2 * nf / (nf - 1.0);
    let var_of_var = ((m4 - (nf - 3.0) / (nf - 1.0) * variance * variance) / nf).max(0.0);
    Ok(McMoments {
        mean,
        variance,
        mean_std_error: (variance / nf).sqrt(),
        var_std_error: var_of_var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: u32,
    pub batch_size: usize,
    pub trials: usize,
    pub analytic_mean: f64,
    pub analytic_var: f64,
    pub emp_mean: f64,
    pub emp_var: f64,
    pub z_mean: f64,
    pub z_var: f64,
    pub pass: bool,
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.abs() / se
    }
}

/// Compare given analytic moments with a Monte-Carlo run; passes when both
/// z-scores are at most 3.
pub fn compare_moments(spec: &MomentSpec, analytic: (f64, f64), mc: &McMoments) -> MomentReport {
    let z_mean = z_score(mc.mean - analytic.0, mc.mean_std_error);
    let z_var = z_score(mc.variance - analytic.1, mc.var_std_error);
    MomentReport {
        n: spec.n,
        batch_size: spec.batch_size,
        trials: spec.trials,
        analytic_mean: analytic.0,
        analytic_var: analytic.1,
        emp_mean: mc.mean,
        emp_var: mc.variance,
        z_mean,
        z_var,
        pass: z_mean <= 3.0 && z_var <= 3.0,
    }
}

pub fn verify_theorem(exp: &MomentExperiment, seed: u64) -> Result<MomentReport> {
    let spec = exp.spec();
    let analytic = theorem_moments(&spec)?;
    let mc = mc_batch_moments(exp.n, &exp.q, &exp.eps, exp.batch_size, exp.trials, seed)?;
    Ok(compare_moments(&spec, analytic, &mc))
}
