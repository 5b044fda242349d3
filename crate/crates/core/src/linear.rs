//! The two-layer linear toy model: `y = w1·(w0·x + w_ni·ε)`, trained on
//! labels `M·x` with inputs `x ~ N(0, σ_x²)`.
//!
//! [`linear_step`] iterates the coupled recursions for `w1` and `w_ni`
//! obtained from the second-order expansion of the batch-averaged noisy
//! loss (exact for this model), with one Gaussian draw Φ standing in for the
//! batch fluctuation of the odd noise terms. [`empirical_linear_step`] takes
//! a plain SGD step on a sampled batch instead.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss above which a run counts as diverged.
pub const LINEAR_DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearState {
    pub w0: f64,
    pub w1: f64,
    pub w_ni: f64,
    /// Target slope `M`.
    pub m: f64,
    pub sigma_x: f64,
    pub sigma_eps: f64,
    pub eta: f64,
    pub batch_size: usize,
}

impl Default for LinearState {
    /// Over-parameterized start: an O(1) output weight and NIW, a small
    /// input weight, identity target.
    fn default() -> Self {
        LinearState {
            w0: 0.1,
            w1: 1.2,
            w_ni: 0.3,
            m: 1.0,
            sigma_x: 1.0,
            sigma_eps: 0.0,
            eta: 0.01,
            batch_size: 100,
        }
    }
}

impl LinearState {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.sigma_x > 0.0 && self.sigma_x.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_x must be > 0, got {}",
                self.sigma_x
            )));
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_eps must be >= 0, got {}",
                self.sigma_eps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma_eps: f64) -> Self {
        LinearState { sigma_eps, ..self }
    }

    pub fn residual(&self) -> f64 {
        self.w1 * self.w0 - self.m
    }

    /// Noise-free loss `½σ_x²(w1·w0 − M)²`.
    pub fn loss(&self) -> f64 {
        0.5 * self.sigma_x * self.sigma_x * self.residual().powi(2)
    }

    /// Expected batch loss with the noise switched on:
    /// `½σ_x²(w1·w0 − M)² + ½σ_ε²·w1²·w_ni²`.
    pub fn noisy_loss(&self) -> f64 {
        self.loss() + 0.5 * (self.sigma_eps * self.w1 * self.w_ni).powi(2)
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w1.is_finite() && self.w_ni.is_finite()
    }

    fn is_diverged(&self) -> bool {
        let l = self.noisy_loss();
        !self.is_finite() || !l.is_finite() || l > LINEAR_DIVERGENCE_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoefficients {
    pub a: f64,
    pub a_tilde: f64,
    pub b: f64,
    pub b_tilde: f64,
    pub c: f64,
    pub phi: f64,
}

pub fn coefficients(s: &LinearState, phi: f64) -> LinearCoefficients {
    let fluct = s.eta * phi * s.sigma_x / (s.batch_size as f64).sqrt();
    let r = s.residual();
    LinearCoefficients {
        a: fluct * s.w_ni * (2.0 * s.w1 * s.w0 - s.m),
        a_tilde: fluct * s.w1 * r,
        b: s.eta * s.w_ni * s.w_ni,
        b_tilde: s.eta * s.w1 * s.w1,
        c: s.eta * r * s.w0 * s.sigma_x * s.sigma_x,
        phi,
    }
}

/// One step of the coupled recursions. `w0` follows gradient descent on the
/// noise-free loss. A non-finite result is returned as is; callers test
/// [`LinearState::is_finite`].
pub fn linear_step(s: &LinearState, phi: f64) -> LinearState {
    let k = coefficients(s, phi);
    let sig = s.sigma_eps;
    let sig2 = sig * sig;
    LinearState {
        w1: k.a * sig + s.w1 * (1.0 - k.b * sig2) - k.c,
        w_ni: k.a_tilde * sig + s.w_ni * (1.0 - k.b_tilde * sig2),
        w0: s.w0 - s.eta * s.residual() * s.w1 * s.sigma_x * s.sigma_x,
        ..*s
    }
}

/// Exact SGD step on `1/(2|B|)·Σ(w1(w0·x_i + w_ni·ε_i) − M·x_i)²`.
pub fn empirical_linear_step(s: &LinearState, x: &[f64], eps: &[f64]) -> Result<LinearState> {
    if x.is_empty() {
        return Err(Error::Data("batch is empty".into()));
    }
    if x.len() != eps.len() {
        return Err(Error::Data(format!(
            "batch has {} inputs but {} noise values",
            x.len(),
            eps.len()
        )));
    }
    let (mut g0, mut g1, mut gni) = (0.0, 0.0, 0.0);
    for (&xi, &ei) in x.iter().zip(eps) {
        let h = s.w0 * xi + s.w_ni * ei;
        let r = s.w1 * h - s.m * xi;
        g1 += r * h;
        g0 += r * s.w1 * xi;
        gni += r * s.w1 * ei;
    }
    let n = x.len() as f64;
    Ok(LinearState {
        w0: s.w0 - s.eta * g0 / n,
        w1: s.w1 - s.eta * g1 / n,
        w_ni: s.w_ni - s.eta * gni / n,
        ..*s
    })
}

/// Draw a batch of `(x, ε)` for `s` from `rng`.
pub fn draw_linear_batch<R: rand::Rng>(s: &LinearState, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let nx = Normal::new(0.0, s.sigma_x).expect("sigma_x validated");
    let x = (0..s.batch_size).map(|_| nx.sample(rng)).collect();
    let eps = (0..s.batch_size)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s.sigma_eps * z
        })
        .collect();
    (x, eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPoint {
    pub step: u64,
    pub w0: f64,
    pub w1: f64,
    pub w_ni: f64,
    pub loss: f64,
    pub noisy_loss: f64,
    pub diverged: bool,
}

impl LinearPoint {
    fn of(step: u64, s: &LinearState, diverged: bool) -> Self {
        LinearPoint {
            step,
            w0: s.w0,
            w1: s.w1,
            w_ni: s.w_ni,
            loss: s.loss(),
            noisy_loss: s.noisy_loss(),
            diverged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrajectory {
    pub state0: LinearState,
    /// Step 0 is the initial state.
    pub points: Vec<LinearPoint>,
    pub diverged: bool,
}

impl LinearTrajectory {
    pub fn w_ni_abs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.w_ni.abs()).collect()
    }

    pub fn noisy_losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.noisy_loss).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Data(format!("csv: {e}"));
        w.write_record(["step", "w0", "w1", "w_ni", "loss", "diverged"])
            .map_err(err)?;
        for p in &self.points {
            w.write_record([
                p.step.to_string(),
                p.w0.to_string(),
                p.w1.to_string(),
                p.w_ni.to_string(),
                p.loss.to_string(),
                u8::from(p.diverged).to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

/// Iterate [`linear_step`] with Φ drawn i.i.d. N(0, 1) from `seed`, halting
/// at divergence.
pub fn simulate_linear(state0: &LinearState, steps: u64, seed: u64) -> Result<LinearTrajectory> {
    state0.validate()?;
    if steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = *state0;
    let mut points = vec![LinearPoint::of(0, &s, false)];
    let mut diverged = false;
    for step in 1..=steps {
        let phi: f64 = StandardNormal.sample(&mut rng);
        s = linear_step(&s, phi);
        diverged = s.is_diverged();
        points.push(LinearPoint::of(step, &s, diverged));
        if diverged {
            break;
        }
    }
    Ok(LinearTrajectory {
        state0: *state0,
        points,
        diverged,
    })
}

/// Plain SGD on freshly drawn batches, for comparison with
/// [`simulate_linear`].
pub fn simulate_empirical(state0: &LinearState, steps: u64, seed: u64) -> Result<LinearTrajectory> {
    state0.validate()?;
    if steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = *state0;
    let mut points = vec![LinearPoint::of(0, &s, false)];
    let mut diverged = false;
    for step in 1..=steps {
        let (x, eps) = draw_linear_batch(&s, &mut rng);
        s = empirical_linear_step(&s, &x, &eps)?;
        diverged = s.is_diverged();
        points.push(LinearPoint::of(step, &s, diverged));
        if diverged {
            break;
        }
    }
    Ok(LinearTrajectory {
        state0: *state0,
        points,
        diverged,
    })
}
