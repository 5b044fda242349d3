//! Gradient-flow limit of the linear model and decay-timescale extraction.
//!
//! With the noise-dependent drift kept and the stochastic terms dropped,
//! the flow is
//!
//! ```text
//! ẇ0 = −(w1·w0 − M)·w1·σ_x²
//! ẇ1 = −(w1·w0 − M)·w0·σ_x²
//! ẇ_ni = −σ_ε²·w1²·w_ni
//! ```
//!
//! and the noise-free loss obeys `L̇ = −2σ_x²(w0² + w1²)·L`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linear::LinearState;
use crate::net::{self, Batch, LossKind, MlpParams};

/// Weights beyond this magnitude abort the integration.
pub const FLOW_BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub w0: f64,
    pub w1: f64,
    pub w_ni: f64,
    pub loss: f64,
}

fn flow_rhs(w: [f64; 3], m: f64, sx2: f64, se2: f64) -> [f64; 3] {
    let [w0, w1, wn] = w;
    let r = w1 * w0 - m;
    [-r * w1 * sx2, -r * w0 * sx2, -se2 * w1 * w1 * wn]
}

/// Classical fourth-order Runge–Kutta with fixed step `dt`; the last step
/// is shortened to land on `t_end`. Point 0 is the initial state.
pub fn integrate_flow(
    state0: &LinearState,
    sigma_eps: f64,
    t_end: f64,
    dt: f64,
) -> Result<Vec<FlowState>> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= dt && t_end.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < dt <= t_end, got dt={dt}, t_end={t_end}"
        )));
    }
    let m = state0.m;
    let sx2 = state0.sigma_x * state0.sigma_x;
    let se2 = sigma_eps * sigma_eps;
    let loss = |w: &[f64; 3]| 0.5 * sx2 * (w[1] * w[0] - m).powi(2);
    let point = |t: f64, w: [f64; 3]| FlowState {
        t,
        w0: w[0],
        w1: w[1],
        w_ni: w[2],
        loss: loss(&w),
    };

    let steps = (t_end / dt - 1e-9).ceil() as u64;
    let mut w = [state0.w0, state0.w1, state0.w_ni];
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(point(0.0, w));
    for i in 1..=steps {
        let t0 = (i - 1) as f64 * dt;
        let h = (t_end - t0).min(dt);
        let f = |w: [f64; 3]| flow_rhs(w, m, sx2, se2);
        let add =
            |a: [f64; 3], k: [f64; 3], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
        let k1 = f(w);
        let k2 = f(add(w, k1, h / 2.0));
        let k3 = f(add(w, k2, h / 2.0));
        let k4 = f(add(w, k3, h));
        for j in 0..3 {
            w[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if w.iter().any(|v| !v.is_finite() || v.abs() > FLOW_BLOWUP) {
            return Err(Error::Integration(format!(
                "weights blew up at t = {}",
                t0 + h
            )));
        }
        let t = if i == steps { t_end } else { i as f64 * dt };
        out.push(point(t, w));
    }
    Ok(out)
}

/// Loss and NIW curves predicted from the weight history, each normalized
/// to its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDecay {
    pub t: Vec<f64>,
    /// `exp(−2σ_x² ∫(w0² + w1²) dt)`.
    pub loss_ratio: Vec<f64>,
    /// `exp(−σ_ε² ∫ w1² dt)`.
    pub w_ni_ratio: Vec<f64>,
}

pub fn predicted_decay(flow: &[FlowState], sigma_x: f64, sigma_eps: f64) -> Result<PredictedDecay> {
    if flow.is_empty() {
        return Err(Error::Data("empty flow trajectory".into()));
    }
    if flow.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Data("time grid is not strictly increasing".into()));
    }
    let sx2 = sigma_x * sigma_x;
    let se2 = sigma_eps * sigma_eps;
    let (mut int_loss, mut int_niw) = (0.0, 0.0);
    let mut out = PredictedDecay {
        t: vec![flow[0].t],
        loss_ratio: vec![1.0],
        w_ni_ratio: vec![1.0],
    };
    for w in flow.windows(2) {
        let h = w[1].t - w[0].t;
        let hess = |p: &FlowState| p.w0 * p.w0 + p.w1 * p.w1;
        int_loss += 0.5 * h * (hess(&w[0]) + hess(&w[1]));
        int_niw += 0.5 * h * (w[0].w1 * w[0].w1 + w[1].w1 * w[1].w1);
        out.t.push(w[1].t);
        out.loss_ratio.push((-2.0 * sx2 * int_loss).exp());
        out.w_ni_ratio.push((-se2 * int_niw).exp());
    }
    Ok(out)
}

/// Result of a log-linear least-squares fit `y ≈ amplitude·exp(−t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    /// Negative for a growing series, infinite for a flat one.
    pub tau: f64,
    pub amplitude: f64,
    /// Coefficient of determination of the fit to `ln y`.
    pub r2: f64,
}

/// `None` with fewer than two points or a non-positive value.
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Option<ExpFit> {
    let n = t.len();
    if n < 2 || y.len() != n || y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return None;
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let tm = t.iter().sum::<f64>() / nf;
    let lm = ly.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|v| (v - tm) * (v - tm)).sum();
    if stt <= 0.0 {
        return None;
    }
    let stl: f64 = t.iter().zip(&ly).map(|(a, b)| (a - tm) * (b - lm)).sum();
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let ss_tot: f64 = ly.iter().map(|v| (v - lm) * (v - lm)).sum();
    let ss_res: f64 = t
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Some(ExpFit {
        tau: -1.0 / slope,
        amplitude: intercept.exp(),
        r2,
    })
}

/// From `start` up to and including the first point at or below 1% of
/// `y[start]`, or to the end of the series.
pub fn decay_window(y: &[f64], start: usize) -> Range<usize> {
    if start >= y.len() {
        return start..start;
    }
    let floor = 0.01 * y[start];
    let end = (start + 1..y.len())
        .find(|&k| y[k] <= floor)
        .map_or(y.len(), |k| k + 1);
    start..end
}

/// `−f/f′` at index `i`, with `f′` from the forward three-point stencil.
pub fn instantaneous_tau(t: &[f64], y: &[f64], i: usize) -> Option<f64> {
    if i + 2 >= t.len().min(y.len()) {
        return None;
    }
    let h1 = t[i + 1] - t[i];
    let h2 = t[i + 2] - t[i];
    if !(h1 > 0.0 && h2 > h1) {
        return None;
    }
    let d = -(h1 + h2) / (h1 * h2) * y[i] + h2 / (h1 * (h2 - h1)) * y[i + 1]
        - h1 / (h2 * (h2 - h1)) * y[i + 2];
    let tau = -y[i] / d;
    (tau.is_finite() && tau > 0.0).then_some(tau)
}

/// A sampled series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Self {
        Series { t, y }
    }
}

/// Fitted decay of one series over its decay window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeriesTimescale {
    pub tau_instant: Option<f64>,
    pub tau_fit: Option<f64>,
    pub r2: Option<f64>,
}

/// Decay window starting at the first sample with `t >= start_time`.
pub fn series_timescale(
    s: &Series,
    start_time: f64,
    diagnostics: &mut Vec<String>,
    name: &str,
) -> SeriesTimescale {
    let Some(start) = s.t.iter().position(|&t| t >= start_time) else {
        diagnostics.push(format!("{name}: no samples after t = {start_time}"));
        return SeriesTimescale::default();
    };
    let w = decay_window(&s.y, start);
    let mut out = SeriesTimescale {
        tau_instant: instantaneous_tau(&s.t, &s.y, start),
        ..SeriesTimescale::default()
    };
    match fit_exponential(&s.t[w.clone()], &s.y[w.clone()]) {
        Some(f) if f.tau > 0.0 && f.tau.is_finite() => {
            out.tau_fit = Some(f.tau);
            out.r2 = Some(f.r2);
        }
        Some(_) => diagnostics.push(format!("{name}: series does not decay over {w:?}")),
        None => diagnostics.push(format!("{name}: no exponential fit over {w:?}")),
    }
    if out.tau_instant.is_none() {
        diagnostics.push(format!("{name}: no instantaneous decay at window start"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimescaleReport {
    /// `−w_ni/ẇ_ni` at the window start.
    pub tau_noise: Option<f64>,
    /// `−L/L̇` at the window start.
    pub tau_loss: Option<f64>,
    pub tau_noise_fit: Option<f64>,
    pub tau_loss_fit: Option<f64>,
    pub tau_test_fit: Option<f64>,
    pub r2_noise: Option<f64>,
    pub r2_loss: Option<f64>,
    pub r2_test: Option<f64>,
    pub diagnostics: Vec<String>,
}

/// Series whose decay is to be timed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimescaleInput {
    /// NIW magnitude.
    pub niw: Series,
    pub train_loss: Series,
    pub test_loss: Option<Series>,
    /// Decay windows start at this time (after a catapult peak, say).
    pub window_start: f64,
}

pub fn timescales(input: &TimescaleInput) -> TimescaleReport {
    let mut diag = Vec::new();
    let niw = series_timescale(&input.niw, input.window_start, &mut diag, "niw");
    let loss = series_timescale(
        &input.train_loss,
        input.window_start,
        &mut diag,
        "train_loss",
    );
    let test = input
        .test_loss
        .as_ref()
        .map(|s| series_timescale(s, input.window_start, &mut diag, "test_loss"))
        .unwrap_or_default();
    TimescaleReport {
        tau_noise: niw.tau_instant,
        tau_loss: loss.tau_instant,
        tau_noise_fit: niw.tau_fit,
        tau_loss_fit: loss.tau_fit,
        tau_test_fit: test.tau_fit,
        r2_noise: niw.r2,
        r2_loss: loss.r2,
        r2_test: test.r2,
        diagnostics: diag,
    }
}

impl TimescaleInput {
    /// Linear-model series on the continuous time axis `t = η·step`, with
    /// the noise-free loss.
    pub fn from_linear(traj: &crate::linear::LinearTrajectory) -> Self {
        let eta = traj.state0.eta;
        let t: Vec<f64> = traj.points.iter().map(|p| p.step as f64 * eta).collect();
        TimescaleInput {
            niw: Series::new(t.clone(), traj.w_ni_abs()),
            train_loss: Series::new(t, traj.points.iter().map(|p| p.loss).collect()),
            test_loss: None,
            window_start: 0.0,
        }
    }

    /// MLP series on the step axis.
    pub fn from_record(rec: &net::TrajectoryRecord) -> Self {
        let t: Vec<f64> = rec.entries.iter().map(|e| e.step as f64).collect();
        let test = rec.test_losses();
        TimescaleInput {
            niw: Series::new(t.clone(), rec.niw_norms()),
            train_loss: Series::new(t, rec.train_losses()),
            test_loss: (!test.is_empty()).then(|| {
                Series::new(
                    test.iter().map(|p| p.0 as f64).collect(),
                    test.iter().map(|p| p.1).collect(),
                )
            }),
            window_start: 0.0,
        }
    }
}

/// Per-step relative mismatch between the measured loss change and its
/// first-order prediction `−η‖∇L‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLossReport {
    pub residuals: Vec<f64>,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

/// `losses[t]` and `grad_sq[t]` are the loss and squared gradient norm
/// before step `t`; `losses` carries one more entry than `grad_sq`.
/// Both sides vanishing counts as a zero residual.
pub fn delta_loss_check(losses: &[f64], grad_sq: &[f64], eta: f64) -> Result<DeltaLossReport> {
    if grad_sq.is_empty() || losses.len() != grad_sq.len() + 1 {
        return Err(Error::Data(format!(
            "need one more loss than gradient norms, got {} and {}",
            losses.len(),
            grad_sq.len()
        )));
    }
    let residuals: Vec<f64> = grad_sq
        .iter()
        .enumerate()
        .map(|(t, &g)| {
            let predicted = -eta * g;
            let measured = losses[t + 1] - losses[t];
            let diff = (measured - predicted).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / predicted.abs()
            }
        })
        .collect();
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    Ok(DeltaLossReport {
        median: q(0.5),
        p90: q(0.9),
        max: *sorted.last().unwrap(),
        residuals,
    })
}

/// Full-batch gradient descent without noise, recording the loss and the
/// squared gradient norm before each step (plus the final loss).
pub fn full_batch_descent(
    params: &MlpParams,
    batch: &Batch,
    kind: LossKind,
    eta: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p = params.clone();
    let mut b = batch.clone();
    b.noise.fill(0.0);
    let mut losses = Vec::with_capacity(steps + 1);
    let mut grad_sq = Vec::with_capacity(steps);
    for _ in 0..steps {
        losses.push(net::batch_loss(&p, &b, kind)?);
        let g = net::backward(&p, &b, kind)?;
        grad_sq.push(g.squared_norm());
        p.apply_sgd(&g, eta)?;
    }
    losses.push(net::batch_loss(&p, &b, kind)?);
    Ok((losses, grad_sq))
}
