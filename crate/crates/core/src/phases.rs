//! Noise-scale phases: analytic boundaries for the linear model, a
//! heuristic trajectory classifier, and σ_ε grid scans.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{fit_exponential, timescales, TimescaleInput};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linear::{simulate_linear, LinearState};
use crate::net::{train, TrainConfig};
use crate::noise::{NoiseMode, NoiseSpec};

/// Phase boundaries as values of σ_ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundaries {
    pub sigma_dec: f64,
    pub sigma_cat: f64,
    pub sigma_div: f64,
}

/// Boundaries at the initial state. `σ_dec = 2|Ã₀|/B̃₀` with |Φ| = 1 (capped
/// at σ_cat), `σ_cat² = min(2/B₀, 2/B̃₀)`, `σ_div² = max(2/B₀, 2/B̃₀)`; a
/// vanishing `B` sends its bound to infinity.
pub fn phase_boundaries(s: &LinearState) -> Result<PhaseBoundaries> {
    s.validate()?;
    if s.w1 == 0.0 && s.w_ni == 0.0 {
        return Err(Error::UndefinedBoundaries(
            "w1 and w_ni are both zero at initialization".into(),
        ));
    }
    let b = s.eta * s.w_ni * s.w_ni;
    let b_tilde = s.eta * s.w1 * s.w1;
    let inv = |x: f64| if x > 0.0 { 2.0 / x } else { f64::INFINITY };
    let sigma_cat = inv(b).min(inv(b_tilde)).sqrt();
    let sigma_div = inv(b).max(inv(b_tilde)).sqrt();
    let a_tilde = s.eta * s.sigma_x / (s.batch_size as f64).sqrt() * (s.w1 * s.residual()).abs();
    let sigma_dec = if b_tilde > 0.0 {
        2.0 * a_tilde / b_tilde
    } else {
        0.0
    };
    Ok(PhaseBoundaries {
        sigma_dec: sigma_dec.min(sigma_cat),
        sigma_cat,
        sigma_div,
    })
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLabel {
    Decoupled,
    Decay,
    Catapult,
    Divergent,
}

impl PhaseLabel {
    pub const ALL: [PhaseLabel; 4] = [
        PhaseLabel::Decoupled,
        PhaseLabel::Decay,
        PhaseLabel::Catapult,
        PhaseLabel::Divergent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Decoupled => "decoupled",
            PhaseLabel::Decay => "decay",
            PhaseLabel::Catapult => "catapult",
            PhaseLabel::Divergent => "divergent",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PhaseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhaseLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown phase label `{s}`")))
    }
}

/// Thresholds of the trajectory classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    /// Catapult if the peak train loss exceeds `kappa` times the initial one.
    pub kappa: f64,
    /// Minimum R² of the exponential fit to the NIW norm for decay.
    pub r2_min: f64,
    /// Minimum relative drop of the NIW norm for decay.
    pub drop_min: f64,
    pub min_steps: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            kappa: 3.0,
            r2_min: 0.9,
            drop_min: 0.5,
            min_steps: 50,
        }
    }
}

/// What the classifier looks at: per logged step the train loss and the
/// NIW norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseSeries {
    pub train_loss: Vec<f64>,
    pub niw_norm: Vec<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: PhaseLabel,
    /// Peak train loss over initial train loss.
    pub peak_loss_ratio: f64,
    pub peak_index: usize,
}

pub fn classify_trajectory(series: &PhaseSeries, params: &ClassifierParams) -> Result<PhaseLabel> {
    classify_detailed(series, params).map(|c| c.label)
}

/// Rules, in order: divergent if flagged or any loss is non-finite;
/// catapult if the loss peaks above κ·initial and ends below initial; decay
/// if the NIW norm decays exponentially (R² and drop thresholds); otherwise
/// decoupled.
pub fn classify_detailed(
    series: &PhaseSeries,
    params: &ClassifierParams,
) -> Result<Classification> {
    let loss = &series.train_loss;
    let diverged = series.diverged || loss.iter().any(|l| !l.is_finite());
    if loss.is_empty() {
        if diverged {
            return Ok(Classification {
                label: PhaseLabel::Divergent,
                peak_loss_ratio: f64::NAN,
                peak_index: 0,
            });
        }
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let (peak_index, peak) = loss
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
        );
    let initial = loss[0];
    let peak_loss_ratio = peak / initial;
    let done = |label| {
        Ok(Classification {
            label,
            peak_loss_ratio,
            peak_index,
        })
    };
    if diverged {
        return done(PhaseLabel::Divergent);
    }
    if loss.len() < params.min_steps {
        return Err(Error::InsufficientData(format!(
            "{} steps recorded, need {}",
            loss.len(),
            params.min_steps
        )));
    }
    if peak > params.kappa * initial && *loss.last().unwrap() < initial {
        return done(PhaseLabel::Catapult);
    }
    if niw_decays(&series.niw_norm, params) {
        return done(PhaseLabel::Decay);
    }
    done(PhaseLabel::Decoupled)
}

/// Relative rise above the running minimum that ends the decay fit window.
const FLOOR_RISE: f64 = 0.1;

fn niw_decays(niw: &[f64], params: &ClassifierParams) -> bool {
    let Some(&first) = niw.first() else {
        return false;
    };
    if !(first > 0.0) {
        return false;
    }
    let last = *niw.last().unwrap();
    if 1.0 - last / first < params.drop_min {
        return false;
    }
    // Fit from the start up to (excluding) the first point at 1% of the
    // initial value or climbing back off a noise floor. A 1% point is kept
    // when the decay took fewer than three steps to reach it; otherwise the
    // window is padded to three points.
    let floor = 0.01 * first;
    let mut low = first;
    let mut end = niw.len();
    for (k, &v) in niw.iter().enumerate().skip(1) {
        if v <= floor {
            end = if k < 3 { k + 1 } else { k };
            break;
        }
        if v > (1.0 + FLOOR_RISE) * low {
            end = k;
            break;
        }
        low = low.min(v);
    }
    let min_len = if end == 2 { 2 } else { 3 };
    let mut w = 0..end.max(min_len).min(niw.len());
    while w.len() > 2 && !(niw[w.end - 1] > 0.0) {
        w.end -= 1;
    }
    let t: Vec<f64> = w.clone().map(|i| i as f64).collect();
    match fit_exponential(&t, &niw[w]) {
        Some(f) => f.tau > 0.0 && f.r2 >= params.r2_min,
        None => false,
    }
}

/// The system a scan runs at every σ_ε.
#[derive(Debug, Clone)]
pub enum ScanSystem<'a> {
    Linear {
        state0: LinearState,
        steps: u64,
    },
    Mlp {
        config: TrainConfig,
        dataset: &'a Dataset,
        mode: NoiseMode,
    },
}

#[derive(Debug, Clone)]
pub struct ScanConfig<'a> {
    pub system: ScanSystem<'a>,
    pub classifier: ClassifierParams,
}

/// One run of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: PhaseLabel,
    pub peak_loss_ratio: f64,
    pub tau_niw: Option<f64>,
    pub tau_train: Option<f64>,
    pub tau_test: Option<f64>,
    pub r2_niw: Option<f64>,
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
}

/// Result at one grid point, merged across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub sigma_eps: f64,
    /// `None` when every seed failed.
    pub label: Option<PhaseLabel>,
    /// Label of each seed that ran.
    pub votes: Vec<PhaseLabel>,
    pub tau_niw: Option<f64>,
    pub tau_train: Option<f64>,
    pub tau_test: Option<f64>,
    pub r2_niw: Option<f64>,
    pub r2_train: Option<f64>,
    pub r2_test: Option<f64>,
    pub peak_loss_ratio: Option<f64>,
    pub errors: Vec<String>,
}

/// Run one system at one σ_ε and seed, classify it and time its decay. Time
/// is `η·step` for the linear model and the step index for MLPs.
pub fn run_point(config: &ScanConfig<'_>, sigma_eps: f64, seed: u64) -> Result<RunSummary> {
    let (series, mut input) = match &config.system {
        ScanSystem::Linear { state0, steps } => {
            let traj = simulate_linear(&state0.with_sigma(sigma_eps), *steps, seed)?;
            let series = PhaseSeries {
                train_loss: traj.noisy_losses(),
                niw_norm: traj.w_ni_abs(),
                diverged: traj.diverged,
            };
            (series, TimescaleInput::from_linear(&traj))
        }
        ScanSystem::Mlp {
            config: train_config,
            dataset,
            mode,
        } => {
            let cfg = TrainConfig {
                noise_seed: seed,
                shuffle_seed: seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
                ..train_config.clone()
            };
            let rec = train(&cfg, dataset, &NoiseSpec::new(sigma_eps, *mode))?;
            let series = PhaseSeries {
                train_loss: rec.train_losses(),
                niw_norm: rec.niw_norms(),
                diverged: rec.diverged,
            };
            (series, TimescaleInput::from_record(&rec))
        }
    };
    let c = classify_detailed(&series, &config.classifier)?;
    let mut summary = RunSummary {
        label: c.label,
        peak_loss_ratio: c.peak_loss_ratio,
        tau_niw: None,
        tau_train: None,
        tau_test: None,
        r2_niw: None,
        r2_train: None,
        r2_test: None,
    };
    if matches!(c.label, PhaseLabel::Decay | PhaseLabel::Catapult) {
        if c.label == PhaseLabel::Catapult {
            input.window_start = input.train_loss.t[c.peak_index];
        }
        let r = timescales(&input);
        summary.tau_niw = r.tau_noise_fit;
        summary.tau_train = r.tau_loss_fit;
        summary.tau_test = r.tau_test_fit;
        summary.r2_niw = r.r2_noise;
        summary.r2_train = r.r2_loss;
        summary.r2_test = r.r2_test;
    }
    Ok(summary)
}

/// Most frequent label; ties go to the more severe one.
pub fn majority_label(votes: &[PhaseLabel]) -> Option<PhaseLabel> {
    PhaseLabel::ALL
        .into_iter()
        .rev()
        .map(|l| (votes.iter().filter(|&&v| v == l).count(), l))
        .filter(|(n, _)| *n > 0)
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, l)| l)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Run every (σ_ε, seed) pair in parallel and merge per grid point. Seed
/// runs that fail are recorded on their point; the scan carries on.
pub fn scan_sigma_grid(
    config: &ScanConfig<'_>,
    grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<ScanPoint>> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("empty σ grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config(
            "σ grid must be non-negative and strictly ascending".into(),
        ));
    }
    let tasks: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(usize, Result<RunSummary>)> = tasks
        .par_iter()
        .map(|&(i, seed)| (i, run_point(config, grid[i], seed)))
        .collect();

    let mut points: Vec<ScanPoint> = grid
        .iter()
        .map(|&sigma_eps| ScanPoint {
            sigma_eps,
            label: None,
            votes: Vec::new(),
            tau_niw: None,
            tau_train: None,
            tau_test: None,
            r2_niw: None,
            r2_train: None,
            r2_test: None,
            peak_loss_ratio: None,
            errors: Vec::new(),
        })
        .collect();
    let mut runs: Vec<Vec<RunSummary>> = vec![Vec::new(); grid.len()];
    for (i, r) in results {
        match r {
            Ok(s) => {
                points[i].votes.push(s.label);
                runs[i].push(s);
            }
            Err(e) => points[i].errors.push(e.to_string()),
        }
    }
    for (p, runs) in points.iter_mut().zip(runs) {
        p.label = majority_label(&p.votes);
        let Some(label) = p.label else { continue };
        let agree: Vec<&RunSummary> = runs.iter().filter(|r| r.label == label).collect();
        p.tau_niw = median(agree.iter().filter_map(|r| r.tau_niw).collect());
        p.tau_train = median(agree.iter().filter_map(|r| r.tau_train).collect());
        p.tau_test = median(agree.iter().filter_map(|r| r.tau_test).collect());
        p.r2_niw = median(agree.iter().filter_map(|r| r.r2_niw).collect());
        p.r2_train = median(agree.iter().filter_map(|r| r.r2_train).collect());
        p.r2_test = median(agree.iter().filter_map(|r| r.r2_test).collect());
        p.peak_loss_ratio = median(
            agree
                .iter()
                .map(|r| r.peak_loss_ratio)
                .filter(|v| v.is_finite())
                .collect(),
        );
    }
    Ok(points)
}

/// Phase-diagram CSV. Points where every seed failed get the label `error`.
pub fn write_phase_csv<W: Write>(points: &[ScanPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    w.write_record([
        "sigma_eps",
        "label",
        "tau_niw",
        "tau_train",
        "tau_test",
        "peak_loss_ratio",
    ])
    .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.sigma_eps.to_string(),
            p.label.map_or("error".to_string(), |l| l.to_string()),
            opt(p.tau_niw),
            opt(p.tau_train),
            opt(p.tau_test),
            opt(p.peak_loss_ratio),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Timescale CSV: fitted decay times and their R² per grid point, empty
/// where no decay was fitted.
pub fn write_timescale_csv<W: Write>(points: &[ScanPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    w.write_record([
        "sigma_eps",
        "tau_niw_fit",
        "tau_train_fit",
        "tau_test_fit",
        "r2_niw",
        "r2_train",
        "r2_test",
    ])
    .map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        w.write_record([
            p.sigma_eps.to_string(),
            opt(p.tau_niw),
            opt(p.tau_train),
            opt(p.tau_test),
            opt(p.r2_niw),
            opt(p.r2_train),
            opt(p.r2_test),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}
