//! The two-layer linear model: analytic phase boundaries, then one run in
//! each σ_ε range with its label.

use ninlab::linear::{simulate_linear, LinearState};
use ninlab::phases::{classify_detailed, phase_boundaries, ClassifierParams, PhaseSeries};

fn main() -> ninlab::Result<()> {
    let s0 = LinearState::default();
    let b = phase_boundaries(&s0)?;
    println!("start {s0:?}");
    println!(
        "σ_dec = {:.3}  σ_cat = {:.3}  σ_div = {:.3}",
        b.sigma_dec, b.sigma_cat, b.sigma_div
    );

    for sigma in [0.0, 0.5 * b.sigma_cat, 1.3 * b.sigma_cat, 2.0 * b.sigma_cat] {
        let traj = simulate_linear(&s0.with_sigma(sigma), 2000, 0)?;
        let series = PhaseSeries {
            train_loss: traj.noisy_losses(),
            niw_norm: traj.w_ni_abs(),
            diverged: traj.diverged,
        };
        let c = classify_detailed(&series, &ClassifierParams::default())?;
        let last = traj.points.last().expect("step 0 is always present");
        println!(
            "σ_ε = {sigma:7.3}: {:<9} peak/initial loss {:9.3e}, final |w_ni| {:.3e}",
            c.label.to_string(),
            c.peak_loss_ratio,
            last.w_ni.abs()
        );
    }
    Ok(())
}
