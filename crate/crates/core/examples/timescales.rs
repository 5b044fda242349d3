//! Decay timescales of the linear model. From the optimum, with a NIW small
//! enough not to disturb w1, the NIW decays with τ = 1/(σ_ε² w1²); from a
//! generic start the quadrature of the flow predicts the loss and NIW curves.

use ninlab::continuum::{integrate_flow, predicted_decay, timescales, TimescaleInput};
use ninlab::linear::{simulate_linear, LinearState};

fn main() -> ninlab::Result<()> {
    let sigma = 1.0;
    let optimum = LinearState {
        w0: 1.0,
        w1: 1.0,
        w_ni: 0.05,
        m: 1.0,
        sigma_eps: sigma,
        batch_size: 1_000_000,
        ..LinearState::default()
    };
    let traj = simulate_linear(&optimum, 400, 0)?;
    let r = timescales(&TimescaleInput::from_linear(&traj));
    println!(
        "optimum start: fitted τ_noise = {:.4} (R² {:.5}), at t=0 {:.4}, closed form {:.4}",
        r.tau_noise_fit.unwrap_or(f64::NAN),
        r.r2_noise.unwrap_or(f64::NAN),
        r.tau_noise.unwrap_or(f64::NAN),
        1.0 / (sigma * sigma * optimum.w1 * optimum.w1)
    );

    let generic = LinearState {
        w0: 0.4,
        w1: 0.7,
        w_ni: 0.5,
        sigma_eps: sigma,
        ..optimum
    };
    let flow = integrate_flow(&generic, sigma, 4.0, 1e-3)?;
    let pred = predicted_decay(&flow, generic.sigma_x, sigma)?;
    println!("generic start: t, L/L0 and |w_ni|/|w_ni0| from the flow vs the quadrature");
    for i in (0..flow.len()).step_by(500) {
        println!(
            "  t={:4.1}  L {:.5} vs {:.5}   w_ni {:.5} vs {:.5}",
            flow[i].t,
            flow[i].loss / flow[0].loss,
            pred.loss_ratio[i],
            flow[i].w_ni / flow[0].w_ni,
            pred.w_ni_ratio[i]
        );
    }
    Ok(())
}
