//! Mean and variance of batch averages of q·εⁿ against Monte Carlo, over
//! a small grid of n and batch sizes.

use ninlab::moments::{verify_theorem, EpsDistribution, MomentExperiment, QDistribution};

fn main() -> ninlab::Result<()> {
    println!(
        "{:>3} {:>5} {:>10} {:>12} {:>12} {:>7} {:>7}",
        "n", "B", "eps", "var", "mc var", "z_mean", "z_var"
    );
    for eps in [
        EpsDistribution::Gaussian { sigma: 1.0 },
        EpsDistribution::Uniform { a: 1.0 },
    ] {
        for n in 1..=4 {
            for batch_size in [1, 10, 128] {
                let exp = MomentExperiment {
                    n,
                    batch_size,
                    trials: 20_000,
                    q: QDistribution::Constant { value: 1.0 },
                    eps,
                };
                let r = verify_theorem(&exp, 11)?;
                let name = match eps {
                    EpsDistribution::Gaussian { .. } => "gaussian",
                    EpsDistribution::Uniform { .. } => "uniform",
                };
                println!(
                    "{n:>3} {batch_size:>5} {name:>10} {:>12.5e} {:>12.5e} {:>7.2} {:>7.2}{}",
                    r.analytic_var,
                    r.emp_var,
                    r.z_mean,
                    r.z_var,
                    if r.pass { "" } else { "  <- outside 3 SE" }
                );
            }
        }
    }
    Ok(())
}
