//! Without noise and with a small learning rate, one SGD step changes the
//! loss by −η‖∇L‖² to first order. Larger η breaks the expansion.

use ndarray::Array1;
use ninlab::continuum::{delta_loss_check, full_batch_descent};
use ninlab::data::synthetic;
use ninlab::net::{init_mlp, Activation, Batch, InitScheme, LossKind};

fn main() -> ninlab::Result<()> {
    let data = synthetic::two_blobs(200, 6, 3);
    let n = data.train.len();
    let batch = Batch::new(
        data.train.inputs.clone(),
        data.train.labels.clone(),
        Array1::zeros(n),
    )?;
    let params = init_mlp(&[6, 16, 2], Activation::Tanh, 0, InitScheme::FanIn, 1)?;
    for eta in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
        let (losses, grad_sq) = full_batch_descent(&params, &batch, LossKind::Mse, eta, 50)?;
        let r = delta_loss_check(&losses, &grad_sq, eta)?;
        println!(
            "η = {eta:7.0e}: median residual {:.2e}, p90 {:.2e}",
            r.median, r.p90
        );
    }
    Ok(())
}
