//! Backprop against central finite differences on a small random MLP,
//! for every activation and both losses.

use ndarray::{Array1, Array2};
use ninlab::net::{
    backward, batch_loss, init_mlp, Activation, Batch, InitScheme, Labels, LossKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ninlab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let arch = [5, 8, 6, 3];
    let inputs = Array2::from_shape_fn((4, arch[0]), |_| rng.random_range(-1.0..1.0));
    let noise = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
    let h = 1e-6;

    for act in Activation::ALL {
        for kind in [LossKind::Mse, LossKind::CrossEntropy] {
            let labels = match kind {
                LossKind::Mse => Labels::Targets(Array2::from_shape_fn((4, 3), |_| {
                    rng.random_range(-1.0..1.0)
                })),
                LossKind::CrossEntropy => {
                    Labels::Classes((0..4).map(|_| rng.random_range(0..3)).collect())
                }
            };
            let batch = Batch::new(inputs.clone(), labels, noise.clone())?;
            let params = init_mlp(&arch, act, 1, InitScheme::FanIn, 3)?;
            let analytic = backward(&params, &batch, kind)?.to_flat();
            let flat = params.to_flat();

            let mut worst: f64 = 0.0;
            for i in 0..flat.len() {
                let mut up = flat.clone();
                let mut down = flat.clone();
                up[i] += h;
                down[i] -= h;
                let lu = batch_loss(&params.from_flat(&up)?, &batch, kind)?;
                let ld = batch_loss(&params.from_flat(&down)?, &batch, kind)?;
                let numeric = (lu - ld) / (2.0 * h);
                let rel =
                    (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-5);
                worst = worst.max(rel);
            }
            println!(
                "{act:?} {kind:?}: {} parameters, worst relative error {worst:.2e}",
                flat.len()
            );
        }
    }
    Ok(())
}
