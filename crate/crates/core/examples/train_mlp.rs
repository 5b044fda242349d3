//! Train a one-hidden-layer MLP with a noise injection node and follow the
//! NIW norm. Uses FMNIST when `NINLAB_DATA_DIR` is set, two Gaussian blobs
//! otherwise.
//!
//! cargo run --release --example train_mlp -- [sigma_eps]

use ninlab::config::DATA_DIR_ENV;
use ninlab::data::{prepare_fmnist, synthetic};
use ninlab::net::{train, TrainConfig};
use ninlab::{NoiseMode, NoiseSpec};

fn main() -> ninlab::Result<()> {
    let sigma: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2.0);
    let (data, name) = match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => (prepare_fmnist(dir, 0.6, Some(8000), 0)?, "fmnist"),
        None => (synthetic::two_blobs(2000, 16, 0), "two blobs"),
    };
    let config = TrainConfig {
        hidden: vec![64],
        epochs: 20,
        batch_size: 64,
        eta: 0.05,
        eval_every: 20,
        ..TrainConfig::default()
    };
    let rec = train(
        &config,
        &data,
        &NoiseSpec::new(sigma, NoiseMode::ResampledPerEpoch),
    )?;

    println!(
        "{name}: {} training samples, σ_ε = {sigma}",
        data.train.len()
    );
    println!(
        "{:>6} {:>12} {:>12} {:>10}",
        "step", "train_loss", "test_loss", "|NIW|"
    );
    for e in rec.entries.iter().filter(|e| e.test_loss.is_some()) {
        println!(
            "{:>6} {:>12.5} {:>12.5} {:>10.5}",
            e.step,
            e.train_loss,
            e.test_loss.unwrap_or(f64::NAN),
            e.niw_norm
        );
    }
    if rec.diverged {
        println!("run diverged");
    }
    Ok(())
}
