//! Read the FMNIST IDX files, print their shape and the split statistics,
//! and check that writing a tensor back gives the same bytes.
//!
//! NINLAB_DATA_DIR=data/fmnist cargo run --release --example idx_data

use ninlab::config::DATA_DIR_ENV;
use ninlab::data::fmnist::TRAIN_IMAGES;
use ninlab::data::{load_idx, parse_idx, prepare_fmnist};

fn main() -> ninlab::Result<()> {
    let Some(dir) = std::env::var_os(DATA_DIR_ENV) else {
        eprintln!("set {DATA_DIR_ENV} to the directory holding the FMNIST IDX files");
        std::process::exit(2);
    };
    let dir = std::path::PathBuf::from(dir);
    let images = load_idx(dir.join(TRAIN_IMAGES))?;
    println!("{TRAIN_IMAGES}: dims {:?}", images.dims);
    let bytes =
        std::fs::read(dir.join(TRAIN_IMAGES)).map_err(|e| ninlab::Error::Data(e.to_string()))?;
    println!(
        "byte-exact round trip: {}",
        parse_idx(&bytes)?.to_bytes() == bytes
    );

    let data = prepare_fmnist(&dir, 0.6, None, 0)?;
    let mean = data.val.inputs.mean().unwrap_or(f64::NAN);
    println!(
        "train {} / val {} / test {}; validation mean after standardization {mean:.4}",
        data.train.len(),
        data.val.len(),
        data.test.as_ref().map_or(0, |t| t.len())
    );
    Ok(())
}
