//! σ_ε scan of the linear model, printed as a phase table and written as
//! the phase-diagram CSV.
//!
//! cargo run --release --example scan_phases -- [out.csv]

use ninlab::config::parse_grid;
use ninlab::linear::LinearState;
use ninlab::phases::{
    phase_boundaries, scan_sigma_grid, write_phase_csv, ClassifierParams, ScanConfig, ScanSystem,
};

fn main() -> ninlab::Result<()> {
    let state0 = LinearState::default();
    let config = ScanConfig {
        system: ScanSystem::Linear {
            state0,
            steps: 2000,
        },
        classifier: ClassifierParams::default(),
    };
    let grid = parse_grid("0:20:41")?;
    let points = scan_sigma_grid(&config, &grid, &[0, 1, 2, 3, 4])?;

    let b = phase_boundaries(&state0)?;
    println!(
        "analytic: σ_cat = {:.3}, σ_div = {:.3}",
        b.sigma_cat, b.sigma_div
    );
    for p in &points {
        let votes: Vec<String> = p.votes.iter().map(|l| l.to_string()).collect();
        println!(
            "{:5.2}  {:<9}  [{}]",
            p.sigma_eps,
            p.label.map_or("error".into(), |l| l.to_string()),
            votes.join(" ")
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        let f = std::fs::File::create(&path)
            .map_err(|e| ninlab::Error::Data(format!("{path}: {e}")))?;
        write_phase_csv(&points, f)?;
        println!("wrote {path}");
    }
    Ok(())
}
