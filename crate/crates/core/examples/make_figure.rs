//! Scan the linear model and draw the phase diagram, plus an overlay of
//! two single runs.
//!
//! cargo run --release --example make_figure -- [out_dir]

use std::path::PathBuf;

use ninlab::figure::{emit_figure, FigureKind, FigureOptions};
use ninlab::linear::{simulate_linear, LinearState};
use ninlab::phases::{scan_sigma_grid, write_phase_csv, ClassifierParams, ScanConfig, ScanSystem};
use ninlab::Error;

fn main() -> ninlab::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "out/figures".into()),
    );
    std::fs::create_dir_all(&out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;
    let create = |name: &str| {
        let p = out.join(name);
        std::fs::File::create(&p)
            .map(|f| (p.clone(), f))
            .map_err(|e| Error::Data(format!("{}: {e}", p.display())))
    };

    let state0 = LinearState::default();
    let config = ScanConfig {
        system: ScanSystem::Linear {
            state0,
            steps: 2000,
        },
        classifier: ClassifierParams::default(),
    };
    let grid: Vec<f64> = (0..41).map(|i| 0.5 * i as f64).collect();
    let points = scan_sigma_grid(&config, &grid, &[0, 1, 2])?;
    let (phase_csv, f) = create("phases.csv")?;
    write_phase_csv(&points, f)?;
    let log_y = FigureOptions {
        log_y: true,
        ..FigureOptions::default()
    };
    emit_figure(
        &[phase_csv],
        FigureKind::Phase,
        &log_y,
        &out.join("phases.svg"),
    )?;

    let mut runs = Vec::new();
    for sigma in [2.0, 4.0] {
        let (p, f) = create(&format!("sigma_{sigma}.csv"))?;
        simulate_linear(&state0.with_sigma(sigma), 300, 0)?.write_csv(f)?;
        runs.push(p);
    }
    emit_figure(
        &runs,
        FigureKind::Trajectory,
        &log_y,
        &out.join("trajectories.svg"),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
