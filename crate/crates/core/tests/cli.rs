use std::path::Path;
use std::process::{Command, Output};

fn ninlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ninlab"))
        .args(args)
        .env_remove("NINLAB_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_moments_prints_a_passing_report() {
    let o = ninlab(&[
        "verify-moments",
        "--n",
        "2",
        "--batch",
        "100",
        "--trials",
        "100000",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in [
        "n",
        "batch_size",
        "trials",
        "analytic_mean",
        "analytic_var",
        "emp_mean",
        "emp_var",
        "z_mean",
        "z_var",
        "pass",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["pass"], true);
    assert!((v["analytic_var"].as_f64().unwrap() - 0.02).abs() < 1e-12);
}

#[test]
fn zero_noise_linear_sim_keeps_w_ni() {
    let o = ninlab(&["linear-sim", "--sigma-eps", "0", "--steps", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,w0,w1,w_ni,loss,diverged"));
    let w_ni: Vec<f64> = lines
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(w_ni.len(), 1001);
    assert!(w_ni.iter().all(|&w| w == w_ni[0]));
}

#[test]
fn linear_scan_has_one_row_per_grid_point() {
    let o = ninlab(&["scan-phases", "--model", "linear", "--grid", "0:20:41"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("sigma_eps,label,tau_niw,tau_train,tau_test,peak_loss_ratio")
    );
    let labels: Vec<String> = lines
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(labels.len(), 41);
    assert_eq!(labels[0], "decoupled");
    // Divergence, once reached, holds to the end of the grid.
    let first_div = labels.iter().position(|l| l == "divergent").unwrap();
    assert!(labels[first_div..].iter().all(|l| l == "divergent"));
}

#[test]
fn timescale_csv_header() {
    let o = ninlab(&[
        "timescales",
        "--model",
        "linear",
        "--grid",
        "1:4:4",
        "--seeds",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o)
        .starts_with("sigma_eps,tau_niw_fit,tau_train_fit,tau_test_fit,r2_niw,r2_train,r2_test\n"));
}

#[test]
fn trajectory_csv_header() {
    let o = ninlab(&[
        "train",
        "--source",
        "two_blobs",
        "--hidden",
        "4,3",
        "--epochs",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let header = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "step,train_loss,test_loss,train_acc,test_acc,niw_norm,w_norm_0,w_norm_1,w_norm_2,diverged"
    );
}

#[test]
fn exit_codes() {
    assert_eq!(ninlab(&["bogus"]).status.code(), Some(1));
    assert_eq!(
        ninlab(&["linear-sim", "--steps", "many"]).status.code(),
        Some(1)
    );
    assert_eq!(
        ninlab(&["train", "--data-dir", "/nonexistent/fmnist"])
            .status
            .code(),
        Some(2)
    );
    // FMNIST is the default source; without a directory it is a data error.
    assert_eq!(ninlab(&["train"]).status.code(), Some(2));

    let blowup = [
        "train",
        "--source",
        "two_blobs",
        "--sigma-eps",
        "1e4",
        "--epochs",
        "3",
    ];
    assert_eq!(ninlab(&blowup).status.code(), Some(0));
    let mut strict = blowup.to_vec();
    strict.push("--strict");
    assert_eq!(ninlab(&strict).status.code(), Some(3));

    let o = ninlab(&[
        "linear-sim",
        "--sigma-eps",
        "500",
        "--steps",
        "100",
        "--strict",
    ]);
    assert_eq!(o.status.code(), Some(3));
    // Scans keep going through divergent points.
    let o = ninlab(&[
        "scan-phases",
        "--model",
        "linear",
        "--grid",
        "0,1000",
        "--seeds",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn output_directory_gets_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = ninlab(&[
        "linear-sim",
        "--sigma-eps",
        "2.5",
        "--steps",
        "50",
        "--w-ni",
        "0.7",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let parsed = ninlab::config::RunConfig::from_toml(&cfg).unwrap();
    assert_eq!(parsed.noise.sigma, 2.5);
    assert_eq!(parsed.linear.w_ni, 0.7);
    assert_eq!(parsed.linear.steps, 50);
}

#[test]
fn flags_override_config_and_inputs_are_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("in.toml");
    std::fs::write(&cfg, "[noise]\nsigma = 1.0\n\n[linear]\nsteps = 20\n").unwrap();
    let before = std::fs::read(&cfg).unwrap();
    let out = tmp.path().join("o");
    let o = ninlab(&[
        "linear-sim",
        "--config",
        path(&cfg),
        "--steps",
        "30",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&cfg).unwrap(), before);
    let rows = std::fs::read_to_string(out.join("trajectory.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 32);
    let echoed = ninlab::config::RunConfig::load(out.join("config.toml")).unwrap();
    assert_eq!(echoed.noise.sigma, 1.0);
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[noise]\nsigmaa = 1.0\n").unwrap();
    let o = ninlab(&["linear-sim", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigmaa"));
}

#[test]
fn make_figure_writes_nothing_on_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = tmp.path().join("fig");
    let o = ninlab(&[
        "make-figure",
        "--kind",
        "phase",
        path(&empty),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let wrong = tmp.path().join("wrong.csv");
    std::fs::write(&wrong, "sigma_eps,tau_niw\n1,2\n").unwrap();
    let o = ninlab(&[
        "make-figure",
        "--kind",
        "phase",
        path(&wrong),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("label"));
    assert!(!out.exists());
}

#[test]
fn fixed_and_resampled_overlay() {
    let tmp = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for mode in ["resampled_per_epoch", "fixed_per_sample"] {
        let out = tmp.path().join(mode);
        let o = ninlab(&[
            "train",
            "--source",
            "two_blobs",
            "--hidden",
            "8",
            "--epochs",
            "3",
            "--sigma-eps",
            "2",
            "--noise-mode",
            mode,
            "--out",
            path(&out),
        ]);
        assert_eq!(o.status.code(), Some(0));
        inputs.push(out.join("trajectory.csv"));
    }
    let o = ninlab(&[
        "make-figure",
        "--kind",
        "trajectory",
        path(&inputs[0]),
        path(&inputs[1]),
        "--log-y",
        "--labels",
        "resampled,fixed",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let svg = stdout(&o);
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">resampled<") && svg.contains(">fixed<"));
    assert_eq!(svg.matches("<polyline").count(), 2);
}
