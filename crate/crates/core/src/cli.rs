//! Command-line front end.
//!
//! Every subcommand starts from a [`RunConfig`] (defaults, or `--config`),
//! applies its flags on top, and with `--out <dir>` writes its table plus
//! the resolved `config.toml` into that directory. Without `--out` the
//! table goes to stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{DataSource, RunConfig, ScanModel};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::figure::{render_figure, FigureKind, FigureOptions, Table};
use crate::linear::{simulate_empirical, simulate_linear};
use crate::moments::{verify_theorem, EpsDistribution};
use crate::net::{train, Activation, LossKind};
use crate::noise::NoiseMode;
use crate::phases::{
    scan_sigma_grid, write_phase_csv, write_timescale_csv, ScanConfig, ScanPoint, ScanSystem,
};

pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Parser, Debug)]
#[command(name = "ninlab", version, about = "Noise injection node experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an MLP with a noise injection node and write its trajectory.
    Train(TrainArgs),
    /// Simulate the two-layer linear model.
    LinearSim(LinearSimArgs),
    /// Classify the phase at every σ_ε of a grid.
    ScanPhases(ScanArgs),
    /// Fit decay timescales at every σ_ε of a grid.
    Timescales(ScanArgs),
    /// Compare the batch-moment formulas with Monte Carlo.
    VerifyMoments(MomentArgs),
    /// Render CSV tables as an SVG chart.
    MakeFigure(FigureArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct DataFlags {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// fmnist or two_blobs.
    #[arg(long)]
    source: Option<String>,
    /// Training-set cap; 0 keeps everything.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// scalar or per_pixel.
    #[arg(long)]
    normalization: Option<String>,
}

#[derive(Args, Debug, Default)]
struct NetFlags {
    /// Comma-separated hidden widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    activation: Option<Activation>,
    /// mse or cross_entropy.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    ni_layer: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// Held-out samples per evaluation; 0 uses all.
    #[arg(long)]
    eval_limit: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct LinearFlags {
    #[arg(long)]
    w0: Option<f64>,
    #[arg(long)]
    w1: Option<f64>,
    #[arg(long)]
    w_ni: Option<f64>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct StepFlags {
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    net: NetFlags,
    #[command(flatten)]
    step: StepFlags,
    #[arg(long)]
    sigma_eps: Option<f64>,
    #[arg(long)]
    noise_mode: Option<NoiseMode>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Exit with 3 when the run diverges.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct LinearSimArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    linear: LinearFlags,
    #[command(flatten)]
    step: StepFlags,
    #[arg(long)]
    sigma_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Draw real batches instead of using the averaged recursion.
    #[arg(long)]
    empirical: bool,
    /// Exit with 3 when the run diverges.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// linear or mlp.
    #[arg(long)]
    model: Option<String>,
    /// start:stop:count, or a comma list.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    noise_mode: Option<NoiseMode>,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    net: NetFlags,
    #[command(flatten)]
    linear: LinearFlags,
    /// Learning rate and batch size of the scanned model.
    #[command(flatten)]
    step: StepFlags,
}

#[derive(Args, Debug)]
struct MomentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian or uniform.
    #[arg(long)]
    eps: Option<String>,
    /// σ for gaussian ε, half-width for uniform ε.
    #[arg(long)]
    eps_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct FigureArgs {
    /// phase, timescales or trajectory.
    #[arg(long)]
    kind: FigureKind,
    /// Input CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory; the SVG goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File name inside the output directory.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    /// Trajectory column to plot.
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    title: Option<String>,
    /// Comma-separated legend names for trajectory inputs.
    #[arg(long)]
    labels: Option<String>,
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::LinearSim(a) => cmd_linear(a),
        Command::ScanPhases(a) => cmd_scan(a, false),
        Command::Timescales(a) => cmd_scan(a, true),
        Command::VerifyMoments(a) => cmd_moments(a),
        Command::MakeFigure(a) => cmd_figure(a),
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.into()))
        .map_err(|_| Error::Config(format!("invalid --{flag} `{value}`")))
}

fn parse_list<T: std::str::FromStr>(flag: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid --{flag} entry `{v}`")))
        })
        .collect()
}

fn apply_data(c: &mut RunConfig, f: &DataFlags) -> Result<()> {
    if let Some(d) = &f.data_dir {
        c.data.dir = Some(d.clone());
    }
    if let Some(s) = &f.source {
        c.data.source = parse_enum::<DataSource>("source", s)?;
    }
    if let Some(n) = &f.normalization {
        c.data.normalization = parse_enum::<Normalization>("normalization", n)?;
    }
    if let Some(v) = f.subset {
        c.data.subset = v;
    }
    if let Some(v) = f.split {
        c.data.split = v;
    }
    if let Some(v) = f.data_seed {
        c.data.seed = v;
    }
    Ok(())
}

fn apply_net(c: &mut RunConfig, f: &NetFlags) -> Result<()> {
    let t = &mut c.train;
    if let Some(h) = &f.hidden {
        t.hidden = parse_list("hidden", h)?;
    }
    if let Some(a) = f.activation {
        t.activation = a;
    }
    if let Some(l) = &f.loss {
        t.loss = parse_enum::<LossKind>("loss", l)?;
    }
    t.ni_layer = f.ni_layer.unwrap_or(t.ni_layer);
    t.epochs = f.epochs.unwrap_or(t.epochs);
    if f.max_steps.is_some() {
        t.max_steps = f.max_steps;
    }
    t.init_seed = f.init_seed.unwrap_or(t.init_seed);
    t.eval_every = f.eval_every.unwrap_or(t.eval_every);
    t.eval_limit = f.eval_limit.unwrap_or(t.eval_limit);
    Ok(())
}

fn apply_linear(c: &mut RunConfig, f: &LinearFlags) {
    let l = &mut c.linear;
    l.w0 = f.w0.unwrap_or(l.w0);
    l.w1 = f.w1.unwrap_or(l.w1);
    l.w_ni = f.w_ni.unwrap_or(l.w_ni);
    l.sigma_x = f.sigma_x.unwrap_or(l.sigma_x);
    l.steps = f.steps.unwrap_or(l.steps);
}

/// Resolve the dataset directory into the config so the echo is complete.
fn load_data(c: &mut RunConfig) -> Result<crate::data::Dataset> {
    if c.data.source == DataSource::Fmnist {
        c.data.dir = Some(c.data.resolved_dir()?);
    }
    c.data.load()
}

/// Write `body` to `<out>/<name>` (creating `out`, echoing the config) or
/// to stdout.
fn emit(out: Option<&Path>, name: &str, body: &[u8], config: Option<&RunConfig>) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            if let Some(c) = config {
                let p = dir.join(CONFIG_ECHO);
                std::fs::write(&p, c.to_toml()?).map_err(|e| Error::io(&p, e))?;
            }
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        }
        None => {
            let mut so = std::io::stdout().lock();
            match so.write_all(body).and_then(|_| so.flush()) {
                // A closed pipe (`| head`) is the reader's choice, not a failure.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::io("<stdout>", e))
                }
                _ => Ok(()),
            }
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let mut c = base_config(&a.common)?;
    apply_data(&mut c, &a.data)?;
    apply_net(&mut c, &a.net)?;
    c.train.eta = a.step.eta.unwrap_or(c.train.eta);
    c.train.batch_size = a.step.batch.unwrap_or(c.train.batch_size);
    c.noise.sigma = a.sigma_eps.unwrap_or(c.noise.sigma);
    c.noise.mode = a.noise_mode.unwrap_or(c.noise.mode);
    c.noise.seed = a.noise_seed.unwrap_or(c.noise.seed);
    c.validate()?;
    let data = load_data(&mut c)?;
    let rec = train(&c.train_config(), &data, &c.noise.spec())?;
    let mut buf = Vec::new();
    rec.write_csv(&mut buf)?;
    emit(a.common.out.as_deref(), "trajectory.csv", &buf, Some(&c))?;
    Ok(divergence_code(rec.diverged, a.strict))
}

fn divergence_code(diverged: bool, strict: bool) -> i32 {
    if !diverged {
        return 0;
    }
    eprintln!("warning: run diverged");
    if strict {
        3
    } else {
        0
    }
}

fn cmd_linear(a: LinearSimArgs) -> Result<i32> {
    let mut c = base_config(&a.common)?;
    apply_linear(&mut c, &a.linear);
    c.linear.eta = a.step.eta.unwrap_or(c.linear.eta);
    c.linear.batch_size = a.step.batch.unwrap_or(c.linear.batch_size);
    c.linear.empirical |= a.empirical;
    c.noise.sigma = a.sigma_eps.unwrap_or(c.noise.sigma);
    c.noise.seed = a.seed.unwrap_or(c.noise.seed);
    c.validate()?;
    let s0 = c.linear.state(c.noise.sigma);
    let traj = if c.linear.empirical {
        simulate_empirical(&s0, c.linear.steps, c.noise.seed)?
    } else {
        simulate_linear(&s0, c.linear.steps, c.noise.seed)?
    };
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    emit(a.common.out.as_deref(), "trajectory.csv", &buf, Some(&c))?;
    Ok(divergence_code(traj.diverged, a.strict))
}

fn cmd_scan(a: ScanArgs, timescales: bool) -> Result<i32> {
    let mut c = base_config(&a.common)?;
    if let Some(m) = &a.model {
        c.scan.model = m.parse::<ScanModel>()?;
    }
    if let Some(g) = &a.grid {
        c.scan.grid = g.clone();
    }
    if let Some(s) = &a.seeds {
        c.scan.seeds = parse_list("seeds", s)?;
    }
    c.scan.workers = a.workers.unwrap_or(c.scan.workers);
    c.noise.mode = a.noise_mode.unwrap_or(c.noise.mode);
    apply_data(&mut c, &a.data)?;
    apply_net(&mut c, &a.net)?;
    apply_linear(&mut c, &a.linear);
    match c.scan.model {
        ScanModel::Linear => {
            c.linear.eta = a.step.eta.unwrap_or(c.linear.eta);
            c.linear.batch_size = a.step.batch.unwrap_or(c.linear.batch_size);
        }
        ScanModel::Mlp => {
            c.train.eta = a.step.eta.unwrap_or(c.train.eta);
            c.train.batch_size = a.step.batch.unwrap_or(c.train.batch_size);
        }
    }
    c.validate()?;
    let grid = c.scan.sigma_grid()?;
    let data = match c.scan.model {
        ScanModel::Mlp => Some(load_data(&mut c)?),
        ScanModel::Linear => None,
    };
    let system = match &data {
        None => ScanSystem::Linear {
            state0: c.linear.state(0.0),
            steps: c.linear.steps,
        },
        Some(d) => ScanSystem::Mlp {
            config: c.train_config(),
            dataset: d,
            mode: c.noise.mode,
        },
    };
    let scan = ScanConfig {
        system,
        classifier: c.scan.classifier,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.scan.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let points = pool.install(|| scan_sigma_grid(&scan, &grid, &c.scan.seeds))?;
    report_errors(&points);
    let mut buf = Vec::new();
    let name = if timescales {
        write_timescale_csv(&points, &mut buf)?;
        "timescales.csv"
    } else {
        write_phase_csv(&points, &mut buf)?;
        "phases.csv"
    };
    emit(a.common.out.as_deref(), name, &buf, Some(&c))?;
    Ok(0)
}

fn report_errors(points: &[ScanPoint]) {
    for p in points {
        for e in &p.errors {
            eprintln!("warning: σ_ε = {}: {e}", p.sigma_eps);
        }
    }
}

fn cmd_moments(a: MomentArgs) -> Result<i32> {
    let mut c = base_config(&a.common)?;
    let m = &mut c.moments;
    m.n = a.n.unwrap_or(m.n);
    m.batch_size = a.batch.unwrap_or(m.batch_size);
    m.trials = a.trials.unwrap_or(m.trials);
    m.seed = a.seed.unwrap_or(m.seed);
    let scale = a.eps_scale.unwrap_or(1.0);
    match a.eps.as_deref() {
        None if a.eps_scale.is_none() => {}
        None | Some("gaussian") => m.eps = EpsDistribution::Gaussian { sigma: scale },
        Some("uniform") => m.eps = EpsDistribution::Uniform { a: scale },
        Some(other) => {
            return Err(Error::Config(format!(
                "invalid --eps `{other}` (gaussian|uniform)"
            )))
        }
    }
    let report = verify_theorem(&m.experiment(), m.seed)?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))? + "\n";
    if let Some(dir) = a.common.out.as_deref() {
        emit(Some(dir), "moments.json", json.as_bytes(), Some(&c))?;
    }
    emit(None, "", json.as_bytes(), None)?;
    Ok(0)
}

fn cmd_figure(a: FigureArgs) -> Result<i32> {
    let opts = FigureOptions {
        log_x: a.log_x,
        log_y: a.log_y,
        column: a.column,
        title: a.title,
        labels: a
            .labels
            .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default(),
    };
    let tables = a
        .inputs
        .iter()
        .map(Table::read)
        .collect::<Result<Vec<_>>>()?;
    let svg = render_figure(&tables, a.kind, &opts)?;
    let name = a.name.unwrap_or_else(|| {
        let stem = match a.kind {
            FigureKind::Phase => "phase",
            FigureKind::Timescales => "timescales",
            FigureKind::Trajectory => "trajectory",
        };
        format!("{stem}.svg")
    });
    emit(a.out.as_deref(), &name, svg.as_bytes(), None)?;
    Ok(0)
}
