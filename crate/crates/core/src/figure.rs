//! Static SVG line charts from the CSV tables this crate writes.
//!
//! Output is plain text assembled in a fixed order with fixed number
//! formatting, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::phases::PhaseLabel;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Blue and light blue come first so a fixed/resampled pair reads as one
/// family.
const PALETTE: [&str; 6] = [
    "#1f4e9c", "#6fa8dc", "#d95f02", "#1b9e77", "#7570b3", "#e7298a",
];

const PHASE_COLUMNS: [&str; 6] = [
    "sigma_eps",
    "label",
    "tau_niw",
    "tau_train",
    "tau_test",
    "peak_loss_ratio",
];
const TIMESCALE_COLUMNS: [&str; 7] = [
    "sigma_eps",
    "tau_niw_fit",
    "tau_train_fit",
    "tau_test_fit",
    "r2_niw",
    "r2_train",
    "r2_test",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Phase-diagram CSV: shaded label regions with the fitted τ on top.
    Phase,
    /// Timescale CSV: fitted τ against σ_ε.
    Timescales,
    /// One or more trajectory CSVs (MLP or linear) overlaid.
    Trajectory,
}

impl std::str::FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" => Ok(FigureKind::Phase),
            "timescales" => Ok(FigureKind::Timescales),
            "trajectory" => Ok(FigureKind::Trajectory),
            _ => Err(Error::Config(format!(
                "unknown figure kind `{s}` (phase|timescales|trajectory)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FigureOptions {
    pub log_x: bool,
    pub log_y: bool,
    /// Trajectory column to plot; defaults to `niw_norm`, or `|w_ni|` for
    /// linear trajectories.
    pub column: Option<String>,
    pub title: Option<String>,
    /// Legend names for trajectory inputs, in order; file stems otherwise.
    pub labels: Vec<String>,
}

/// A CSV table held as string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &bytes)
    }

    pub fn parse(path: &Path, bytes: &[u8]) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| schema(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| schema(e.to_string()))?;
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        if headers.iter().all(|h| h.is_empty()) || rows.is_empty() {
            return Err(schema("no data rows".into()));
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::Schema {
                path: self.path.clone(),
                message: format!("missing column `{column}`"),
            })
    }

    pub fn require(&self, columns: &[&str]) -> Result<()> {
        columns.iter().try_for_each(|c| self.index(c).map(|_| ()))
    }

    /// Numeric column; empty cells become NaN.
    pub fn numbers(&self, column: &str) -> Result<Vec<f64>> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row.get(i).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    return Ok(f64::NAN);
                }
                cell.parse().map_err(|_| Error::Schema {
                    path: self.path.clone(),
                    message: format!(
                        "row {}: `{cell}` in column `{column}` is not a number",
                        r + 1
                    ),
                })
            })
            .collect()
    }

    pub fn strings(&self, column: &str) -> Result<Vec<String>> {
        let i = self.index(column)?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.get(i).cloned().unwrap_or_default())
            .collect())
    }

    fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".into())
    }
}

struct Line {
    name: String,
    x: Vec<f64>,
    y: Vec<f64>,
    dashed: bool,
    markers: bool,
}

struct Band {
    lo: f64,
    hi: f64,
    label: String,
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Axis> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if log {
            let (a, b) = (lo.log10().floor(), hi.log10().ceil());
            let b = if b <= a { a + 1.0 } else { b };
            return Some(Axis { lo: a, hi: b, log });
        }
        if hi <= lo {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
            return Some(Axis {
                lo: lo - pad,
                hi: hi + pad,
                log,
            });
        }
        let step = nice_step((hi - lo) / 5.0);
        Some(Axis {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            log,
        })
    }

    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let stride = ((b - a) / 8 + 1).max(1);
            return (a..=b)
                .filter(|k| (k - a) % stride == 0)
                .map(|k| ((k - a) as f64 / (b - a) as f64, decade_label(k)))
                .collect();
        }
        let step = nice_step((self.hi - self.lo) / 5.0);
        let n = ((self.hi - self.lo) / step).round() as i64;
        (0..=n)
            .map(|i| {
                let v = self.lo + i as f64 * step;
                ((v - self.lo) / (self.hi - self.lo), number_label(v, step))
            })
            .collect()
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn decade_label(k: i32) -> String {
    match k {
        -2 => "0.01".into(),
        -1 => "0.1".into(),
        0..=3 => format!("{}", 10i64.pow(k as u32)),
        _ => format!("1e{k}"),
    }
}

fn number_label(v: f64, step: f64) -> String {
    let v = if v.abs() < step * 1e-9 { 0.0 } else { v };
    let digits = (-step.log10().floor()).max(0.0) as usize;
    if v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        format!("{v:.digits$}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn band_color(label: &str) -> &'static str {
    match label.parse::<PhaseLabel>() {
        Ok(PhaseLabel::Decoupled) => "#e0e0e0",
        Ok(PhaseLabel::Decay) => "#c6dbef",
        Ok(PhaseLabel::Catapult) => "#fdd0a2",
        Ok(PhaseLabel::Divergent) => "#fcbba1",
        Err(_) => "#ffffff",
    }
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    log_y: bool,
    bands: Vec<Band>,
    lines: Vec<Line>,
}

impl Chart {
    fn render(&self) -> Result<String> {
        let xs = self
            .lines
            .iter()
            .flat_map(|l| l.x.iter().copied())
            .chain(self.bands.iter().flat_map(|b| [b.lo, b.hi]));
        let x_axis = Axis::fit(xs, self.log_x)
            .ok_or_else(|| Error::Data("nothing to plot on the x axis".into()))?;
        let y_axis = Axis::fit(
            self.lines.iter().flat_map(|l| l.y.iter().copied()),
            self.log_y,
        )
        .unwrap_or(Axis {
            lo: 0.0,
            hi: 1.0,
            log: self.log_y,
        });
        let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
        let px = |u: f64| LEFT + u * pw;
        let py = |u: f64| TOP + (1.0 - u) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(
            s,
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        for b in &self.bands {
            let (Some(a), Some(c)) = (x_axis.unit(b.lo), x_axis.unit(b.hi)) else {
                continue;
            };
            let _ = writeln!(
                s,
                "<rect class=\"band band-{}\" x=\"{:.2}\" y=\"{TOP:.2}\" width=\"{:.2}\" height=\"{ph:.2}\" fill=\"{}\"/>",
                escape(&b.label),
                px(a),
                px(c) - px(a),
                band_color(&b.label)
            );
        }

        let _ = writeln!(
            s,
            "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#000000\"/>"
        );
        for (u, label) in x_axis.ticks() {
            let x = px(u);
            let _ = writeln!(
                s,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
                TOP + ph,
                TOP + ph + 5.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                TOP + ph + 18.0,
                escape(&label)
            );
        }
        for (u, label) in y_axis.ticks() {
            let y = py(u);
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT:.2}\" y2=\"{y:.2}\" stroke=\"#000000\"/>",
                LEFT - 5.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                LEFT - 8.0,
                y + 4.0,
                escape(&label)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (k, line) in self.lines.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let dash = if line.dashed {
                " stroke-dasharray=\"6 3\""
            } else {
                ""
            };
            let mut segment: Vec<(f64, f64)> = Vec::new();
            let mut segments = Vec::new();
            for (&x, &y) in line.x.iter().zip(&line.y) {
                match (x_axis.unit(x), y_axis.unit(y)) {
                    (Some(u), Some(v)) => segment.push((px(u), py(v.clamp(-0.05, 1.05)))),
                    _ => segments.push(std::mem::take(&mut segment)),
                }
            }
            segments.push(segment);
            for seg in segments.iter().filter(|seg| !seg.is_empty()) {
                if seg.len() > 1 {
                    let pts: Vec<String> =
                        seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>",
                        pts.join(" ")
                    );
                }
                if line.markers || seg.len() == 1 {
                    for (x, y) in seg {
                        let _ = writeln!(
                            s,
                            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{color}\"/>"
                        );
                    }
                }
            }
            let ly = TOP + 14.0 + 18.0 * k as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
                lx + 20.0
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
                lx + 26.0,
                ly + 4.0,
                escape(&line.name)
            );
        }
        let mut seen: Vec<&str> = Vec::new();
        for b in &self.bands {
            if seen.contains(&b.label.as_str()) {
                continue;
            }
            seen.push(&b.label);
        }
        seen.sort_by_key(|l| l.parse::<PhaseLabel>().map_or(usize::MAX, |p| p as usize));
        for (k, label) in seen.iter().enumerate() {
            let y = TOP + 14.0 + 18.0 * (self.lines.len() + 1 + k) as f64;
            let x = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"20\" height=\"10\" fill=\"{}\" stroke=\"#808080\"/>",
                y - 5.0,
                band_color(label)
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
                x + 26.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// Extents of each grid point's cell: halfway to its neighbours, clipped to
/// the grid ends.
fn cells(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    if n == 1 {
        return vec![(x[0] - 0.5, x[0] + 0.5)];
    }
    (0..n)
        .map(|i| {
            let lo = if i == 0 {
                x[0]
            } else {
                0.5 * (x[i - 1] + x[i])
            };
            let hi = if i + 1 == n {
                x[n - 1]
            } else {
                0.5 * (x[i] + x[i + 1])
            };
            (lo, hi)
        })
        .collect()
}

/// NIW, train and test τ columns as lines; all-empty columns are left out.
fn tau_lines(t: &Table, sigma: &[f64], columns: [&str; 3]) -> Result<Vec<Line>> {
    let mut lines = Vec::new();
    for (c, name) in columns.into_iter().zip(["τ NIW", "τ train", "τ test"]) {
        let y = t.numbers(c)?;
        if y.iter().any(|v| v.is_finite()) {
            lines.push(Line {
                name: name.into(),
                x: sigma.to_vec(),
                y,
                dashed: false,
                markers: true,
            });
        }
    }
    Ok(lines)
}

fn phase_chart(t: &Table, opts: &FigureOptions) -> Result<Chart> {
    t.require(&PHASE_COLUMNS)?;
    let sigma = t.numbers("sigma_eps")?;
    let labels = t.strings("label")?;
    if sigma.iter().any(|s| !s.is_finite()) || sigma.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Schema {
            path: t.path.clone(),
            message: "sigma_eps must be finite and strictly ascending".into(),
        });
    }
    if opts.log_x && sigma[0] <= 0.0 {
        return Err(Error::Config("log x axis needs positive sigma_eps".into()));
    }
    let mut bands: Vec<Band> = Vec::new();
    for ((lo, hi), label) in cells(&sigma).into_iter().zip(labels) {
        match bands.last_mut() {
            Some(b) if b.label == label => b.hi = hi,
            _ => bands.push(Band { lo, hi, label }),
        }
    }
    let lines = tau_lines(t, &sigma, ["tau_niw", "tau_train", "tau_test"])?;
    Ok(Chart {
        title: opts.title.clone().unwrap_or_else(|| "Phases".into()),
        x_label: "σ_ε".into(),
        y_label: "fitted τ".into(),
        log_x: opts.log_x,
        log_y: opts.log_y,
        bands,
        lines,
    })
}

fn timescale_chart(t: &Table, opts: &FigureOptions) -> Result<Chart> {
    t.require(&TIMESCALE_COLUMNS)?;
    let sigma = t.numbers("sigma_eps")?;
    let lines = tau_lines(t, &sigma, ["tau_niw_fit", "tau_train_fit", "tau_test_fit"])?;
    Ok(Chart {
        title: opts
            .title
            .clone()
            .unwrap_or_else(|| "Decay timescales".into()),
        x_label: "σ_ε".into(),
        y_label: "fitted τ".into(),
        log_x: opts.log_x,
        log_y: opts.log_y,
        bands: Vec::new(),
        lines,
    })
}

fn trajectory_chart(tables: &[Table], opts: &FigureOptions) -> Result<Chart> {
    let mut lines = Vec::new();
    let mut y_label = String::new();
    let stems: Vec<String> = tables.iter().map(Table::stem).collect();
    let names: Vec<String> = tables
        .iter()
        .enumerate()
        .map(|(i, t)| match opts.labels.get(i) {
            Some(l) => l.clone(),
            None if stems.iter().filter(|s| **s == stems[i]).count() > 1 => {
                t.path.display().to_string()
            }
            None => stems[i].clone(),
        })
        .collect();
    for (t, name) in tables.iter().zip(names) {
        t.require(&["step"])?;
        let (column, abs) = match &opts.column {
            Some(c) => (c.as_str(), false),
            None if t.headers.iter().any(|h| h == "niw_norm") => ("niw_norm", false),
            None if t.headers.iter().any(|h| h == "w_ni") => ("w_ni", true),
            None => ("niw_norm", false),
        };
        let mut y = t.numbers(column)?;
        if abs {
            y.iter_mut().for_each(|v| *v = v.abs());
        }
        if y_label.is_empty() {
            y_label = if abs {
                format!("|{column}|")
            } else {
                column.to_string()
            };
        }
        lines.push(Line {
            name,
            x: t.numbers("step")?,
            y,
            dashed: false,
            markers: false,
        });
    }
    Ok(Chart {
        title: opts.title.clone().unwrap_or_else(|| "Trajectories".into()),
        x_label: "step".into(),
        y_label,
        log_x: opts.log_x,
        log_y: opts.log_y,
        bands: Vec::new(),
        lines,
    })
}

/// Render parsed tables. Phase and timescale figures take exactly one.
pub fn render_figure(tables: &[Table], kind: FigureKind, opts: &FigureOptions) -> Result<String> {
    let single = || match tables {
        [t] => Ok(t),
        _ => Err(Error::Config(format!(
            "{kind:?} figures take exactly one CSV, got {}",
            tables.len()
        ))),
    };
    let chart = match kind {
        FigureKind::Phase => phase_chart(single()?, opts)?,
        FigureKind::Timescales => timescale_chart(single()?, opts)?,
        FigureKind::Trajectory => {
            if tables.is_empty() {
                return Err(Error::Config("no trajectory CSVs given".into()));
            }
            trajectory_chart(tables, opts)?
        }
    };
    chart.render()
}

/// Read the CSVs, render, and only then write `out`; a failure leaves no
/// file behind.
pub fn emit_figure(
    csv_paths: &[PathBuf],
    kind: FigureKind,
    opts: &FigureOptions,
    out: &Path,
) -> Result<()> {
    let tables = csv_paths
        .iter()
        .map(Table::read)
        .collect::<Result<Vec<_>>>()?;
    let svg = render_figure(&tables, kind, opts)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}
