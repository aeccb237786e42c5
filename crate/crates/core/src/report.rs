//! Report emission: per-trial CSV logs, vector plots and a key-value metrics
//! summary. All numbers are written with fixed precision so identical
//! inputs give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{DivergenceRule, LogRow, MetricsAccumulator, TeachRun, TrialMetrics, TrialOutput};
use crate::kv::{self, KvError, KvMap};
use crate::planner::Correction;
use crate::vehicle::Pose;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("a report needs at least one trial")]
    NoTrials,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: malformed row")]
    Parse { path: PathBuf, line: usize },
    #[error(transparent)]
    Kv(#[from] KvError),
}

pub const TRIAL_HEADER: &str = "t,x,y,theta,x_ref,y_ref,theta_ref,s1,s2,v_cmd,w_cmd";
pub const ESTIMATE_HEADER: &str =
    "t,x_est,y_est,theta_est,x_map_ref,y_map_ref,theta_map_ref,progress,keyframe,delta_theta,delta_s,rho";

/// Ground truth against the teach-truth reference, plus surfaces and commands.
pub fn trial_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{TRIAL_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.t,
            r.truth.x,
            r.truth.y,
            r.truth.theta,
            r.reference.x,
            r.reference.y,
            r.reference.theta,
            r.s1,
            r.s2,
            r.v_cmd,
            r.w_cmd
        );
    }
    out
}

/// What the controller saw: odometry estimate, map reference and corrections.
pub fn estimate_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{ESTIMATE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.9},{:.6},{:.6}",
            r.t,
            r.estimate.x,
            r.estimate.y,
            r.estimate.theta,
            r.map_reference.x,
            r.map_reference.y,
            r.map_reference.theta,
            r.progress,
            r.keyframe,
            r.correction.delta_theta,
            r.correction.delta_s,
            r.correction.rho
        );
    }
    out
}

/// Per-trial metrics under `trial<N>.` plus means and an overall verdict.
pub fn metrics_summary(trials: &[TrialOutput]) -> Result<KvMap, ReportError> {
    if trials.is_empty() {
        return Err(ReportError::NoTrials);
    }
    let mut map = KvMap::new();
    map.set("trials", trials.len());
    map.set("controller", trials[0].controller);
    map.set("speed", format!("{:.3}", trials[0].speed));
    for t in trials {
        let prefix = format!("trial{}.", t.trial);
        map.set(&format!("{prefix}seed"), t.seed);
        map.extend(&t.metrics.to_kv(&prefix));
        map.set(&format!("{prefix}floored_ticks"), t.floored_ticks);
        map.set(&format!("{prefix}tau1_violations"), t.tau1_violations);
    }
    let n = trials.len() as f64;
    let mean = |f: fn(&TrialMetrics) -> f64| trials.iter().map(|t| f(&t.metrics)).sum::<f64>() / n;
    map.set("mean.mae_x", format!("{:.6}", mean(|m| m.mae_x)));
    map.set("mean.mae_y", format!("{:.6}", mean(|m| m.mae_y)));
    map.set("mean.mae_theta_deg", format!("{:.6}", mean(|m| m.mae_theta)));
    map.set("mean.mean_dist", format!("{:.6}", mean(|m| m.mean_dist)));
    let stable = trials.iter().filter(|t| t.metrics.stable).count();
    map.set("stable_trials", stable);
    map.set("all_stable", stable == trials.len());
    Ok(map)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

/// Rounds to the precision written to the CSV logs, so plots rebuilt from
/// logs match plots drawn from live trials byte for byte.
fn logged(value: f64) -> f64 {
    format!("{value:.6}").parse().unwrap_or(value)
}

fn logged_xy(p: &Pose) -> (f64, f64) {
    (logged(p.x), logged(p.y))
}

struct Series<'a> {
    name: String,
    color: &'a str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

/// Axis-aligned data box mapped onto the plot area.
struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn fit(series: &[Series], equal_aspect: bool) -> Self {
        let pts = series.iter().flat_map(|s| s.points.iter());
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        if xmin > xmax {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        let span_x = (xmax - xmin).max(1e-9);
        let span_y = (ymax - ymin).max(1e-9);
        let mut sx = (WIDTH - 2.0 * MARGIN) / span_x;
        let mut sy = (HEIGHT - 2.0 * MARGIN) / span_y;
        if equal_aspect {
            sx = sx.min(sy);
            sy = sx;
        }
        Self {
            x0: xmin,
            y0: ymin,
            sx,
            sy,
        }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (MARGIN + (x - self.x0) * self.sx, HEIGHT - MARGIN - (y - self.y0) * self.sy)
    }
}

fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], equal_aspect: bool) -> String {
    let frame = Frame::fit(series, equal_aspect);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let mut points = String::new();
        for &p in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let (px, py) = frame.map(p);
            let _ = write!(points, "{px:.2},{py:.2} ");
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
            s.name,
            s.color,
            points.trim_end()
        );
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}"{dash}/><text x="{}" y="{}" font-size="11">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 28.0,
            s.color,
            MARGIN + 32.0,
            ly + 4.0,
            s.name
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Teach ground truth, teach odometry and each repeat's ground truth.
pub fn overlay_svg(teach: &TeachRun, trials: &[TrialOutput]) -> String {
    let mut series = vec![
        Series {
            name: "teach".into(),
            color: "black",
            dashed: false,
            points: teach.trajectory.iter().map(|s| logged_xy(&s.truth)).collect(),
        },
        Series {
            name: "teach-odom".into(),
            color: "#7f7f7f",
            dashed: true,
            points: teach.trajectory.iter().map(|s| logged_xy(&s.odometry)).collect(),
        },
    ];
    for t in trials {
        series.push(Series {
            name: format!("repeat {}", t.trial),
            color: PALETTE[t.trial % PALETTE.len()],
            dashed: false,
            points: t.rows.iter().map(|r| logged_xy(&r.truth)).collect(),
        });
    }
    svg_plot("Trajectory overlay", "x (m)", "y (m)", &series, true)
}

/// Planar distance to the teach-truth reference against time, per trial.
pub fn distance_svg(trials: &[TrialOutput]) -> String {
    let series: Vec<Series> = trials
        .iter()
        .map(|t| Series {
            name: format!("repeat {}", t.trial),
            color: PALETTE[t.trial % PALETTE.len()],
            dashed: false,
            points: t
                .rows
                .iter()
                .map(|r| {
                    let (a, b) = (logged_xy(&r.truth), logged_xy(&r.reference));
                    (logged(r.t), (a.0 - b.0).hypot(a.1 - b.1))
                })
                .collect(),
        })
        .collect();
    svg_plot("Distance error", "t (s)", "distance (m)", &series, false)
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    std::fs::write(&path, text).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Writes `trial_<N>.csv`, `trial_<N>_odom.csv`, `overlay.svg`,
/// `distance.svg` and `metrics.txt` into `dir`, returning the paths.
pub fn emit_report(dir: impl AsRef<Path>, teach: &TeachRun, trials: &[TrialOutput]) -> Result<Vec<PathBuf>, ReportError> {
    let dir = dir.as_ref();
    let summary = metrics_summary(trials)?;
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for t in trials {
        write(dir.join(format!("trial_{}.csv", t.trial)), &trial_csv(&t.rows), &mut written)?;
        write(dir.join(format!("trial_{}_odom.csv", t.trial)), &estimate_csv(&t.rows), &mut written)?;
    }
    write(dir.join("overlay.svg"), &overlay_svg(teach, trials), &mut written)?;
    write(dir.join("distance.svg"), &distance_svg(trials), &mut written)?;
    write(dir.join("metrics.txt"), &summary.render("# repeat metrics"), &mut written)?;
    Ok(written)
}

fn parse_csv(path: &Path, cols: usize) -> Result<Vec<Vec<f64>>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let v: Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
            match v {
                Ok(v) if v.len() == cols => Ok(v),
                _ => Err(ReportError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                }),
            }
        })
        .collect()
}

/// Rebuilds trial outputs from a report directory written by [`emit_report`].
///
/// Metrics are recomputed from the logs under `rule`. Saturation is not
/// logged, so a log that stops before the path is complete is classed as
/// unstable without a recorded cause. Progress is logged to 1e-6 m, hence
/// the small allowance when judging completion.
pub fn load_trials(dir: impl AsRef<Path>, rule: &DivergenceRule, map_length: f64) -> Result<Vec<TrialOutput>, ReportError> {
    let dir = dir.as_ref();
    let summary = kv::read_file(dir.join("metrics.txt"))?;
    let count: usize = summary.parsed("trials")?;
    let controller = match summary.require("controller")? {
        "baseline" => "baseline",
        _ => "smc",
    };
    let speed = summary.f64("speed")?;
    (0..count)
        .map(|trial| {
            let truth_path = dir.join(format!("trial_{trial}.csv"));
            let est_path = dir.join(format!("trial_{trial}_odom.csv"));
            let a = parse_csv(&truth_path, 11)?;
            let b = parse_csv(&est_path, 12)?;
            if a.len() != b.len() {
                return Err(ReportError::Parse {
                    path: est_path,
                    line: b.len().min(a.len()) + 2,
                });
            }
            let rows: Vec<LogRow> = a
                .iter()
                .zip(&b)
                .map(|(a, b)| LogRow {
                    t: a[0],
                    truth: Pose::new(a[1], a[2], a[3]),
                    reference: Pose::new(a[4], a[5], a[6]),
                    estimate: Pose::new(b[1], b[2], b[3]),
                    map_reference: Pose::new(b[4], b[5], b[6]),
                    s1: a[7],
                    s2: a[8],
                    v_cmd: a[9],
                    w_cmd: a[10],
                    progress: b[7],
                    keyframe: b[8] as usize,
                    correction: Correction {
                        delta_theta: b[9],
                        delta_s: b[10],
                        rho: b[11],
                    },
                })
                .collect();
            let mut acc = MetricsAccumulator::new(*rule);
            for r in &rows {
                acc.push(r.t, &r.truth, &r.reference, false);
            }
            let progress = rows.last().map_or(0.0, |r| r.progress);
            let completion = if map_length > 0.0 {
                (progress / map_length).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let metrics = acc.finish((completion + 1e-7).min(1.0));
            let seed = summary.parsed(&format!("trial{trial}.seed"))?;
            let counter = |key: &str| summary.parsed::<usize>(&format!("trial{trial}.{key}"));
            Ok(TrialOutput {
                trial,
                seed,
                controller,
                speed,
                metrics,
                rows,
                floored_ticks: counter("floored_ticks")?,
                tau1_violations: counter("tau1_violations")?,
            })
        })
        .collect()
}
