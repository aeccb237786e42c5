//! Scripted teach paths: densely sampled planar curves with arc-length.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::angle::wrap_angle;
use crate::vehicle::Pose;

const SAMPLE_SPACING: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("cannot read waypoint file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("waypoint file line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("a path needs at least two distinct points")]
    Degenerate,
    #[error("unknown path shape `{0}`")]
    UnknownShape(String),
}

/// Built-in teach path shapes, or a waypoint file.
#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    /// Rounded rectangle traversed counter-clockwise, ending at its start.
    Loop { length: f64, width: f64, radius: f64 },
    SCurve,
    FigureEight,
    Waypoints(PathBuf),
}

impl PathSpec {
    /// Closed loop of ≈70.6 m.
    pub fn indoor_loop() -> Self {
        Self::Loop {
            length: 25.0,
            width: 12.0,
            radius: 2.0,
        }
    }

    /// Closed loop of ≈44.6 m.
    pub fn outdoor_loop() -> Self {
        Self::Loop {
            length: 15.0,
            width: 9.0,
            radius: 2.0,
        }
    }

    /// `loop`, `loop44`, `s-curve`, `figure-eight`, or a waypoint file path.
    pub fn parse(text: &str) -> Result<Self, PathError> {
        match text {
            "loop" | "loop70" => Ok(Self::indoor_loop()),
            "loop44" => Ok(Self::outdoor_loop()),
            "s-curve" | "scurve" => Ok(Self::SCurve),
            "figure-eight" | "figure8" => Ok(Self::FigureEight),
            other if Path::new(other).extension().is_some() => Ok(Self::Waypoints(PathBuf::from(other))),
            other => Err(PathError::UnknownShape(other.to_string())),
        }
    }

    pub fn build(&self) -> Result<ScriptedPath, PathError> {
        match self {
            Self::Loop { length, width, radius } => {
                let (a, b, r) = (*length, *width, *radius);
                let quarter = std::f64::consts::FRAC_PI_2;
                Ok(PathBuilder::new(Pose::default())
                    .straight((a - 2.0 * r) / 2.0)
                    .arc(r, quarter)
                    .straight(b - 2.0 * r)
                    .arc(r, quarter)
                    .straight(a - 2.0 * r)
                    .arc(r, quarter)
                    .straight(b - 2.0 * r)
                    .arc(r, quarter)
                    .straight((a - 2.0 * r) / 2.0)
                    .finish())
            }
            Self::SCurve => {
                let quarter = std::f64::consts::FRAC_PI_2;
                Ok(PathBuilder::new(Pose::default())
                    .straight(3.0)
                    .arc(4.0, quarter)
                    .arc(4.0, -2.0 * quarter)
                    .arc(4.0, quarter)
                    .straight(3.0)
                    .finish())
            }
            Self::FigureEight => {
                let full = std::f64::consts::TAU;
                Ok(PathBuilder::new(Pose::default())
                    .arc(4.0, full)
                    .arc(4.0, -full)
                    .finish())
            }
            Self::Waypoints(path) => ScriptedPath::from_waypoint_file(path),
        }
    }
}

/// Incremental construction from straight and circular pieces.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    poses: Vec<Pose>,
}

impl PathBuilder {
    pub fn new(start: Pose) -> Self {
        Self { poses: vec![start] }
    }

    fn last(&self) -> Pose {
        *self.poses.last().expect("builder starts with a pose")
    }

    pub fn straight(mut self, length: f64) -> Self {
        let start = self.last();
        let n = (length / SAMPLE_SPACING).ceil().max(1.0) as usize;
        let (sin, cos) = start.theta.sin_cos();
        for i in 1..=n {
            let d = length * i as f64 / n as f64;
            self.poses.push(Pose::new(start.x + d * cos, start.y + d * sin, start.theta));
        }
        self
    }

    /// Circular arc; positive `angle` turns left.
    pub fn arc(mut self, radius: f64, angle: f64) -> Self {
        let start = self.last();
        let n = (radius * angle.abs() / SAMPLE_SPACING).ceil().max(1.0) as usize;
        let side = angle.signum();
        // Centre lies to the left for left turns.
        let cx = start.x - side * radius * start.theta.sin();
        let cy = start.y + side * radius * start.theta.cos();
        for i in 1..=n {
            let turned = angle * i as f64 / n as f64;
            let heading = start.theta + turned;
            self.poses.push(Pose::new(
                cx + side * radius * heading.sin(),
                cy - side * radius * heading.cos(),
                wrap_angle(heading),
            ));
        }
        self
    }

    pub fn finish(self) -> ScriptedPath {
        ScriptedPath::from_poses(self.poses).expect("builder pieces have positive length")
    }
}

/// Densely sampled path with cumulative arc-length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPath {
    poses: Vec<Pose>,
    arc: Vec<f64>,
}

impl ScriptedPath {
    pub fn from_poses(poses: Vec<Pose>) -> Result<Self, PathError> {
        let mut kept: Vec<Pose> = Vec::with_capacity(poses.len());
        let mut arc = Vec::with_capacity(poses.len());
        for p in poses {
            match kept.last() {
                None => arc.push(0.0),
                Some(last) => {
                    let d = p.distance_to(last);
                    if d <= 1e-12 {
                        continue;
                    }
                    arc.push(arc.last().copied().unwrap_or(0.0) + d);
                }
            }
            kept.push(p);
        }
        if kept.len() < 2 {
            return Err(PathError::Degenerate);
        }
        Ok(Self { poses: kept, arc })
    }

    /// Polyline through `x,y` rows (`#` comments allowed); headings follow
    /// the segment directions.
    pub fn from_waypoint_file(path: &Path) -> Result<Self, PathError> {
        let text = fs::read_to_string(path).map_err(|source| PathError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |t: &str| {
                t.trim().parse::<f64>().map_err(|_| PathError::Syntax {
                    line: i + 1,
                    reason: format!("bad number `{t}`"),
                })
            };
            let mut fields = line.split(',');
            let (Some(x), Some(y)) = (fields.next(), fields.next()) else {
                return Err(PathError::Syntax {
                    line: i + 1,
                    reason: "expected `x,y`".to_string(),
                });
            };
            points.push((parse(x)?, parse(y)?));
        }
        if points.len() < 2 {
            return Err(PathError::Degenerate);
        }
        let mut poses = Vec::new();
        for pair in points.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            let heading = (y1 - y0).atan2(x1 - x0);
            let len = (x1 - x0).hypot(y1 - y0);
            let n = (len / SAMPLE_SPACING).ceil().max(1.0) as usize;
            if poses.is_empty() {
                poses.push(Pose::new(x0, y0, heading));
            }
            for k in 1..=n {
                let u = k as f64 / n as f64;
                poses.push(Pose::new(x0 + u * (x1 - x0), y0 + u * (y1 - y0), heading));
            }
        }
        Self::from_poses(poses)
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().expect("at least two samples")
    }

    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    /// Interpolated pose at arc-length `s` (clamped to the path).
    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let i = self.arc.partition_point(|&a| a <= s).clamp(1, self.arc.len() - 1) - 1;
        let (a, b) = (self.poses[i], self.poses[i + 1]);
        let u = (s - self.arc[i]) / (self.arc[i + 1] - self.arc[i]);
        Pose::new(
            a.x + u * (b.x - a.x),
            a.y + u * (b.y - a.y),
            wrap_angle(a.theta + u * wrap_angle(b.theta - a.theta)),
        )
    }

    /// Arc-length of the closest sample within `window` metres of `hint`.
    pub fn project(&self, point: &Pose, hint: f64, window: f64) -> f64 {
        let lo = self.arc.partition_point(|&a| a < hint - window);
        let hi = self.arc.partition_point(|&a| a <= hint + window).max(lo + 1).min(self.arc.len());
        let mut best = (f64::INFINITY, hint);
        for i in lo..hi {
            let d = self.poses[i].distance_to(point);
            if d < best.0 {
                best = (d, self.arc[i]);
            }
        }
        best.1
    }

    /// Largest absolute curvature, from heading change between samples.
    pub fn max_curvature(&self) -> f64 {
        self.poses
            .windows(2)
            .zip(self.arc.windows(2))
            .map(|(p, a)| wrap_angle(p[1].theta - p[0].theta).abs() / (a[1] - a[0]))
            .fold(0.0, f64::max)
    }
}
