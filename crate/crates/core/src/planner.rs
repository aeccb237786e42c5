//! Appearance-based teach-and-repeat planner.
//!
//! The teach map is a chain of keyframes (odometry pose, camera image,
//! cumulative arc-length). During repeat the current camera image is
//! registered against nearby keyframes to produce heading and along-path
//! corrections for the odometry estimate, and the map is turned into a
//! continuous reference for the controller.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::angle::wrap_angle;
use crate::image::{ncc_offset, ncc_offset_window, patch_normalize, GrayImage, Image, ImageError, ImageGeometry};
use crate::kv::{self, KvError, KvMap};
use crate::smc::Reference;
use crate::vehicle::Pose;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid planner setting `{name}` = {value}: {reason}")]
    InvalidSetting {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("teach map is empty")]
    EmptyMap,
    #[error("keyframe {index}: arc-length {arc_length} does not exceed the previous {previous}")]
    NonIncreasingArc {
        index: usize,
        arc_length: f64,
        previous: f64,
    },
    #[error("progress {progress} m outside [0, {total}] m")]
    ProgressOutOfRange { progress: f64, total: f64 },
    #[error("keyframe {index}: {reason}")]
    Keyframe { index: usize, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Correction gains and registration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerGains {
    /// Per-tick weight of the along-path correction on the position estimate.
    pub k_p: f64,
    /// Fraction of the measured heading residual applied per tick.
    pub k_theta: f64,
    /// Scale from fractional keyframe offset to along-path correction.
    pub k_s: f64,
    /// Corrections whose peak correlation is below this are ignored.
    pub rho_bar: f64,
    /// NCC search half-range (px).
    pub search_range: usize,
    /// Search half-range around the centre match for the neighbour keyframes (px).
    pub neighbor_radius: usize,
    /// Horizontal field of view (rad).
    pub fov: f64,
}

impl Default for PlannerGains {
    fn default() -> Self {
        Self {
            k_p: 0.01,
            k_theta: 0.01,
            k_s: 3.0,
            rho_bar: 0.1,
            search_range: 75,
            neighbor_radius: 4,
            fov: 75f64.to_radians(),
        }
    }
}

impl PlannerGains {
    pub fn validate(&self, geometry: &ImageGeometry) -> Result<(), PlannerError> {
        let bad = |name, value, reason| Err(PlannerError::InvalidSetting { name, value, reason });
        if !(self.rho_bar > 0.0 && self.rho_bar < 1.0) {
            return bad("rho_bar", self.rho_bar, "must lie in (0, 1)");
        }
        if self.search_range > geometry.width {
            return bad("search_range", self.search_range as f64, "exceeds the image width");
        }
        if !(self.fov > 0.0 && self.fov < 2.0 * PI) {
            return bad("fov", self.fov, "must lie in (0, 2π)");
        }
        for (name, value) in [("k_p", self.k_p), ("k_theta", self.k_theta), ("k_s", self.k_s)] {
            if !(value.is_finite() && value >= 0.0) {
                return bad(name, value, "must be finite and non-negative");
            }
        }
        Ok(())
    }

    /// Angle subtended by one image column.
    pub fn rad_per_px(&self, geometry: &ImageGeometry) -> f64 {
        self.fov / geometry.width as f64
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.set("k_p", self.k_p);
        map.set("k_theta", self.k_theta);
        map.set("k_s", self.k_s);
        map.set("rho_bar", self.rho_bar);
        map.set("search_range", self.search_range);
        map.set("neighbor_radius", self.neighbor_radius);
        map.set("fov_deg", self.fov.to_degrees());
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self, PlannerError> {
        let d = Self::default();
        Ok(Self {
            k_p: map.f64_or("k_p", d.k_p)?,
            k_theta: map.f64_or("k_theta", d.k_theta)?,
            k_s: map.f64_or("k_s", d.k_s)?,
            rho_bar: map.f64_or("rho_bar", d.rho_bar)?,
            search_range: match map.get("search_range") {
                Some(_) => map.parsed("search_range")?,
                None => d.search_range,
            },
            neighbor_radius: match map.get("neighbor_radius") {
                Some(_) => map.parsed("neighbor_radius")?,
                None => d.neighbor_radius,
            },
            fov: map.f64_or("fov_deg", d.fov.to_degrees())?.to_radians(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlannerError> {
        Self::from_kv(&kv::read_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PlannerError> {
        Ok(kv::write_file(path, "# teach-and-repeat planner gains", &self.to_kv())?)
    }
}

/// True when the robot has moved or turned enough since the last keyframe.
pub fn should_record(current: &Pose, last: &Pose, dist_threshold: f64, angle_threshold: f64) -> bool {
    current.distance_to(last) >= dist_threshold || wrap_angle(current.theta - last.theta).abs() >= angle_threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub index: usize,
    /// Odometry pose at capture.
    pub pose: Pose,
    pub arc_length: f64,
    pub image: GrayImage,
    pub normalized: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeachMap {
    pub geometry: ImageGeometry,
    pub dist_threshold: f64,
    pub angle_threshold: f64,
    keyframes: Vec<Keyframe>,
}

impl TeachMap {
    pub fn new(geometry: ImageGeometry, dist_threshold: f64, angle_threshold: f64) -> Self {
        Self {
            geometry,
            dist_threshold,
            angle_threshold,
            keyframes: Vec::new(),
        }
    }

    /// Map with the default 10 cm / 5° recording thresholds.
    pub fn with_defaults() -> Self {
        Self::new(ImageGeometry::default(), 0.1, 5f64.to_radians())
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.keyframes.last().map_or(0.0, |k| k.arc_length)
    }

    pub fn should_record(&self, pose: &Pose) -> bool {
        match self.keyframes.last() {
            None => true,
            Some(last) => should_record(pose, &last.pose, self.dist_threshold, self.angle_threshold),
        }
    }

    /// Appends a keyframe; arc-length grows by the planar distance from the
    /// previous keyframe and must strictly increase.
    pub fn push(&mut self, pose: Pose, image: GrayImage) -> Result<&Keyframe, PlannerError> {
        let arc_length = match self.keyframes.last() {
            None => 0.0,
            Some(last) => last.arc_length + pose.distance_to(&last.pose),
        };
        self.push_with_arc(pose, arc_length, image)
    }

    fn push_with_arc(&mut self, pose: Pose, arc_length: f64, image: GrayImage) -> Result<&Keyframe, PlannerError> {
        let index = self.keyframes.len();
        if let Some(last) = self.keyframes.last() {
            if !(arc_length > last.arc_length) {
                return Err(PlannerError::NonIncreasingArc {
                    index,
                    arc_length,
                    previous: last.arc_length,
                });
            }
        }
        if !pose.is_finite() {
            return Err(PlannerError::Keyframe {
                index,
                reason: "non-finite pose".to_string(),
            });
        }
        let normalized = patch_normalize(&image.to_float(), &self.geometry)?;
        self.keyframes.push(Keyframe {
            index,
            pose,
            arc_length,
            image,
            normalized,
        });
        Ok(&self.keyframes[index])
    }

    /// Index of the keyframe whose arc-length is closest to `progress`.
    pub fn nearest_index(&self, progress: f64) -> usize {
        let i = self.keyframes.partition_point(|k| k.arc_length < progress);
        if i == 0 {
            return 0;
        }
        if i >= self.keyframes.len() {
            return self.keyframes.len() - 1;
        }
        if progress - self.keyframes[i - 1].arc_length <= self.keyframes[i].arc_length - progress {
            i - 1
        } else {
            i
        }
    }

    /// Mean distance to the neighbouring keyframes.
    pub fn local_spacing(&self, index: usize) -> f64 {
        let n = self.keyframes.len();
        if n < 2 {
            return 0.0;
        }
        let lo = index.saturating_sub(1);
        let hi = (index + 1).min(n - 1);
        (self.keyframes[hi].arc_length - self.keyframes[lo].arc_length) / (hi - lo) as f64
    }

    /// Same keyframes with poses replaced, keeping arc-lengths. Used to carry
    /// ground truth alongside the odometry map.
    pub fn with_poses(&self, poses: &[Pose]) -> Result<Self, PlannerError> {
        if poses.len() != self.keyframes.len() {
            return Err(PlannerError::Keyframe {
                index: poses.len().min(self.keyframes.len()),
                reason: format!("expected {} poses, got {}", self.keyframes.len(), poses.len()),
            });
        }
        let mut out = self.clone();
        for (k, p) in out.keyframes.iter_mut().zip(poses) {
            k.pose = *p;
        }
        Ok(out)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PlannerError> {
        let dir = dir.as_ref();
        if self.keyframes.is_empty() {
            return Err(PlannerError::EmptyMap);
        }
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PlannerError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut manifest = KvMap::new();
        manifest.set("format", "teach-map-1");
        manifest.set("keyframes", self.keyframes.len());
        manifest.set("width", self.geometry.width);
        manifest.set("height", self.geometry.height);
        manifest.set("patch", self.geometry.patch);
        manifest.set("dist_threshold", self.dist_threshold);
        manifest.set("angle_threshold", self.angle_threshold);
        kv::write_file(dir.join("manifest.txt"), "# teach map", &manifest)?;

        let mut poses = String::from("index,x,y,theta,arc_length\n");
        for k in &self.keyframes {
            poses.push_str(&format!(
                "{},{},{},{},{}\n",
                k.index, k.pose.x, k.pose.y, k.pose.theta, k.arc_length
            ));
            k.image.save_pgm(dir.join(image_name(k.index)))?;
        }
        let path = dir.join("poses.csv");
        fs::write(&path, poses).map_err(io_err(&path))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PlannerError> {
        let dir = dir.as_ref();
        let manifest = kv::read_file(dir.join("manifest.txt"))?;
        let geometry = ImageGeometry {
            width: manifest.parsed("width")?,
            height: manifest.parsed("height")?,
            patch: manifest.parsed("patch")?,
        };
        let count: usize = manifest.parsed("keyframes")?;
        let mut map = Self::new(
            geometry,
            manifest.f64("dist_threshold")?,
            manifest.f64("angle_threshold")?,
        );
        let path = dir.join("poses.csv");
        let text = fs::read_to_string(&path).map_err(|source| PlannerError::Io {
            path: path.clone(),
            source,
        })?;
        let mut rows = text.lines();
        rows.next();
        for expected in 0..count {
            let bad = |reason: String| PlannerError::Keyframe {
                index: expected,
                reason,
            };
            let line = rows.next().ok_or_else(|| bad("missing from poses.csv".to_string()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|_| bad(format!("bad index `{}`", fields[0])))?;
            if index != expected {
                return Err(bad(format!("row carries index {index}")));
            }
            let mut num = [0.0; 4];
            for (slot, text) in num.iter_mut().zip(&fields[1..]) {
                *slot = text.parse().map_err(|_| bad(format!("bad number `{text}`")))?;
            }
            let image = GrayImage::load_pgm(dir.join(image_name(index))).map_err(|e| bad(e.to_string()))?;
            if image.width() != geometry.width || image.height() != geometry.height {
                return Err(bad(format!("image is {}x{}", image.width(), image.height())));
            }
            map.push_with_arc(Pose::new(num[0], num[1], num[2]), num[3], image)?;
        }
        Ok(map)
    }
}

fn image_name(index: usize) -> String {
    format!("{index:06}.pgm")
}

/// Visual correction for the odometry estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Correction {
    /// Heading increment per application (rad).
    pub delta_theta: f64,
    /// Along-path offset (m); weighted by `k_p` when applied.
    pub delta_s: f64,
    /// Peak correlation backing the correction.
    pub rho: f64,
}

/// `K_θ · offset · (fov / width)`.
pub fn orientation_correction(offset_px: f64, gains: &PlannerGains, geometry: &ImageGeometry) -> f64 {
    gains.k_theta * offset_px * gains.rad_per_px(geometry)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlongPath {
    /// Best-match keyframe position relative to the current one, in keyframes.
    pub fraction: f64,
    pub delta_s: f64,
    /// Correlation of the best-matching keyframe.
    pub rho: f64,
    /// Horizontal offset against the current keyframe (px).
    pub center_offset: i64,
    pub center_rho: f64,
}

/// Matches the normalized query against keyframes `index − 1 ..= index + 1`
/// and interpolates the best match with a parabola through the three peaks.
pub fn along_path_correction(query: &Image, map: &TeachMap, index: usize, gains: &PlannerGains) -> AlongPath {
    let frames = map.keyframes();
    let center = ncc_offset(query, &frames[index].normalized, gains.search_range);
    let px = gains.rad_per_px(&map.geometry);
    // A confident centre match pins the image offset, shifted by the taught
    // heading change to each neighbour; otherwise search fully.
    let score = |j: usize| {
        if center.rho >= gains.rho_bar {
            let turn = wrap_angle(frames[j].pose.theta - frames[index].pose.theta) / px;
            let expected = center.offset - turn.round() as i64;
            ncc_offset_window(query, &frames[j].normalized, expected, gains.neighbor_radius).rho
        } else {
            ncc_offset(query, &frames[j].normalized, gains.search_range).rho
        }
    };
    let prev = (index > 0).then(|| score(index - 1));
    let next = (index + 1 < frames.len()).then(|| score(index + 1));

    let mut fraction = 0.0;
    let mut rho = center.rho;
    if let Some(p) = prev.filter(|&p| p > rho && next.is_none_or(|n| p >= n)) {
        fraction = -1.0;
        rho = p;
    } else if let Some(n) = next.filter(|&n| n > rho) {
        fraction = 1.0;
        rho = n;
    } else if let (Some(p), Some(n)) = (prev, next) {
        let curvature = p - 2.0 * center.rho + n;
        if curvature < 0.0 {
            fraction = (0.5 * (p - n) / curvature).clamp(-0.5, 0.5);
        }
    }
    AlongPath {
        fraction,
        delta_s: gains.k_s * fraction * map.local_spacing(index),
        rho,
        center_offset: center.offset,
        center_rho: center.rho,
    }
}

/// Full visual correction for one camera frame.
///
/// The heading residual compares the measured pixel offset against the
/// offset predicted by the current heading estimate, so a correct estimate
/// produces no correction.
pub fn visual_correction(
    query: &GrayImage,
    map: &TeachMap,
    index: usize,
    estimate: &Pose,
    gains: &PlannerGains,
) -> Result<Correction, PlannerError> {
    let normalized = patch_normalize(&query.to_float(), &map.geometry)?;
    let along = along_path_correction(&normalized, map, index, gains);
    let px = gains.rad_per_px(&map.geometry);
    let predicted = wrap_angle(estimate.theta - map.keyframes()[index].pose.theta) / px;
    let residual = along.center_offset as f64 - predicted;
    Ok(Correction {
        delta_theta: orientation_correction(residual, gains, &map.geometry),
        delta_s: along.delta_s,
        rho: along.center_rho.min(along.rho),
    })
}

/// One incremental application of `correction` to the pose estimate.
/// Corrections below the confidence threshold leave the pose untouched.
pub fn apply_correction(pose: &Pose, correction: &Correction, gains: &PlannerGains) -> Pose {
    if !(correction.rho >= gains.rho_bar) {
        return *pose;
    }
    let theta = wrap_angle(pose.theta + correction.delta_theta);
    let step = gains.k_p * correction.delta_s;
    Pose::new(pose.x + step * theta.cos(), pose.y + step * theta.sin(), theta)
}

/// Trapezoidal speed profile along a path of known length, starting and
/// ending at rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub max_speed: f64,
    pub accel: f64,
    pub length: f64,
}

impl SpeedProfile {
    pub fn new(max_speed: f64, accel: f64, length: f64) -> Result<Self, PlannerError> {
        for (name, value) in [("max_speed", max_speed), ("accel", accel), ("length", length)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PlannerError::InvalidSetting {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        Ok(Self {
            max_speed,
            accel,
            length,
        })
    }

    fn peak(&self) -> f64 {
        self.max_speed.min((self.accel * self.length).sqrt())
    }

    pub fn duration(&self) -> f64 {
        let peak = self.peak();
        let ramp = peak / self.accel;
        let ramp_len = peak * peak / self.accel;
        2.0 * ramp + (self.length - ramp_len) / peak
    }

    /// `(speed, acceleration)` at arc-length `s`.
    pub fn at_progress(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.length);
        let up = (2.0 * self.accel * s).sqrt();
        let down = (2.0 * self.accel * (self.length - s)).sqrt();
        let v = self.max_speed.min(up).min(down);
        let a = if v >= self.max_speed {
            0.0
        } else if up <= down {
            self.accel
        } else {
            -self.accel
        };
        (v, a)
    }

    /// `(s, speed, acceleration)` at time `t` from the start.
    pub fn at_time(&self, t: f64) -> (f64, f64, f64) {
        let peak = self.peak();
        let ramp = peak / self.accel;
        let ramp_len = 0.5 * peak * ramp;
        let cruise = (self.length - 2.0 * ramp_len) / peak;
        if t <= 0.0 {
            (0.0, 0.0, self.accel)
        } else if t < ramp {
            (0.5 * self.accel * t * t, self.accel * t, self.accel)
        } else if t < ramp + cruise {
            (ramp_len + peak * (t - ramp), peak, 0.0)
        } else if t < 2.0 * ramp + cruise {
            let r = 2.0 * ramp + cruise - t;
            (self.length - 0.5 * self.accel * r * r, self.accel * r, -self.accel)
        } else {
            (self.length, 0.0, 0.0)
        }
    }
}

/// Continuous reference at arc-length `progress` along the map.
pub fn reference_lookup(map: &TeachMap, progress: f64, profile: &SpeedProfile) -> Result<Reference, PlannerError> {
    let frames = map.keyframes();
    if frames.is_empty() {
        return Err(PlannerError::EmptyMap);
    }
    let total = map.total_length();
    if !(progress >= -1e-9 && progress <= total + 1e-9) {
        return Err(PlannerError::ProgressOutOfRange { progress, total });
    }
    if frames.len() == 1 {
        let p = frames[0].pose;
        return Ok(Reference {
            x: p.x,
            y: p.y,
            theta: p.theta,
            ..Reference::default()
        });
    }
    let s = progress.clamp(0.0, total);
    let i = frames
        .partition_point(|k| k.arc_length <= s)
        .clamp(1, frames.len() - 1)
        - 1;
    let (a, b) = (&frames[i], &frames[i + 1]);
    let ds = b.arc_length - a.arc_length;
    let u = (s - a.arc_length) / ds;
    let dtheta = wrap_angle(b.pose.theta - a.pose.theta);

    let curvature = |j: usize| {
        let (p, q) = (&frames[j], &frames[j + 1]);
        wrap_angle(q.pose.theta - p.pose.theta) / (q.arc_length - p.arc_length)
    };
    let mid = |j: usize| 0.5 * (frames[j].arc_length + frames[j + 1].arc_length);
    let segments = frames.len() - 1;
    let (lo, hi) = (i.saturating_sub(1), (i + 1).min(segments - 1));
    let kappa_slope = if hi > lo {
        (curvature(hi) - curvature(lo)) / (mid(hi) - mid(lo))
    } else {
        0.0
    };
    let kappa = dtheta / ds;
    let (v, accel) = profile.at_progress(s);

    Ok(Reference {
        x: a.pose.x + u * (b.pose.x - a.pose.x),
        y: a.pose.y + u * (b.pose.y - a.pose.y),
        theta: wrap_angle(a.pose.theta + u * dtheta),
        v_x: v,
        omega: kappa * v,
        v_x_dot: accel,
        omega_dot: kappa_slope * v * v + kappa * accel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(rng: &mut ChaCha8Rng) -> GrayImage {
        GrayImage::new(115, 44, (0..115 * 44).map(|_| rng.gen()).collect()).unwrap()
    }

    fn arc_map(n: usize, radius: f64, step: f64) -> TeachMap {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut map = TeachMap::with_defaults();
        for i in 0..n {
            let phi = i as f64 * step / radius;
            let pose = Pose::new(radius * phi.sin(), radius * (1.0 - phi.cos()), phi);
            map.push(pose, noise_image(&mut rng)).unwrap();
        }
        map
    }

    #[test]
    fn recording_rule_examples() {
        let origin = Pose::default();
        let (d, a) = (0.1, 5f64.to_radians());
        assert!(should_record(&Pose::new(0.11, 0.0, 0.0), &origin, d, a));
        assert!(!should_record(&Pose::new(0.05, 0.0, 2f64.to_radians()), &origin, d, a));
        assert!(should_record(&Pose::new(0.0, 0.0, 6f64.to_radians()), &origin, d, a));
    }

    #[test]
    fn orientation_correction_arithmetic() {
        let g = PlannerGains {
            k_theta: 1.0,
            ..PlannerGains::default()
        };
        let geo = ImageGeometry::default();
        assert_eq!(orientation_correction(0.0, &g, &geo), 0.0);
        let deg = orientation_correction(10.0, &g, &geo).to_degrees();
        assert!((deg - 6.5217).abs() < 1e-3);
    }

    #[test]
    fn gating_and_identity_corrections() {
        let g = PlannerGains::default();
        let pose = Pose::new(1.0, 2.0, 0.3);
        let weak = Correction {
            delta_theta: 0.2,
            delta_s: 1.0,
            rho: 0.05,
        };
        assert_eq!(apply_correction(&pose, &weak, &g), pose);
        let zero = Correction {
            rho: 0.9,
            ..Correction::default()
        };
        assert_eq!(apply_correction(&pose, &zero, &g), pose);
        let nan = Correction {
            rho: f64::NAN,
            ..weak
        };
        assert_eq!(apply_correction(&pose, &nan, &g), pose);
    }

    #[test]
    fn along_path_on_exact_images() {
        let map = arc_map(20, 5.0, 0.1);
        let g = PlannerGains::default();
        let at = |j: usize| map.keyframes()[j].normalized.clone();
        let here = along_path_correction(&at(7), &map, 7, &g);
        assert!(here.fraction.abs() < 0.02 && (here.rho - 1.0).abs() < 1e-9);
        let ahead = along_path_correction(&at(8), &map, 7, &g);
        assert!((ahead.fraction - 1.0).abs() < 1e-12);
        assert!((ahead.delta_s - g.k_s * map.local_spacing(7)).abs() < 1e-12);
        let behind = along_path_correction(&at(6), &map, 7, &g);
        assert_eq!(behind.fraction, -1.0);
    }

    #[test]
    fn arc_length_must_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut map = TeachMap::with_defaults();
        map.push(Pose::default(), noise_image(&mut rng)).unwrap();
        let err = map.push(Pose::new(0.0, 0.0, 0.2), noise_image(&mut rng)).unwrap_err();
        assert!(matches!(err, PlannerError::NonIncreasingArc { index: 1, .. }));
    }

    #[test]
    fn lookup_at_keyframes_and_midpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut map = TeachMap::with_defaults();
        for i in 0..5 {
            map.push(Pose::new(0.1 * i as f64, 0.0, 0.0), noise_image(&mut rng)).unwrap();
        }
        let profile = SpeedProfile::new(0.35, 0.5, map.total_length()).unwrap();
        let r = reference_lookup(&map, map.keyframes()[2].arc_length, &profile).unwrap();
        assert!((r.x - 0.2).abs() < 1e-12 && r.y == 0.0);
        let r = reference_lookup(&map, 0.25, &profile).unwrap();
        assert!((r.x - 0.25).abs() < 1e-12);
        let start = reference_lookup(&map, 0.0, &profile).unwrap();
        let end = reference_lookup(&map, map.total_length(), &profile).unwrap();
        assert_eq!((start.v_x, start.omega, end.v_x, end.omega), (0.0, 0.0, 0.0, 0.0));
        assert!(reference_lookup(&map, -0.1, &profile).is_err());
        assert!(reference_lookup(&map, 0.5, &profile).is_err());
    }

    #[test]
    fn lookup_derivatives_match_finite_differences() {
        let map = arc_map(100, 4.0, 0.1);
        let profile = SpeedProfile::new(0.35, 0.5, map.total_length()).unwrap();
        let (t0, h) = (5.0, 1e-6);
        for t in [t0, 0.3, profile.duration() - 0.4] {
            let (s, v, a) = profile.at_time(t);
            let r = reference_lookup(&map, s, &profile).unwrap();
            let (sp, _, _) = profile.at_time(t + h);
            let (sm, _, _) = profile.at_time(t - h);
            let rp = reference_lookup(&map, sp, &profile).unwrap();
            let rm = reference_lookup(&map, sm, &profile).unwrap();
            let theta_rate = wrap_angle(rp.theta - rm.theta) / (2.0 * h);
            let speed = rp.pose().distance_to(&rm.pose()) / (2.0 * h);
            assert!((r.omega - theta_rate).abs() < 1e-6, "{} {}", r.omega, theta_rate);
            assert!((r.v_x - speed).abs() < 1e-6);
            assert!((r.v_x - v).abs() < 1e-12);
            assert!(((rp.v_x - rm.v_x) / (2.0 * h) - a).abs() < 1e-6);
            // Constant curvature: ω̇ reduces to κ·v̇.
            assert!(((rp.omega - rm.omega) / (2.0 * h) - r.omega_dot).abs() < 1e-6);
        }
    }

    #[test]
    fn speed_profile_is_consistent() {
        for (vmax, len) in [(0.35, 70.0), (0.6, 44.0), (1.0, 0.5)] {
            let p = SpeedProfile::new(vmax, 0.5, len).unwrap();
            let end = p.at_time(p.duration() + 1.0);
            assert!((end.0 - len).abs() < 1e-9 && end.1 == 0.0);
            let mut prev = 0.0;
            for k in 0..=1000 {
                let t = p.duration() * k as f64 / 1000.0;
                let (s, v, _) = p.at_time(t);
                assert!(s >= prev - 1e-12);
                prev = s;
                let (v2, _) = p.at_progress(s);
                assert!((v - v2).abs() < 1e-6, "{v} {v2}");
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = arc_map(12, 3.0, 0.1);
        map.save(dir.path()).unwrap();
        assert_eq!(TeachMap::load(dir.path()).unwrap(), map);
        assert!(matches!(
            TeachMap::with_defaults().save(dir.path().join("empty")),
            Err(PlannerError::EmptyMap)
        ));
    }

    #[test]
    fn truncated_image_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let map = arc_map(6, 3.0, 0.1);
        map.save(dir.path()).unwrap();
        let victim = dir.path().join("000004.pgm");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        let err = TeachMap::load(dir.path()).unwrap_err();
        assert!(matches!(err, PlannerError::Keyframe { index: 4, .. }), "{err}");
        assert!(err.to_string().contains("keyframe 4"));
    }

    #[test]
    fn gains_validation_and_file() {
        let geo = ImageGeometry::default();
        assert!(PlannerGains::default().validate(&geo).is_ok());
        let bad = PlannerGains {
            rho_bar: 1.0,
            ..PlannerGains::default()
        };
        assert!(bad.validate(&geo).is_err());
        let bad = PlannerGains {
            search_range: 200,
            ..PlannerGains::default()
        };
        assert!(bad.validate(&geo).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("planner.params");
        PlannerGains::default().save(&path).unwrap();
        let back = PlannerGains::load(&path).unwrap();
        assert!((back.fov - PlannerGains::default().fov).abs() < 1e-12);
        assert_eq!(back.k_s, 3.0);
    }
}
