//! Synthetic world, camera rendering, odometry and environment profiles.
//!
//! The camera sees a far-field backdrop plus pole landmarks at finite range.
//! The backdrop is a panorama with one column per pixel of azimuth, so yaw is
//! quantised to whole columns and a pure one-pixel rotation shifts the whole
//! image by exactly one column. Translation moves only the landmarks, by true
//! parallax, which is what makes keyframes distinguishable along the path and
//! lateral displacement visible as a bearing shift.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::angle::wrap_angle;
use crate::image::{GrayImage, ImageGeometry};
use crate::kv::{self, KvError, KvMap};
use crate::vehicle::{Pose, TerrainProfile};

const HARMONICS: usize = 24;
const LANDMARKS: usize = 2500;
/// Landmarks are scattered over this box (m): x range then y range.
const LANDMARK_BOX: ([f64; 2], [f64; 2]) = ([-25.0, 25.0], [-15.0, 25.0]);
const CAMERA_HEIGHT: f64 = 0.4;
/// Landmarks fade in between these ranges (m). Teach paths run through free
/// space, and a pole right next to the lens would dominate every match.
const MIN_RANGE: f64 = 1.5;
const FULL_RANGE: f64 = 2.5;
/// Landmarks fade out between these ranges (m).
const FADE_RANGE: f64 = 5.0;
const MAX_RANGE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Harmonic {
    cycles: f64,
    amplitude: f64,
    phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Landmark {
    x: f64,
    y: f64,
    radius: f64,
    height: f64,
    intensity: f64,
    /// Stripe frequency along the pole (rad/m).
    stripes: f64,
}

/// Seeded world: far backdrop plus landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub seed: u64,
    pub geometry: ImageGeometry,
    pub fov: f64,
    panorama: usize,
    harmonics: Vec<Harmonic>,
    /// First ground row per panorama column.
    skyline: Vec<usize>,
    landmarks: Vec<Landmark>,
}

impl WorldModel {
    pub fn new(seed: u64) -> Self {
        Self::with_camera(seed, ImageGeometry::default(), 75f64.to_radians())
    }

    pub fn with_camera(seed: u64, geometry: ImageGeometry, fov: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let panorama = (TAU * geometry.width as f64 / fov).round() as usize;
        let harmonics = (0..HARMONICS)
            .map(|_| Harmonic {
                cycles: f64::from(rng.gen_range(2u32..80)),
                amplitude: rng.gen_range(1.0..4.0),
                phase: rng.gen_range(0.0..TAU),
            })
            .collect();
        let bumps: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    f64::from(rng.gen_range(1u32..12)),
                    rng.gen_range(0.2..1.0),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect();
        let norm: f64 = bumps.iter().map(|b| b.1).sum();
        let h = geometry.height as f64;
        let skyline = (0..panorama)
            .map(|j| {
                let az = TAU * j as f64 / panorama as f64;
                let wave: f64 = bumps.iter().map(|(k, a, p)| a * (k * az + p).sin()).sum::<f64>() / norm;
                (h * (0.35 + 0.2 * wave)).round().clamp(0.0, h - 1.0) as usize
            })
            .collect();
        let ([x0, x1], [y0, y1]) = LANDMARK_BOX;
        let landmarks = (0..LANDMARKS)
            .map(|_| Landmark {
                x: rng.gen_range(x0..x1),
                y: rng.gen_range(y0..y1),
                radius: rng.gen_range(0.05..0.3),
                height: rng.gen_range(0.6..4.0),
                intensity: rng.gen_range(20.0..235.0),
                stripes: rng.gen_range(2.0..12.0),
            })
            .collect();
        Self {
            seed,
            geometry,
            fov,
            panorama,
            harmonics,
            skyline,
            landmarks,
        }
    }

    /// Number of panorama columns covering a full turn.
    pub fn panorama_width(&self) -> usize {
        self.panorama
    }

    pub fn rad_per_px(&self) -> f64 {
        self.fov / self.geometry.width as f64
    }

    fn luminance(&self, column: usize) -> f64 {
        let az = TAU * column as f64 / self.panorama as f64;
        let sum: f64 = self
            .harmonics
            .iter()
            .map(|h| h.amplitude * (h.cycles * az + h.phase).sin())
            .sum();
        110.0 + sum
    }

    /// Camera image at `pose`. Column `c` looks along azimuth
    /// `θ + (c − width/2)·fov/width`, with `θ` rounded to a whole column.
    pub fn render(&self, pose: &Pose) -> GrayImage {
        let (w, h) = (self.geometry.width, self.geometry.height);
        let p = self.panorama as i64;
        let rpp = self.rad_per_px();
        let yaw = (wrap_angle(pose.theta) / rpp).round() as i64;
        let center = (w / 2) as i64;
        let mut pixels = vec![0.0f64; w * h];
        for c in 0..w {
            let j = (yaw + c as i64 - center).rem_euclid(p) as usize;
            let base = self.luminance(j);
            let horizon = self.skyline[j];
            for r in 0..h {
                pixels[r * w + c] = if r < horizon {
                    225.0 - 2.0 * r as f64
                } else {
                    base - 40.0 * (r - horizon) as f64 / h as f64
                };
            }
        }

        // Painter's algorithm: far landmarks first.
        let focal = (w as f64 / 2.0) / (self.fov / 2.0).tan();
        let horizon_row = 0.35 * h as f64;
        let yaw_angle = yaw as f64 * rpp;
        let mut visible: Vec<(f64, f64, &Landmark)> = self
            .landmarks
            .iter()
            .filter_map(|l| {
                let (dx, dy) = (l.x - pose.x, l.y - pose.y);
                let range = dx.hypot(dy);
                if !(MIN_RANGE..MAX_RANGE).contains(&range) {
                    return None;
                }
                let column = center as f64 + wrap_angle(dy.atan2(dx) - yaw_angle) / rpp;
                let half = (l.radius / range).asin() / rpp;
                (column + half >= 0.0 && column - half <= w as f64).then_some((range, column, l))
            })
            .collect();
        visible.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (range, column, l) in visible {
            let half = (l.radius / range).asin() / rpp;
            let first = (column - half).round().max(0.0) as usize;
            let last = ((column + half).round() as usize).min(w);
            let top = (horizon_row - focal * (l.height - CAMERA_HEIGHT) / range).round().max(0.0) as usize;
            let bottom = ((horizon_row + focal * CAMERA_HEIGHT / range).round() as usize).min(h);
            let alpha = ((range - MIN_RANGE) / (FULL_RANGE - MIN_RANGE))
                .min((MAX_RANGE - range) / (MAX_RANGE - FADE_RANGE))
                .min(1.0);
            for r in top..bottom {
                // Height above ground seen by this row.
                let z = CAMERA_HEIGHT + (horizon_row - r as f64) * range / focal;
                let value = l.intensity + 25.0 * (l.stripes * z).sin();
                for c in first..last {
                    let px = &mut pixels[r * w + c];
                    *px += alpha * (value - *px);
                }
            }
        }
        let data = pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::new(w, h, data).expect("buffer sized from geometry")
    }

    /// Render plus additive Gaussian pixel noise.
    pub fn render_noisy<R: Rng + ?Sized>(&self, pose: &Pose, sigma: f64, rng: &mut R) -> GrayImage {
        let mut image = self.render(pose);
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite positive sigma");
            for px in image.data_mut() {
                *px = (f64::from(*px) + noise.sample(rng)).round().clamp(0.0, 255.0) as u8;
            }
        }
        image
    }
}

/// Pose increment expressed in the frame of the starting pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyDelta {
    pub forward: f64,
    pub lateral: f64,
    pub dtheta: f64,
}

impl BodyDelta {
    pub fn between(from: &Pose, to: &Pose) -> Self {
        let (sin, cos) = from.theta.sin_cos();
        let (dx, dy) = (to.x - from.x, to.y - from.y);
        Self {
            forward: cos * dx + sin * dy,
            lateral: -sin * dx + cos * dy,
            dtheta: wrap_angle(to.theta - from.theta),
        }
    }

    pub fn apply_to(&self, pose: &Pose) -> Pose {
        let (sin, cos) = pose.theta.sin_cos();
        Pose::new(
            pose.x + cos * self.forward - sin * self.lateral,
            pose.y + sin * self.forward + cos * self.lateral,
            wrap_angle(pose.theta + self.dtheta),
        )
    }

    pub fn distance(&self) -> f64 {
        self.forward.hypot(self.lateral)
    }
}

/// Wheel-odometry error model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryModel {
    /// Standard deviation of the multiplicative translation error per step.
    pub trans_noise_frac: f64,
    /// Standard deviation of the additive heading error per step (rad).
    pub rot_noise_std: f64,
    /// Systematic heading error per metre travelled (rad/m).
    pub drift_bias: f64,
}

impl OdometryModel {
    pub const EXACT: Self = Self {
        trans_noise_frac: 0.0,
        rot_noise_std: 0.0,
        drift_bias: 0.0,
    };

    pub fn validate(&self) -> Result<(), KvError> {
        let ok = self.trans_noise_frac >= 0.0 && self.rot_noise_std >= 0.0 && self.drift_bias.is_finite();
        if ok {
            Ok(())
        } else {
            Err(KvError::Parse {
                key: "odometry".to_string(),
                value: format!("{self:?}"),
            })
        }
    }
}

/// Measured increment for a true increment. Noise-free components draw no
/// randomness.
pub fn odometry_step<R: Rng + ?Sized>(truth: &BodyDelta, model: &OdometryModel, rng: &mut R) -> BodyDelta {
    let scale = if model.trans_noise_frac > 0.0 {
        1.0 + model.trans_noise_frac * rng.sample::<f64, _>(rand_distr::StandardNormal)
    } else {
        1.0
    };
    let heading_noise = if model.rot_noise_std > 0.0 {
        model.rot_noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal)
    } else {
        0.0
    };
    BodyDelta {
        forward: truth.forward * scale,
        lateral: truth.lateral * scale,
        dtheta: truth.dtheta + heading_noise + model.drift_bias * truth.distance(),
    }
}

/// Terrain, odometry and camera noise for one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentProfile {
    pub name: String,
    pub terrain: TerrainProfile,
    pub odometry: OdometryModel,
    /// Standard deviation of additive pixel noise during repeat (grey levels).
    pub image_noise: f64,
}

/// Heading bias calibrated so that the indoor odometry drifts ≈0.502 m over
/// the 70 m loop (see `calibrate_drift_bias`).
pub const INDOOR_DRIFT_BIAS: f64 = 0.001_162_2;
/// Heading bias giving ≈0.904 m of drift over the 70 m loop outdoors.
pub const OUTDOOR_DRIFT_BIAS: f64 = 0.002_111_8;

pub fn make_indoor_profile() -> EnvironmentProfile {
    EnvironmentProfile {
        name: "indoor".to_string(),
        terrain: TerrainProfile::IDENTITY,
        odometry: OdometryModel {
            trans_noise_frac: 0.01,
            rot_noise_std: 0.000_2,
            drift_bias: INDOOR_DRIFT_BIAS,
        },
        image_noise: 4.0,
    }
}

pub fn make_outdoor_profile() -> EnvironmentProfile {
    EnvironmentProfile {
        name: "outdoor".to_string(),
        terrain: TerrainProfile {
            slip_mean: 0.25,
            slip_std: 0.05,
            skid_mean: 0.10,
            skid_std: 0.03,
        },
        odometry: OdometryModel {
            trans_noise_frac: 0.02,
            rot_noise_std: 0.000_4,
            drift_bias: OUTDOOR_DRIFT_BIAS,
        },
        image_noise: 6.0,
    }
}

impl EnvironmentProfile {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "indoor" => Some(make_indoor_profile()),
            "outdoor" => Some(make_outdoor_profile()),
            _ => None,
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.set("name", &self.name);
        map.set("slip_mean", self.terrain.slip_mean);
        map.set("slip_std", self.terrain.slip_std);
        map.set("skid_mean", self.terrain.skid_mean);
        map.set("skid_std", self.terrain.skid_std);
        map.set("trans_noise_frac", self.odometry.trans_noise_frac);
        map.set("rot_noise_std", self.odometry.rot_noise_std);
        map.set("drift_bias", self.odometry.drift_bias);
        map.set("image_noise", self.image_noise);
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self, KvError> {
        let profile = Self {
            name: map.require("name")?.to_string(),
            terrain: TerrainProfile {
                slip_mean: map.f64("slip_mean")?,
                slip_std: map.f64("slip_std")?,
                skid_mean: map.f64("skid_mean")?,
                skid_std: map.f64("skid_std")?,
            },
            odometry: OdometryModel {
                trans_noise_frac: map.f64("trans_noise_frac")?,
                rot_noise_std: map.f64("rot_noise_std")?,
                drift_bias: map.f64("drift_bias")?,
            },
            image_noise: map.f64_or("image_noise", 0.0)?,
        };
        profile.odometry.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KvError> {
        Self::from_kv(&kv::read_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KvError> {
        kv::write_file(path, "# environment profile", &self.to_kv())
    }
}

/// Mean terminal odometry drift when the true motion follows `poses`.
pub fn terminal_drift(poses: &[Pose], model: &OdometryModel, seeds: std::ops::Range<u64>) -> f64 {
    let n = (seeds.end - seeds.start).max(1) as f64;
    seeds
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut estimate = poses[0];
            for pair in poses.windows(2) {
                let measured = odometry_step(&BodyDelta::between(&pair[0], &pair[1]), model, &mut rng);
                estimate = measured.apply_to(&estimate);
            }
            estimate.distance_to(poses.last().expect("non-empty"))
        })
        .sum::<f64>()
        / n
}

/// Bisects the heading bias so that [`terminal_drift`] along `poses` matches
/// `target` metres.
pub fn calibrate_drift_bias(poses: &[Pose], model: &OdometryModel, target: f64, seeds: std::ops::Range<u64>) -> f64 {
    let drift = |bias: f64| {
        terminal_drift(
            poses,
            &OdometryModel {
                drift_bias: bias,
                ..*model
            },
            seeds.clone(),
        )
    };
    let (mut lo, mut hi) = (0.0, 1e-3);
    while drift(hi) < target && hi < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if drift(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
