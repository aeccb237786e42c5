//! Experiment runner: teach runs, closed-loop repeat trials, speed sweeps,
//! robustness corners, the proportional baseline and trial metrics.
//!
//! Rates: the plant integrates at `dt` (1 kHz by default), controllers run
//! every `control_period` (50 Hz) with a zero-order hold, and the visual
//! planner runs every `planner_every` control ticks.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::angle::wrap_angle;
use crate::image::ImageGeometry;
use crate::kv::{self, KvError, KvMap};
use crate::path::{PathError, PathSpec, ScriptedPath};
use crate::planner::{
    apply_correction, reference_lookup, visual_correction, Correction, PlannerError, PlannerGains, SpeedProfile,
    TeachMap,
};
use crate::smc::{
    local_error, ControlOutput, ControllerConfig, ControllerGains, Reference, SlidingModeController, SmcError,
};
use crate::vehicle::{ActuatorLimits, ControlInput, Plant, Pose, RobotState, VehicleError, VehicleParams};
use crate::world::{odometry_step, BodyDelta, EnvironmentProfile, WorldModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("teach path infeasible: {0}")]
    InfeasiblePath(String),
    #[error("logs are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Controller(#[from] SmcError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Operational definition of an unstable trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRule {
    /// Distance error bound (m).
    pub max_distance: f64,
    /// Longest allowed run with both actuators saturated (s).
    pub max_saturation_time: f64,
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self {
            max_distance: 2.0,
            max_saturation_time: 2.0,
        }
    }
}

/// Proportional follower used for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineGains {
    /// Feed-forward weight on the reference speed.
    pub cruise: f64,
    /// Speed correction per metre of along-path error (1/s).
    pub k_v: f64,
    /// Yaw rate per radian of heading-to-reference error (1/s).
    pub k_omega: f64,
    /// Distance ahead used to turn lateral error into a heading error (m).
    pub lookahead: f64,
}

impl Default for BaselineGains {
    /// Best stable grid point for indoor repeats at 0.35 m/s on a tuning seed
    /// disjoint from the evaluation seeds (see the `baseline_tuning` example).
    fn default() -> Self {
        Self {
            cruise: 1.0,
            k_v: 0.5,
            k_omega: 3.0,
            lookahead: 0.1,
        }
    }
}

/// Proportional speed and heading-to-reference commands, scaled to actuator
/// inputs by the nominal steady-state gains and clamped.
pub fn baseline_controller_step(
    state: &RobotState,
    reference: &Reference,
    gains: &BaselineGains,
    nominal: &VehicleParams,
    limits: &ActuatorLimits,
) -> ControlOutput {
    let eps = local_error(reference, state);
    let speed = gains.cruise * reference.v_x + gains.k_v * eps.eps1;
    let heading_error = if eps.eps2 == 0.0 && eps.eps3 == 0.0 {
        0.0
    } else {
        wrap_angle(eps.eps3 + eps.eps2.atan2(gains.lookahead))
    };
    let yaw_rate = gains.k_omega * heading_error;
    let input = limits.clamp(ControlInput::new(nominal.c4 * speed, nominal.c6 * yaw_rate));
    let (saturated_v, saturated_omega) = limits.saturated(input);
    ControlOutput {
        v_x_r: input.v_x_r,
        omega_r: input.omega_r,
        eps,
        diagnostics: crate::smc::Diagnostics {
            saturated_v,
            saturated_omega,
            ..Default::default()
        },
        ..ControlOutput::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ControllerKind {
    #[default]
    Smc,
    Baseline(BaselineGains),
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Smc => "smc",
            Self::Baseline(_) => "baseline",
        }
    }
}

/// Where the controller's body-velocity feedback comes from during repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocitySource {
    /// Odometry twist over the last control period: ground motion as a
    /// wheel/IMU estimate would see it, including slip.
    #[default]
    Odometry,
    /// The plant's internal wheel-driven velocity state.
    Plant,
}

impl std::str::FromStr for VelocitySource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odometry" => Ok(Self::Odometry),
            "plant" => Ok(Self::Plant),
            other => Err(HarnessError::Config(format!("unknown velocity source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub profile: EnvironmentProfile,
    /// Nominal plant: the controller's model and, unless overridden, the truth.
    pub vehicle: VehicleParams,
    pub gains: ControllerGains,
    pub planner: PlannerGains,
    pub limits: ActuatorLimits,
    pub path: PathSpec,
    pub teach_speed: f64,
    /// Repeat speed cap (m/s).
    pub max_speed: f64,
    pub accel: f64,
    pub dt: f64,
    pub control_period: f64,
    pub planner_every: usize,
    pub trials: usize,
    pub divergence: DivergenceRule,
    /// Extra time after the reference stops before a trial ends (s).
    pub settle_time: f64,
    pub velocity_source: VelocitySource,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            profile: crate::world::make_indoor_profile(),
            vehicle: VehicleParams::nominal(),
            gains: ControllerGains::nominal(),
            planner: PlannerGains::default(),
            limits: ActuatorLimits::default(),
            path: PathSpec::indoor_loop(),
            teach_speed: 0.35,
            max_speed: 0.35,
            accel: 0.5,
            dt: 0.001,
            control_period: 0.02,
            planner_every: 10,
            trials: 5,
            divergence: DivergenceRule::default(),
            settle_time: 2.0,
            velocity_source: VelocitySource::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn indoor(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn outdoor(seed: u64) -> Self {
        Self {
            seed,
            profile: crate::world::make_outdoor_profile(),
            path: PathSpec::outdoor_loop(),
            ..Self::default()
        }
    }

    pub fn steps_per_tick(&self) -> Result<usize, HarnessError> {
        let ratio = self.control_period / self.dt;
        let steps = ratio.round();
        if !(self.dt > 0.0 && steps >= 1.0 && (ratio - steps).abs() < 1e-6) {
            return Err(HarnessError::Config(format!(
                "dt {} does not divide the control period {}",
                self.dt, self.control_period
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trial count must be at least 1".into()));
        }
        self.steps_per_tick()?;
        for (name, v) in [
            ("teach_speed", self.teach_speed),
            ("max_speed", self.max_speed),
            ("accel", self.accel),
            ("settle_time", self.settle_time + 1.0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if self.planner_every == 0 {
            return Err(HarnessError::Config("planner_every must be at least 1".into()));
        }
        self.gains.validate()?;
        self.vehicle.validate()?;
        self.planner.validate(&ImageGeometry::default())?;
        Ok(())
    }

    /// Reads a key=value config. Relative file references resolve against
    /// the config file's directory; absent keys keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let map = kv::read_file(path)?;
        let resolve = |p: &str| base.join(p);
        let mut cfg = Self::default();
        if let Some(name) = map.get("profile") {
            cfg.profile = match EnvironmentProfile::by_name(name) {
                Some(p) => p,
                None => EnvironmentProfile::load(resolve(name))?,
            };
            if name == "outdoor" {
                cfg.path = PathSpec::outdoor_loop();
            }
        }
        if let Some(f) = map.get("vehicle_file") {
            cfg.vehicle = VehicleParams::load(resolve(f))?;
        }
        if let Some(f) = map.get("gains_file") {
            cfg.gains = ControllerGains::load(resolve(f))?;
        }
        if let Some(f) = map.get("planner_file") {
            cfg.planner = PlannerGains::load(resolve(f))?;
        }
        if let Some(p) = map.get("path") {
            cfg.path = match PathSpec::parse(p)? {
                PathSpec::Waypoints(f) => PathSpec::Waypoints(resolve(&f.to_string_lossy())),
                other => other,
            };
        }
        if map.get("seed").is_some() {
            cfg.seed = map.parsed("seed")?;
        }
        if map.get("trials").is_some() {
            cfg.trials = map.parsed("trials")?;
        }
        if map.get("planner_every").is_some() {
            cfg.planner_every = map.parsed("planner_every")?;
        }
        cfg.teach_speed = map.f64_or("teach_speed", cfg.teach_speed)?;
        cfg.max_speed = map.f64_or("max_speed", cfg.max_speed)?;
        cfg.accel = map.f64_or("accel", cfg.accel)?;
        cfg.dt = map.f64_or("dt", cfg.dt)?;
        cfg.control_period = map.f64_or("control_period", cfg.control_period)?;
        cfg.settle_time = map.f64_or("settle_time", cfg.settle_time)?;
        cfg.divergence.max_distance = map.f64_or("max_distance", cfg.divergence.max_distance)?;
        cfg.divergence.max_saturation_time = map.f64_or("max_saturation_time", cfg.divergence.max_saturation_time)?;
        if let Some(source) = map.get("velocity_source") {
            cfg.velocity_source = source.parse()?;
        }
        if let Some(dir) = map.get("out_dir") {
            cfg.out_dir = Some(resolve(dir));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Seed for trial `trial` derived from the experiment seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    // SplitMix64 finaliser over the pair.
    let mut z = seed ^ (trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One controller-rate sample of a teach run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeachSample {
    pub t: f64,
    pub truth: Pose,
    pub odometry: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeachRun {
    pub map: TeachMap,
    /// True pose at each keyframe.
    pub truth: Vec<Pose>,
    pub trajectory: Vec<TeachSample>,
    /// Distance between the final odometry and true poses (m).
    pub terminal_drift: f64,
    pub path_length: f64,
}

impl TeachRun {
    /// Map sharing the odometry map's arc-lengths but holding true poses.
    pub fn truth_map(&self) -> Result<TeachMap, HarnessError> {
        Ok(self.map.with_poses(&self.truth)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        self.map.save(dir)?;
        let mut truth = String::from("index,x,y,theta\n");
        for (i, p) in self.truth.iter().enumerate() {
            truth.push_str(&format!("{i},{},{},{}\n", p.x, p.y, p.theta));
        }
        write(&dir.join("truth.csv"), truth)?;
        let mut traj = String::from("t,x,y,theta,x_odom,y_odom,theta_odom\n");
        for s in &self.trajectory {
            traj.push_str(&format!(
                "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                s.t, s.truth.x, s.truth.y, s.truth.theta, s.odometry.x, s.odometry.y, s.odometry.theta
            ));
        }
        write(&dir.join("teach_trajectory.csv"), traj)?;
        let mut summary = KvMap::new();
        summary.set("keyframes", self.map.len());
        summary.set("path_length", self.path_length);
        summary.set("map_length", self.map.total_length());
        summary.set("terminal_drift", self.terminal_drift);
        kv::write_file(dir.join("teach_summary.txt"), "# teach run", &summary)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref();
        let map = TeachMap::load(dir)?;
        let parse_rows = |name: &str, cols: usize| -> Result<Vec<Vec<f64>>, HarnessError> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Io { path, source })?;
            text.lines()
                .skip(1)
                .enumerate()
                .map(|(i, line)| {
                    let v: Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
                    match v {
                        Ok(v) if v.len() == cols => Ok(v),
                        _ => Err(HarnessError::Misaligned(format!("{name} row {i}"))),
                    }
                })
                .collect()
        };
        let truth: Vec<Pose> = parse_rows("truth.csv", 4)?
            .into_iter()
            .map(|r| Pose::new(r[1], r[2], r[3]))
            .collect();
        if truth.len() != map.len() {
            return Err(HarnessError::Misaligned(format!(
                "{} truth poses for {} keyframes",
                truth.len(),
                map.len()
            )));
        }
        let trajectory = parse_rows("teach_trajectory.csv", 7)?
            .into_iter()
            .map(|r| TeachSample {
                t: r[0],
                truth: Pose::new(r[1], r[2], r[3]),
                odometry: Pose::new(r[4], r[5], r[6]),
            })
            .collect();
        let summary = kv::read_file(dir.join("teach_summary.txt"))?;
        Ok(Self {
            map,
            truth,
            trajectory,
            terminal_drift: summary.f64("terminal_drift")?,
            path_length: summary.f64("path_length")?,
        })
    }
}

fn write(path: &Path, text: String) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Steady-state inputs for body velocities `(v, ω)` plus velocity feedback.
fn velocity_servo(state: &RobotState, v: f64, w: f64, p: &VehicleParams) -> ControlInput {
    const GAIN: f64 = 5.0;
    ControlInput::new(
        p.c4 * v - p.c3 * w * w + p.c1 * GAIN * (v - state.v_x),
        p.c6 * w + p.c5 * v * w + p.c2 * GAIN * (w - state.omega),
    )
}

/// Drives the scripted path with a pure-pursuit follower on the true pose,
/// recording keyframes from the odometry estimate.
pub fn run_teach(config: &ExperimentConfig) -> Result<TeachRun, HarnessError> {
    config.validate()?;
    let path = config.path.build()?;
    teach_along(config, &path)
}

fn teach_along(config: &ExperimentConfig, path: &ScriptedPath) -> Result<TeachRun, HarnessError> {
    const LOOKAHEAD: f64 = 0.5;
    let params = config.vehicle;
    let kappa = path.max_curvature().min(2.0 / LOOKAHEAD);
    let speed = config.teach_speed;
    let w_needed = params.c6 * kappa * speed + params.c5 * speed * kappa * speed;
    if w_needed > config.limits.omega_r_max || params.c4 * speed > config.limits.v_x_r_max {
        return Err(HarnessError::InfeasiblePath(format!(
            "speed {speed} m/s on curvature {kappa:.3} 1/m needs inputs beyond the actuator caps"
        )));
    }

    let steps = config.steps_per_tick()?;
    let world = WorldModel::new(config.seed);
    let profile = SpeedProfile::new(speed, config.accel, path.length())?;
    let mut plant = Plant::new(
        params,
        config.profile.terrain,
        config.limits,
        config.dt,
        RobotState::at_rest(path.start()),
        stream(config.seed, 1),
    )?;
    let mut odo_rng = stream(config.seed, 2);
    let mut odometry = path.start();
    let mut map = TeachMap::with_defaults();
    let mut truth = Vec::new();
    let mut trajectory = Vec::new();
    let mut progress = 0.0;
    let limit = profile.duration() + 30.0;
    let mut tick = 0usize;
    loop {
        let t = tick as f64 * config.control_period;
        let pose = plant.state.pose();
        progress = path.project(&pose, progress, 0.5);
        trajectory.push(TeachSample {
            t,
            truth: pose,
            odometry,
        });
        if map.is_empty() {
            map.push(odometry, world.render(&pose))?;
            truth.push(pose);
        }
        if progress >= path.length() - 0.02 || t > limit {
            break;
        }

        let (s_plan, v_plan, _) = profile.at_time(t);
        let v = (v_plan + 0.5 * (s_plan - progress)).clamp(0.05, 1.5 * speed);
        let target = path.pose_at(progress + LOOKAHEAD);
        let (dx, dy) = (target.x - pose.x, target.y - pose.y);
        let alpha = wrap_angle(dy.atan2(dx) - pose.theta);
        let w = 2.0 * alpha.sin() / LOOKAHEAD * v;

        let input = velocity_servo(&plant.state, v, w, &params);
        plant.advance(input, steps)?;
        let measured = odometry_step(&BodyDelta::between(&pose, &plant.state.pose()), &config.profile.odometry, &mut odo_rng);
        let next_odometry = measured.apply_to(&odometry);
        record_crossings(&mut map, &mut truth, &world, (pose, odometry), (plant.state.pose(), next_odometry))?;
        odometry = next_odometry;
        tick += 1;
    }
    if progress < path.length() - 0.05 {
        return Err(HarnessError::InfeasiblePath(format!(
            "follower stalled at {progress:.2} of {:.2} m",
            path.length()
        )));
    }
    let last = trajectory.last().expect("at least one sample");
    Ok(TeachRun {
        terminal_drift: last.odometry.distance_to(&last.truth),
        map,
        truth,
        trajectory,
        path_length: path.length(),
    })
}

fn lerp_pose(a: &Pose, b: &Pose, f: f64) -> Pose {
    Pose::new(
        a.x + f * (b.x - a.x),
        a.y + f * (b.y - a.y),
        wrap_angle(a.theta + f * wrap_angle(b.theta - a.theta)),
    )
}

/// Records keyframes where the odometry crosses a recording threshold within
/// one control tick, interpolating truth and odometry linearly over the tick.
/// Checking only at tick boundaries would overshoot the spacing by up to one
/// tick of travel.
fn record_crossings(
    map: &mut TeachMap,
    truth: &mut Vec<Pose>,
    world: &WorldModel,
    (mut truth_a, mut odo_a): (Pose, Pose),
    (truth_b, odo_b): (Pose, Pose),
) -> Result<(), HarnessError> {
    while map.should_record(&odo_b) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if map.should_record(&lerp_pose(&odo_a, &odo_b, mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (t_pose, o_pose) = (lerp_pose(&truth_a, &truth_b, hi), lerp_pose(&odo_a, &odo_b, hi));
        map.push(o_pose, world.render(&t_pose))?;
        truth.push(t_pose);
        truth_a = t_pose;
        odo_a = o_pose;
    }
    Ok(())
}

/// Divergence cause of an unstable trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Distance { t: f64, distance: f64 },
    Saturation { t: f64 },
    NonFinite { t: f64 },
}

impl Divergence {
    pub fn describe(&self) -> String {
        match self {
            Self::Distance { t, distance } => format!("distance {distance:.3} m at t={t:.2} s"),
            Self::Saturation { t } => format!("actuators saturated until t={t:.2} s"),
            Self::NonFinite { t } => format!("non-finite state at t={t:.2} s"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub mae_x: f64,
    pub mae_y: f64,
    /// Degrees.
    pub mae_theta: f64,
    pub mean_dist: f64,
    pub max_dist: f64,
    pub stable: bool,
    pub completion_fraction: f64,
    pub divergence: Option<Divergence>,
    pub samples: usize,
}

impl TrialMetrics {
    pub fn status(&self) -> &'static str {
        if self.stable {
            "stable"
        } else {
            "unstable"
        }
    }

    pub fn to_kv(&self, prefix: &str) -> KvMap {
        let mut map = KvMap::new();
        map.set(&format!("{prefix}mae_x"), format!("{:.6}", self.mae_x));
        map.set(&format!("{prefix}mae_y"), format!("{:.6}", self.mae_y));
        map.set(&format!("{prefix}mae_theta_deg"), format!("{:.6}", self.mae_theta));
        map.set(&format!("{prefix}mean_dist"), format!("{:.6}", self.mean_dist));
        map.set(&format!("{prefix}max_dist"), format!("{:.6}", self.max_dist));
        map.set(&format!("{prefix}stability"), self.status());
        map.set(&format!("{prefix}completion_fraction"), format!("{:.6}", self.completion_fraction));
        map.set(
            &format!("{prefix}divergence"),
            self.divergence.map_or("none".to_string(), |d| d.describe()),
        );
        map
    }
}

/// Streaming metric computation; also applies the divergence rule.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    rule: DivergenceRule,
    n: usize,
    sum_ex: f64,
    sum_ey: f64,
    sum_eth: f64,
    sum_d: f64,
    max_d: f64,
    saturated_since: Option<f64>,
    divergence: Option<Divergence>,
}

impl MetricsAccumulator {
    pub fn new(rule: DivergenceRule) -> Self {
        Self {
            rule,
            n: 0,
            sum_ex: 0.0,
            sum_ey: 0.0,
            sum_eth: 0.0,
            sum_d: 0.0,
            max_d: 0.0,
            saturated_since: None,
            divergence: None,
        }
    }

    /// Adds one sample; returns the divergence once the rule trips.
    pub fn push(&mut self, t: f64, truth: &Pose, reference: &Pose, saturated_both: bool) -> Option<Divergence> {
        if self.divergence.is_some() {
            return self.divergence;
        }
        if !(truth.is_finite() && reference.is_finite()) {
            self.divergence = Some(Divergence::NonFinite { t });
            return self.divergence;
        }
        let (ex, ey) = (reference.x - truth.x, reference.y - truth.y);
        let d = ex.hypot(ey);
        self.n += 1;
        self.sum_ex += ex.abs();
        self.sum_ey += ey.abs();
        self.sum_eth += wrap_angle(reference.theta - truth.theta).abs().to_degrees();
        self.sum_d += d;
        self.max_d = self.max_d.max(d);
        if d > self.rule.max_distance {
            self.divergence = Some(Divergence::Distance { t, distance: d });
        } else if saturated_both {
            let since = *self.saturated_since.get_or_insert(t);
            if t - since > self.rule.max_saturation_time {
                self.divergence = Some(Divergence::Saturation { t });
            }
        } else {
            self.saturated_since = None;
        }
        self.divergence
    }

    pub fn finish(&self, completion_fraction: f64) -> TrialMetrics {
        let n = self.n.max(1) as f64;
        TrialMetrics {
            mae_x: self.sum_ex / n,
            mae_y: self.sum_ey / n,
            mae_theta: self.sum_eth / n,
            mean_dist: self.sum_d / n,
            max_dist: self.max_d,
            stable: self.divergence.is_none() && completion_fraction >= 1.0 - 1e-9,
            completion_fraction,
            divergence: self.divergence,
            samples: self.n,
        }
    }
}

/// Metrics of time-aligned truth and reference pose logs.
pub fn compute_metrics(truth: &[Pose], reference: &[Pose], rule: &DivergenceRule) -> Result<TrialMetrics, HarnessError> {
    if truth.len() != reference.len() {
        return Err(HarnessError::Misaligned(format!(
            "{} truth samples vs {} reference samples",
            truth.len(),
            reference.len()
        )));
    }
    if truth.is_empty() {
        return Err(HarnessError::Misaligned("empty logs".into()));
    }
    let mut acc = MetricsAccumulator::new(*rule);
    let mut completed = 1.0;
    for (i, (a, b)) in truth.iter().zip(reference).enumerate() {
        if acc.push(i as f64, a, b, false).is_some() {
            completed = (i + 1) as f64 / truth.len() as f64;
            break;
        }
    }
    Ok(acc.finish(completed))
}

/// One controller-rate row of a repeat trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub truth: Pose,
    /// Reference from the ground-truth teach poses.
    pub reference: Pose,
    pub estimate: Pose,
    /// Reference from the odometry map, as seen by the controller.
    pub map_reference: Pose,
    pub s1: f64,
    pub s2: f64,
    pub v_cmd: f64,
    pub w_cmd: f64,
    pub progress: f64,
    /// Latest planner correction.
    pub correction: Correction,
    /// Keyframe the latest correction was computed against.
    pub keyframe: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOptions {
    pub controller: ControllerKind,
    /// True plant, if different from the controller's nominal model.
    pub plant: Option<VehicleParams>,
    /// Initial displacement of the true pose from the first keyframe.
    pub initial_offset: BodyDelta,
    pub trial: usize,
    /// Overrides the configured speed cap.
    pub speed: Option<f64>,
    pub keep_log: bool,
    /// Disables the visual corrections (odometry only).
    pub visual_corrections: bool,
}

impl Default for RepeatOptions {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Smc,
            plant: None,
            initial_offset: BodyDelta::default(),
            trial: 0,
            speed: None,
            keep_log: true,
            visual_corrections: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub trial: usize,
    pub seed: u64,
    pub controller: &'static str,
    pub speed: f64,
    pub metrics: TrialMetrics,
    pub rows: Vec<LogRow>,
    /// Control ticks where a reaching gain hit its floor.
    pub floored_ticks: usize,
    /// Control ticks where the state-dependent `τ1` bound failed.
    pub tau1_violations: usize,
}

/// Full closed loop: render → planner corrections → reference → controller
/// → plant, until the reference finishes and settles or the trial diverges.
pub fn run_repeat(config: &ExperimentConfig, teach: &TeachRun, options: &RepeatOptions) -> Result<TrialOutput, HarnessError> {
    config.validate()?;
    let steps = config.steps_per_tick()?;
    let map = &teach.map;
    let truth_map = teach.truth_map()?;
    let speed = options.speed.unwrap_or(config.max_speed);
    let profile = SpeedProfile::new(speed, config.accel, map.total_length())?;
    let seed = trial_seed(config.seed, options.trial);
    let world = WorldModel::new(config.seed);

    let plant_params = options.plant.unwrap_or(config.vehicle);
    let start_truth = options.initial_offset.apply_to(&teach.truth[0]);
    let mut plant = Plant::new(
        plant_params,
        config.profile.terrain,
        config.limits,
        config.dt,
        RobotState::at_rest(start_truth),
        stream(seed, 1),
    )?;
    let mut odo_rng = stream(seed, 2);
    let mut cam_rng = stream(seed, 3);

    let smc = SlidingModeController::new(ControllerConfig {
        gains: config.gains,
        nominal: config.vehicle,
        limits: config.limits,
        ..ControllerConfig::default()
    })?;

    let mut estimate = map.keyframes()[0].pose;
    let mut twist = (0.0, 0.0);
    let mut correction = Correction::default();
    let mut keyframe = 0;
    let mut acc = MetricsAccumulator::new(config.divergence);
    let mut rows = Vec::new();
    let mut floored_ticks = 0;
    let mut tau1_violations = 0;
    let end_time = profile.duration() + config.settle_time;
    let total_ticks = (end_time / config.control_period).ceil() as usize;
    let mut completed_progress = 0.0;

    for tick in 0..=total_ticks {
        let t = tick as f64 * config.control_period;
        let (progress, _, _) = profile.at_time(t);
        let reference = reference_lookup(map, progress, &profile)?;
        let truth_reference = reference_lookup(&truth_map, progress, &profile)?.pose();
        let state = plant.state;
        let measured_state = |pose: &Pose| match config.velocity_source {
            VelocitySource::Odometry => RobotState {
                x: pose.x,
                y: pose.y,
                theta: pose.theta,
                v_x: twist.0,
                omega: twist.1,
            },
            VelocitySource::Plant => RobotState {
                x: pose.x,
                y: pose.y,
                theta: pose.theta,
                ..state
            },
        };
        let estimated = measured_state(&estimate);

        if options.visual_corrections && tick % config.planner_every == 0 {
            let eps1 = local_error(&reference, &estimated).eps1;
            let index = map.nearest_index(progress - eps1);
            keyframe = index;
            let image = world.render_noisy(&state.pose(), config.profile.image_noise, &mut cam_rng);
            correction = visual_correction(&image, map, index, &estimate, &config.planner)?;
        }
        if options.visual_corrections {
            estimate = apply_correction(&estimate, &correction, &config.planner);
        }
        let estimated = measured_state(&estimate);

        let output = match options.controller {
            ControllerKind::Smc => match smc.control_step(&estimated, &reference) {
                Ok(o) => o,
                Err(SmcError::NonFinite(_)) | Err(SmcError::SingularDenominator(_)) => {
                    acc.push(t, &Pose::new(f64::NAN, f64::NAN, f64::NAN), &truth_reference, false);
                    break;
                }
                Err(e) => return Err(e.into()),
            },
            ControllerKind::Baseline(g) => {
                baseline_controller_step(&estimated, &reference, &g, &config.vehicle, &config.limits)
            }
        };
        floored_ticks += usize::from(output.diagnostics.k1_floored || output.diagnostics.k2_floored);
        tau1_violations += usize::from(
            matches!(options.controller, ControllerKind::Smc) && !output.diagnostics.tau1_within_bound,
        );
        let saturated_both = output.diagnostics.saturated_v && output.diagnostics.saturated_omega;
        if options.keep_log {
            rows.push(LogRow {
                t,
                truth: state.pose(),
                reference: truth_reference,
                estimate,
                map_reference: reference.pose(),
                s1: output.s1,
                s2: output.s2,
                v_cmd: output.v_x_r,
                w_cmd: output.omega_r,
                progress,
                correction,
                keyframe,
            });
        }
        completed_progress = progress;
        if acc.push(t, &state.pose(), &truth_reference, saturated_both).is_some() {
            break;
        }
        if tick == total_ticks {
            break;
        }

        let before = plant.state.pose();
        match plant.advance(output.input(), steps) {
            Ok(_) => {}
            Err(VehicleError::NonFinite(_)) => {
                acc.push(t, &Pose::new(f64::NAN, f64::NAN, f64::NAN), &truth_reference, false);
                break;
            }
            Err(e) => return Err(e.into()),
        }
        if !plant.state.is_finite() {
            acc.push(t, &plant.state.pose(), &truth_reference, false);
            break;
        }
        let measured = odometry_step(
            &BodyDelta::between(&before, &plant.state.pose()),
            &config.profile.odometry,
            &mut odo_rng,
        );
        estimate = measured.apply_to(&estimate);
        twist = (measured.forward / config.control_period, measured.dtheta / config.control_period);
    }

    let completion = (completed_progress / map.total_length()).clamp(0.0, 1.0);
    Ok(TrialOutput {
        trial: options.trial,
        seed,
        controller: options.controller.name(),
        speed,
        metrics: acc.finish(completion),
        rows,
        floored_ticks,
        tau1_violations,
    })
}

/// `config.trials` independent repeats, run in parallel with per-trial seeds.
pub fn run_trials(
    config: &ExperimentConfig,
    teach: &TeachRun,
    base: &RepeatOptions,
) -> Result<Vec<TrialOutput>, HarnessError> {
    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            run_repeat(
                config,
                teach,
                &RepeatOptions {
                    trial,
                    ..base.clone()
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub speed: f64,
    pub controller: &'static str,
    pub trials: Vec<TrialMetrics>,
}

impl SweepRow {
    pub fn all_stable(&self) -> bool {
        self.trials.iter().all(|m| m.stable)
    }

    pub fn mean_dist(&self) -> f64 {
        self.trials.iter().map(|m| m.mean_dist).sum::<f64>() / self.trials.len().max(1) as f64
    }
}

/// Repeats at each speed cap with identical gains.
pub fn run_speed_sweep(
    config: &ExperimentConfig,
    teach: &TeachRun,
    speeds: &[f64],
    controller: ControllerKind,
) -> Result<Vec<SweepRow>, HarnessError> {
    if speeds.is_empty() {
        return Err(HarnessError::Config("speed sweep needs at least one speed".into()));
    }
    speeds
        .iter()
        .map(|&speed| {
            let outputs = run_trials(
                config,
                teach,
                &RepeatOptions {
                    controller,
                    speed: Some(speed),
                    keep_log: false,
                    ..RepeatOptions::default()
                },
            )?;
            Ok(SweepRow {
                speed,
                controller: controller.name(),
                trials: outputs.into_iter().map(|o| o.metrics).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerRow {
    pub mask: u8,
    pub x0: f64,
    pub params: VehicleParams,
    pub metrics: TrialMetrics,
}

/// Plant parameters at every `c_i·(1 ± fraction)` corner combined with each
/// ICR offset, in a fixed order.
pub fn corner_plants(nominal: &VehicleParams, fraction: f64, x0_values: &[f64]) -> Vec<(u8, f64, VehicleParams)> {
    x0_values
        .iter()
        .flat_map(|&x0| (0..64u8).map(move |mask| (mask, x0, nominal.corner(mask, fraction, x0))))
        .collect()
}

/// One repeat trial per plant corner; the controller keeps nominal values.
pub fn run_robustness_corners(
    config: &ExperimentConfig,
    teach: &TeachRun,
    fraction: f64,
) -> Result<Vec<CornerRow>, HarnessError> {
    let x0_values = [config.gains.x0_min, config.gains.x0_max];
    corner_plants(&config.vehicle, fraction, &x0_values)
        .into_par_iter()
        .map(|(mask, x0, params)| {
            let out = run_repeat(
                config,
                teach,
                &RepeatOptions {
                    plant: Some(params),
                    keep_log: false,
                    ..RepeatOptions::default()
                },
            )?;
            Ok(CornerRow {
                mask,
                x0,
                params,
                metrics: out.metrics,
            })
        })
        .collect()
}
