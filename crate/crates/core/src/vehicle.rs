//! Skid-steer ground-truth plant.
//!
//! Pose kinematics with a longitudinally offset instantaneous centre of
//! rotation, second-order body dynamics driven by the reference inputs
//! `(v_x^r, ω^r)`, wheel/body velocity mapping, slip and skid injection at the
//! pose-rate level, and a fixed-step RK4 integrator.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::angle::wrap_angle;
use crate::kv::{self, KvError, KvMap};

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("invalid vehicle parameter `{name}` = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid terrain profile: {0}")]
    InvalidTerrain(&'static str),
    #[error("non-finite {0} passed to the integrator")]
    NonFinite(&'static str),
    #[error("integration step {0} s outside (0, 0.01]")]
    BadStep(f64),
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Physical and dynamic coefficients of the plant.
///
/// `c1..c6` are the lumped coefficients of the body dynamics; `x0` is the
/// longitudinal offset of the instantaneous centre of rotation in the body
/// frame (positive ahead of the centre of mass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Wheel radius (m).
    pub r: f64,
    /// Half of the axle track (m).
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    /// Longitudinal ICR offset (m).
    pub x0: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::nominal()
    }
}

impl VehicleParams {
    /// Nominal plant used as ground truth throughout the crate.
    ///
    /// Geometry follows a Jackal-class platform. The dynamic coefficients give
    /// first-order velocity lags of `c1/c4 = 1 s` (longitudinal) and
    /// `c2/c6 = 0.1 s` (yaw).
    pub const fn nominal() -> Self {
        Self {
            r: 0.098,
            c: 0.1875,
            c1: 10.0,
            c2: 1.0,
            c3: 0.5,
            c4: 10.0,
            c5: 1.0,
            c6: 10.0,
            x0: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("r", self.r),
            ("c", self.c),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
            ("c6", self.c6),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(VehicleError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        if !self.x0.is_finite() {
            return Err(VehicleError::InvalidParam {
                name: "x0",
                value: self.x0,
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Dynamic coefficients as an array `[c1, .., c6]`.
    pub fn coefficients(&self) -> [f64; 6] {
        [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6]
    }

    pub fn with_coefficients(mut self, c: [f64; 6]) -> Self {
        [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6] = c;
        self
    }

    /// Parameter corner: bit `i` of `mask` selects `c_{i+1}·(1 + fraction)`
    /// when set and `c_{i+1}·(1 − fraction)` when clear.
    pub fn corner(&self, mask: u8, fraction: f64, x0: f64) -> Self {
        let mut c = self.coefficients();
        for (i, ci) in c.iter_mut().enumerate() {
            let sign = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
            *ci *= 1.0 + sign * fraction;
        }
        Self {
            x0,
            ..self.with_coefficients(c)
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.set("r", self.r);
        map.set("c", self.c);
        for (i, ci) in self.coefficients().iter().enumerate() {
            map.set(&format!("c{}", i + 1), *ci);
        }
        map.set("x0", self.x0);
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self, VehicleError> {
        let params = Self {
            r: map.f64("r")?,
            c: map.f64("c")?,
            c1: map.f64("c1")?,
            c2: map.f64("c2")?,
            c3: map.f64("c3")?,
            c4: map.f64("c4")?,
            c5: map.f64("c5")?,
            c6: map.f64("c6")?,
            x0: map.f64("x0")?,
        };
        params.validate()?;
        Ok(params)
    }

    /// Loads a flat `key = value` parameter file with keys `r, c, c1..c6, x0`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VehicleError> {
        Self::from_kv(&kv::read_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VehicleError> {
        let header = "# vehicle parameters: r, c in m; c1..c6 dynamic coefficients; x0 ICR offset in m";
        Ok(kv::write_file(path, header, &self.to_kv())?)
    }
}

/// Planar pose `(x, y, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Full plant state: pose plus body velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in (−π, π].
    pub theta: f64,
    /// Longitudinal body velocity (m/s).
    pub v_x: f64,
    /// Yaw rate (rad/s).
    pub omega: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: wrap_angle(pose.theta),
            v_x: 0.0,
            omega: 0.0,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    /// Lateral body velocity implied by the ICR constraint.
    pub fn lateral_velocity(&self, x0: f64) -> f64 {
        -x0 * self.omega
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.theta.is_finite()
            && self.v_x.is_finite()
            && self.omega.is_finite()
    }
}

/// Time derivative of the pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseRate {
    pub x_dot: f64,
    pub y_dot: f64,
    pub theta_dot: f64,
}

/// Reference control inputs entering the body dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub v_x_r: f64,
    pub omega_r: f64,
}

impl ControlInput {
    pub const fn new(v_x_r: f64, omega_r: f64) -> Self {
        Self { v_x_r, omega_r }
    }

    pub fn is_finite(&self) -> bool {
        self.v_x_r.is_finite() && self.omega_r.is_finite()
    }
}

/// Symmetric caps on the reference inputs, as applied by the motor drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorLimits {
    pub v_x_r_max: f64,
    pub omega_r_max: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            v_x_r_max: 24.0,
            omega_r_max: 30.0,
        }
    }
}

impl ActuatorLimits {
    pub fn clamp(&self, input: ControlInput) -> ControlInput {
        ControlInput {
            v_x_r: input.v_x_r.clamp(-self.v_x_r_max, self.v_x_r_max),
            omega_r: input.omega_r.clamp(-self.omega_r_max, self.omega_r_max),
        }
    }

    /// True when each component is at (or beyond) its cap.
    pub fn saturated(&self, input: ControlInput) -> (bool, bool) {
        (
            input.v_x_r.abs() >= self.v_x_r_max,
            input.omega_r.abs() >= self.omega_r_max,
        )
    }
}

/// Right/left wheel angular velocities (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds {
    pub right: f64,
    pub left: f64,
}

pub fn kinematics_rate(state: &RobotState, x0: f64) -> PoseRate {
    let (sin, cos) = state.theta.sin_cos();
    PoseRate {
        x_dot: state.v_x * cos + x0 * state.omega * sin,
        y_dot: state.v_x * sin - x0 * state.omega * cos,
        theta_dot: state.omega,
    }
}

/// Body accelerations `(v̇_x, ω̇)` of the dynamic model.
pub fn dynamics_rate(state: &RobotState, input: ControlInput, params: &VehicleParams) -> (f64, f64) {
    let VehicleParams {
        c1, c2, c3, c4, c5, c6, ..
    } = *params;
    let (v, w) = (state.v_x, state.omega);
    let v_dot = c3 / c1 * w * w - c4 / c1 * v + input.v_x_r / c1;
    let w_dot = -c5 / c2 * v * w - c6 / c2 * w + input.omega_r / c2;
    (v_dot, w_dot)
}

pub fn wheel_to_body(wheels: WheelSpeeds, params: &VehicleParams) -> (f64, f64) {
    let v_x = params.r / 2.0 * (wheels.right + wheels.left);
    let omega = params.r / (2.0 * params.c) * (wheels.right - wheels.left);
    (v_x, omega)
}

pub fn body_to_wheel(v_x: f64, omega: f64, params: &VehicleParams) -> WheelSpeeds {
    WheelSpeeds {
        right: (v_x + params.c * omega) / params.r,
        left: (v_x - params.c * omega) / params.r,
    }
}

/// Wheel–terrain interaction statistics.
///
/// `slip` is the fractional loss of longitudinal speed; `skid` is an undesired
/// lateral body-frame speed (m/s). Skid direction follows the terrain, not the
/// vehicle: it persists over exponentially distributed stretches of ground
/// with mean [`SKID_CORRELATION_LENGTH`]. Tying it to the sign of the yaw rate
/// would make it act as an extra ICR offset inside any steering loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerrainProfile {
    pub slip_mean: f64,
    pub slip_std: f64,
    pub skid_mean: f64,
    pub skid_std: f64,
}

/// Mean distance travelled over which a skid direction persists (m); on the
/// order of a wheel contact patch.
pub const SKID_CORRELATION_LENGTH: f64 = 0.05;

impl TerrainProfile {
    pub const IDENTITY: Self = Self {
        slip_mean: 0.0,
        slip_std: 0.0,
        skid_mean: 0.0,
        skid_std: 0.0,
    };

    pub fn validate(&self) -> Result<(), VehicleError> {
        let all = [self.slip_mean, self.slip_std, self.skid_mean, self.skid_std];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(VehicleError::InvalidTerrain("non-finite statistic"));
        }
        if self.slip_std < 0.0 || self.skid_std < 0.0 {
            return Err(VehicleError::InvalidTerrain("negative standard deviation"));
        }
        if !(0.0..1.0).contains(&self.slip_mean) {
            return Err(VehicleError::InvalidTerrain("slip_mean outside [0, 1)"));
        }
        if self.slip_mean + 3.0 * self.slip_std >= 1.0 {
            return Err(VehicleError::InvalidTerrain(
                "slip_mean + 3·slip_std must stay below 1",
            ));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Draws one disturbance with skid direction taken from `direction`,
    /// advancing it by `travel` metres. The identity profile consumes no
    /// randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, travel: f64, direction: &mut SkidDirection) -> Disturbance {
        if self.is_identity() {
            return Disturbance::NONE;
        }
        let slip = gaussian(rng, self.slip_mean, self.slip_std).clamp(0.0, 0.999);
        let magnitude = gaussian(rng, self.skid_mean, self.skid_std).max(0.0);
        Disturbance {
            slip,
            skid: magnitude * direction.advance(rng, travel),
        }
    }
}

/// Persistent skid direction: a random telegraph process on {−1, +1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkidDirection {
    sign: f64,
    /// Distance until the next redraw (m); negative means not yet drawn.
    remaining: f64,
}

impl Default for SkidDirection {
    fn default() -> Self {
        Self {
            sign: 1.0,
            remaining: -1.0,
        }
    }
}

impl SkidDirection {
    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, travel: f64) -> f64 {
        if self.remaining < 0.0 {
            self.sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            self.remaining = Exp::new(1.0 / SKID_CORRELATION_LENGTH).expect("positive rate").sample(rng);
        }
        let sign = self.sign;
        self.remaining -= travel;
        if self.remaining < 0.0 {
            // Next call draws a fresh direction and dwell.
            self.remaining = -1.0;
        }
        sign
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        mean
    } else {
        Normal::new(mean, std).expect("std checked non-negative").sample(rng)
    }
}

/// One slip/skid sample, held constant over an integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub slip: f64,
    /// Signed lateral body-frame speed (m/s), positive to the left.
    pub skid: f64,
}

impl Disturbance {
    pub const NONE: Self = Self { slip: 0.0, skid: 0.0 };

    pub fn apply(&self, rates: PoseRate, theta: f64) -> PoseRate {
        if self.slip == 0.0 && self.skid == 0.0 {
            return rates;
        }
        let (sin, cos) = theta.sin_cos();
        let longitudinal = cos * rates.x_dot + sin * rates.y_dot;
        let lateral = -sin * rates.x_dot + cos * rates.y_dot;
        let longitudinal = longitudinal * (1.0 - self.slip);
        let lateral = lateral + self.skid;
        PoseRate {
            x_dot: cos * longitudinal - sin * lateral,
            y_dot: sin * longitudinal + cos * lateral,
            theta_dot: rates.theta_dot,
        }
    }
}

/// Samples a memoryless disturbance from `terrain` (fresh skid direction)
/// and applies it to `rates`.
pub fn apply_slip_skid<R: Rng + ?Sized>(
    rates: PoseRate,
    theta: f64,
    terrain: &TerrainProfile,
    rng: &mut R,
) -> PoseRate {
    terrain.sample(rng, 0.0, &mut SkidDirection::default()).apply(rates, theta)
}

fn derivative(
    s: &[f64; 5],
    input: ControlInput,
    params: &VehicleParams,
    disturbance: &Disturbance,
) -> [f64; 5] {
    let state = RobotState {
        x: s[0],
        y: s[1],
        theta: s[2],
        v_x: s[3],
        omega: s[4],
    };
    let rates = disturbance.apply(kinematics_rate(&state, params.x0), state.theta);
    let (v_dot, w_dot) = dynamics_rate(&state, input, params);
    [rates.x_dot, rates.y_dot, rates.theta_dot, v_dot, w_dot]
}

/// One classical RK4 step with a fixed disturbance sample.
pub fn step_with(
    state: &RobotState,
    input: ControlInput,
    dt: f64,
    params: &VehicleParams,
    disturbance: &Disturbance,
) -> Result<RobotState, VehicleError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(VehicleError::BadStep(dt));
    }
    if !state.is_finite() {
        return Err(VehicleError::NonFinite("state"));
    }
    if !input.is_finite() {
        return Err(VehicleError::NonFinite("input"));
    }
    let y = [state.x, state.y, state.theta, state.v_x, state.omega];
    let add = |a: &[f64; 5], k: &[f64; 5], h: f64| -> [f64; 5] {
        std::array::from_fn(|i| a[i] + h * k[i])
    };
    let k1 = derivative(&y, input, params, disturbance);
    let k2 = derivative(&add(&y, &k1, dt / 2.0), input, params, disturbance);
    let k3 = derivative(&add(&y, &k2, dt / 2.0), input, params, disturbance);
    let k4 = derivative(&add(&y, &k3, dt), input, params, disturbance);
    let next: [f64; 5] =
        std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    Ok(RobotState {
        x: next[0],
        y: next[1],
        theta: wrap_angle(next[2]),
        v_x: next[3],
        omega: next[4],
    })
}

/// One RK4 step with a memoryless disturbance drawn from `terrain` (the skid
/// direction is redrawn every call; [`Plant`] keeps it persistent instead).
pub fn step<R: Rng + ?Sized>(
    state: &RobotState,
    input: ControlInput,
    dt: f64,
    params: &VehicleParams,
    terrain: &TerrainProfile,
    rng: &mut R,
) -> Result<RobotState, VehicleError> {
    let disturbance = terrain.sample(rng, state.v_x.abs() * dt, &mut SkidDirection::default());
    step_with(state, input, dt, params, &disturbance)
}

/// Plant instance: parameters, terrain, actuator caps and its own generator.
#[derive(Debug, Clone)]
pub struct Plant<R> {
    pub params: VehicleParams,
    pub terrain: TerrainProfile,
    pub limits: ActuatorLimits,
    pub dt: f64,
    pub state: RobotState,
    skid: SkidDirection,
    rng: R,
}

impl<R: Rng> Plant<R> {
    pub fn new(
        params: VehicleParams,
        terrain: TerrainProfile,
        limits: ActuatorLimits,
        dt: f64,
        initial: RobotState,
        rng: R,
    ) -> Result<Self, VehicleError> {
        params.validate()?;
        terrain.validate()?;
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(VehicleError::BadStep(dt));
        }
        Ok(Self {
            params,
            terrain,
            limits,
            dt,
            state: initial,
            skid: SkidDirection::default(),
            rng,
        })
    }

    /// Holds `input` (after clamping) for `steps` integration steps.
    pub fn advance(&mut self, input: ControlInput, steps: usize) -> Result<RobotState, VehicleError> {
        let input = self.limits.clamp(input);
        for _ in 0..steps {
            let travel = self.state.v_x.abs() * self.dt;
            let disturbance = self.terrain.sample(&mut self.rng, travel, &mut self.skid);
            self.state = step_with(&self.state, input, self.dt, &self.params, &disturbance)?;
        }
        Ok(self.state)
    }
}
