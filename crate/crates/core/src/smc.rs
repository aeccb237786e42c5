//! Sliding-mode trajectory tracking controller for the skid-steer plant.
//!
//! The pipeline for one control tick is
//!
//! 1. global tracking error `q^d − q` and its rotation into the body frame,
//! 2. analytic error rates and the sliding surfaces `s_i = λ_i ε_i + ε̇_i`,
//! 3. the drift terms `φ_i` of `ṡ_i` at nominal parameters and their bounds
//!    `φ̄_i` over the parametric uncertainty box,
//! 4. yaw command `ω^r = ω̂^r + ω̄^r`, then longitudinal command
//!    `v_x^r = v̂_x^r + v̄_x^r` (the latter needs the full `ω^r`).
//!
//! The switching terms use a saturation ramp inside the boundary layers
//! `|s_i| ≤ τ_i`. [`validate_boundary_layers`] checks the Lyapunov conditions
//! that size those layers.

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::angle::wrap_angle;
use crate::kv::{self, KvError, KvMap};
use crate::vehicle::{ActuatorLimits, ControlInput, Pose, RobotState, VehicleParams};

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("invalid gain `{name}` = {value}: {reason}")]
    InvalidGain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("ICR denominator {0:e} too close to zero")]
    SingularDenominator(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub lambda1: f64,
    pub lambda2: f64,
    pub k1: f64,
    pub k2: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Lower bound of the ICR offset estimate (m).
    pub x0_min: f64,
    /// Upper bound of the ICR offset estimate (m).
    pub x0_max: f64,
    /// Relative variation of `c1..c6` covered by the bounds.
    pub uncertainty_fraction: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self::nominal()
    }
}

impl ControllerGains {
    /// Default surface slopes, reaching gains and boundary layers.
    pub const fn nominal() -> Self {
        Self {
            lambda1: 1.2,
            lambda2: 2.6,
            k1: 16.5,
            k2: 20.5,
            tau1: 2.5,
            tau2: 3.5,
            x0_min: -0.12,
            x0_max: 0.15,
            uncertainty_fraction: 0.25,
        }
    }

    /// Rejects gains the controller cannot run with. `λ_i ≤ 1` is accepted
    /// here and flagged by [`validate_boundary_layers`] instead.
    pub fn validate(&self) -> Result<(), SmcError> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SmcError::InvalidGain {
                    name,
                    value,
                    reason: "must be finite and positive",
                });
            }
        }
        if !(self.x0_min.is_finite() && self.x0_max.is_finite() && self.x0_min < self.x0_max) {
            return Err(SmcError::InvalidGain {
                name: "x0_min",
                value: self.x0_min,
                reason: "must be finite and below x0_max",
            });
        }
        // x0_min − |ε1| vanishes at |ε1| = x0_min unless x0_min < 0.
        if self.x0_min >= 0.0 {
            return Err(SmcError::InvalidGain {
                name: "x0_min",
                value: self.x0_min,
                reason: "the guarded denominator x0_min − |eps1| can reach zero",
            });
        }
        if !(0.0..1.0).contains(&self.uncertainty_fraction) {
            return Err(SmcError::InvalidGain {
                name: "uncertainty_fraction",
                value: self.uncertainty_fraction,
                reason: "must lie in [0, 1)",
            });
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.set("lambda1", self.lambda1);
        map.set("lambda2", self.lambda2);
        map.set("k1", self.k1);
        map.set("k2", self.k2);
        map.set("tau1", self.tau1);
        map.set("tau2", self.tau2);
        map.set("x0_min", self.x0_min);
        map.set("x0_max", self.x0_max);
        map.set("uncertainty_fraction", self.uncertainty_fraction);
        map
    }

    /// Parses the gains without validating them.
    pub fn from_kv(map: &KvMap) -> Result<Self, SmcError> {
        Ok(Self {
            lambda1: map.f64("lambda1")?,
            lambda2: map.f64("lambda2")?,
            k1: map.f64("k1")?,
            k2: map.f64("k2")?,
            tau1: map.f64("tau1")?,
            tau2: map.f64("tau2")?,
            x0_min: map.f64("x0_min")?,
            x0_max: map.f64("x0_max")?,
            uncertainty_fraction: map.f64("uncertainty_fraction")?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SmcError> {
        Self::from_kv(&kv::read_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SmcError> {
        Ok(kv::write_file(path, "# sliding-mode controller gains", &self.to_kv())?)
    }
}

/// Desired pose and velocities at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v_x: f64,
    pub omega: f64,
    pub v_x_dot: f64,
    pub omega_dot: f64,
}

impl Reference {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.theta,
            self.v_x,
            self.omega,
            self.v_x_dot,
            self.omega_dot,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlobalError {
    pub e_x: f64,
    pub e_y: f64,
    pub e_theta: f64,
}

/// Tracking error expressed in the robot's body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalError {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRates {
    pub eps1_dot: f64,
    pub eps2_dot: f64,
    pub eps3_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Surfaces {
    pub s1: f64,
    pub s2: f64,
}

/// Input-independent part of `ṡ_1`, `ṡ_2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Phi {
    pub phi1: f64,
    pub phi2: f64,
}

pub fn global_error(reference: &Reference, state: &RobotState) -> GlobalError {
    GlobalError {
        e_x: reference.x - state.x,
        e_y: reference.y - state.y,
        e_theta: wrap_angle(reference.theta - state.theta),
    }
}

pub fn to_local_frame(error: &GlobalError, theta: f64) -> LocalError {
    let (sin, cos) = theta.sin_cos();
    LocalError {
        eps1: cos * error.e_x + sin * error.e_y,
        eps2: -sin * error.e_x + cos * error.e_y,
        eps3: error.e_theta,
    }
}

pub fn local_error(reference: &Reference, state: &RobotState) -> LocalError {
    to_local_frame(&global_error(reference, state), state.theta)
}

pub fn error_rates(eps: &LocalError, state: &RobotState, reference: &Reference, x0: f64) -> ErrorRates {
    let (sin3, cos3) = eps.eps3.sin_cos();
    let (v, w) = (state.v_x, state.omega);
    let (vd, wd) = (reference.v_x, reference.omega);
    ErrorRates {
        eps1_dot: w * eps.eps2 + vd * cos3 + wd * x0 * sin3 - v,
        eps2_dot: (x0 - eps.eps1) * w + vd * sin3 - wd * x0 * cos3,
        eps3_dot: wd - w,
    }
}

pub fn sliding_surfaces(eps: &LocalError, rates: &ErrorRates, gains: &ControllerGains) -> Surfaces {
    Surfaces {
        s1: gains.lambda1 * eps.eps1 + rates.eps1_dot,
        s2: gains.lambda2 * eps.eps2 + rates.eps2_dot,
    }
}

/// Drift terms of the surface dynamics at the given parameters and ICR offset.
pub fn phi_terms(
    eps: &LocalError,
    state: &RobotState,
    reference: &Reference,
    params: &VehicleParams,
    x0: f64,
    gains: &ControllerGains,
) -> Phi {
    let VehicleParams {
        c1, c2, c3, c4, c5, c6, ..
    } = *params;
    let LocalError { eps1, eps2, eps3 } = *eps;
    let (sin3, cos3) = eps3.sin_cos();
    let (v, w) = (state.v_x, state.omega);
    let (vd, wd) = (reference.v_x, reference.omega);
    let (vd_dot, wd_dot) = (reference.v_x_dot, reference.omega_dot);
    let (l1, l2) = (gains.lambda1, gains.lambda2);

    // ω̇ without the input term.
    let yaw_drift = -c5 / c2 * v * w - c6 / c2 * w;

    let phi1 = yaw_drift * eps2
        + w * (-w * eps1 + vd * sin3 - wd * x0 * cos3 + w * x0 + l1 * eps2)
        - l1 * v
        + (-c3 / c1 * w * w + c4 / c1 * v)
        + vd * (-(wd - w) * sin3 + l1 * cos3)
        + vd_dot * cos3
        + wd_dot * x0 * sin3
        + wd * (x0 * (wd - w) * cos3 + l1 * x0 * sin3);

    let phi2 = -w * (w * eps2 + vd * cos3 + wd * x0 * sin3 - v)
        + (x0 - eps1) * yaw_drift
        + vd_dot * sin3
        + (wd - w) * vd * cos3
        - wd_dot * x0 * cos3
        + (wd - w) * wd * x0 * sin3
        + l2 * ((x0 - eps1) * w + vd * sin3 - wd * x0 * cos3);

    Phi { phi1, phi2 }
}

/// `max |φ_i|` over every corner `c_j·(1 ± fraction)` combined with
/// `x0 ∈ {x0_min, x0_max}`.
pub fn phi_bounds(
    eps: &LocalError,
    state: &RobotState,
    reference: &Reference,
    params: &VehicleParams,
    gains: &ControllerGains,
) -> Phi {
    let mut bound = Phi::default();
    for x0 in [gains.x0_min, gains.x0_max] {
        for mask in 0..64u8 {
            let corner = params.corner(mask, gains.uncertainty_fraction, x0);
            let phi = phi_terms(eps, state, reference, &corner, x0, gains);
            bound.phi1 = bound.phi1.max(phi.phi1.abs());
            bound.phi2 = bound.phi2.max(phi.phi2.abs());
        }
    }
    bound
}

/// `(ṡ_1, ṡ_2)` for the given drift terms and applied inputs.
pub fn surface_rates(
    phi: &Phi,
    eps: &LocalError,
    params: &VehicleParams,
    x0: f64,
    input: ControlInput,
) -> (f64, f64) {
    (
        phi.phi1 + eps.eps2 * input.omega_r / params.c2 - input.v_x_r / params.c1,
        phi.phi2 + (x0 - eps.eps1) * input.omega_r / params.c2,
    )
}

/// Which denominator the yaw command divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IcrDenominator {
    /// `x̂0_min − |ε1|`: bounded away from zero for `x̂0_min < 0`.
    #[default]
    Guarded,
    /// `x0 − ε1` with the controller's nominal `x0`; exact cancellation, but
    /// singular at `ε1 = x0`.
    Exact,
}

impl IcrDenominator {
    pub fn evaluate(self, gains: &ControllerGains, x0: f64, eps1: f64) -> Result<f64, SmcError> {
        let d = match self {
            Self::Guarded => gains.x0_min - eps1.abs(),
            Self::Exact => x0 - eps1,
        };
        if !d.is_finite() || d.abs() < 1e-9 {
            return Err(SmcError::SingularDenominator(d));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquivalentControl {
    pub v_x_hat: f64,
    pub omega_hat: f64,
}

/// `ω̂^r = −c2·φ2 / denominator`.
pub fn equivalent_yaw(phi2: f64, params: &VehicleParams, denominator: f64) -> Result<f64, SmcError> {
    if !denominator.is_finite() || denominator.abs() < 1e-9 {
        return Err(SmcError::SingularDenominator(denominator));
    }
    Ok(-params.c2 * phi2 / denominator)
}

/// `v̂_x^r = c1·(φ1 + ε2·ω^r / c2)` with the full yaw command `ω^r`.
pub fn equivalent_longitudinal(phi1: f64, eps2: f64, omega_r: f64, params: &VehicleParams) -> f64 {
    params.c1 * (phi1 + eps2 * omega_r / params.c2)
}

/// Both equivalent terms. `omega_switch` is the switching yaw term that will
/// be added to `ω̂^r`; pass `0.0` for the pure equivalent control.
pub fn equivalent_control(
    phi: &Phi,
    eps: &LocalError,
    params: &VehicleParams,
    denominator: f64,
    omega_switch: f64,
) -> Result<EquivalentControl, SmcError> {
    let omega_hat = equivalent_yaw(phi.phi2, params, denominator)?;
    let v_x_hat = equivalent_longitudinal(phi.phi1, eps.eps2, omega_hat + omega_switch, params);
    Ok(EquivalentControl { v_x_hat, omega_hat })
}

/// Unit ramp: identity inside `(−1, 1)`, `sign` outside.
pub fn saturation(ratio: f64) -> f64 {
    if ratio.abs() < 1.0 {
        ratio
    } else {
        ratio.signum()
    }
}

fn sign(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

/// Shape of the switching term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchingFunction {
    /// `sat(s_i / τ_i)`.
    #[default]
    Saturation,
    /// Discontinuous `sign(s_i)`; kept for chattering comparisons.
    Sign,
}

impl SwitchingFunction {
    pub fn apply(self, s: f64, tau: f64) -> f64 {
        match self {
            Self::Saturation => saturation(s / tau),
            Self::Sign => sign(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwitchingControl {
    pub v_x_bar: f64,
    pub omega_bar: f64,
    /// Effective longitudinal gain `k1 − φ̄1 − |ε2·ω̄^r|/c2` after flooring.
    pub k1_bar: f64,
    /// `k2 − φ̄2` after flooring.
    pub k2_bar: f64,
    pub k1_floored: bool,
    pub k2_floored: bool,
}

/// Saturated switching terms.
///
/// Whenever a reaching gain is not positive at this state it is replaced by
/// `k_floor` and the corresponding `*_floored` flag is raised.
#[allow(clippy::too_many_arguments)]
pub fn switching_control(
    surfaces: &Surfaces,
    phi_bar: &Phi,
    eps: &LocalError,
    params: &VehicleParams,
    gains: &ControllerGains,
    denominator: f64,
    function: SwitchingFunction,
    k_floor: f64,
) -> SwitchingControl {
    let raw_k2 = -phi_bar.phi2 + gains.k2;
    let k2_floored = raw_k2 <= 0.0;
    let k2_bar = if k2_floored { k_floor } else { raw_k2 };
    let omega_bar = -(params.c2 / denominator * k2_bar) * function.apply(surfaces.s2, gains.tau2);

    let raw_k1 = gains.k1 - phi_bar.phi1 - (eps.eps2 * omega_bar).abs() / params.c2;
    let k1_floored = raw_k1 <= 0.0;
    let k1_bar = if k1_floored { k_floor } else { raw_k1 };
    let v_x_bar = params.c1 * k1_bar * function.apply(surfaces.s1, gains.tau1);

    SwitchingControl {
        v_x_bar,
        omega_bar,
        k1_bar,
        k2_bar,
        k1_floored,
        k2_floored,
    }
}

/// Right-hand side of the state-dependent upper bound on `τ1`.
pub fn tau1_bound(gains: &ControllerGains, k1_bar: f64, k2_bar: f64, eps1_abs: f64) -> f64 {
    let coupling = (16.0 * k2_bar * k2_bar * gains.lambda2 / (gains.x0_min - eps1_abs)).abs();
    gains.lambda1 * eps1_abs * eps1_abs / (k1_bar + coupling + eps1_abs)
}

/// Static configuration of a controller instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
    /// Nominal plant model, including the nominal ICR offset `x0`.
    pub nominal: VehicleParams,
    pub limits: ActuatorLimits,
    pub switching: SwitchingFunction,
    pub denominator: IcrDenominator,
    /// Replacement for non-positive reaching gains.
    pub k_floor: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: ControllerGains::nominal(),
            nominal: VehicleParams::nominal(),
            limits: ActuatorLimits::default(),
            switching: SwitchingFunction::Saturation,
            denominator: IcrDenominator::Guarded,
            k_floor: 0.05,
        }
    }
}

/// Per-tick boundary-layer and gain diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub k1_floored: bool,
    pub k2_floored: bool,
    /// `τ1` satisfies the state-dependent bound at the current `|ε1|`.
    pub tau1_within_bound: bool,
    pub saturated_v: bool,
    pub saturated_omega: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub v_x_r: f64,
    pub omega_r: f64,
    pub s1: f64,
    pub s2: f64,
    pub eps: LocalError,
    pub phi: Phi,
    pub phi_bar: Phi,
    pub diagnostics: Diagnostics,
}

impl ControlOutput {
    pub fn input(&self) -> ControlInput {
        ControlInput::new(self.v_x_r, self.omega_r)
    }
}

#[derive(Debug, Clone)]
pub struct SlidingModeController {
    config: ControllerConfig,
}

impl SlidingModeController {
    pub fn new(config: ControllerConfig) -> Result<Self, SmcError> {
        config.gains.validate()?;
        config.nominal.validate().map_err(|_| SmcError::InvalidGain {
            name: "nominal",
            value: f64::NAN,
            reason: "nominal vehicle parameters are invalid",
        })?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn control_step(&self, state: &RobotState, reference: &Reference) -> Result<ControlOutput, SmcError> {
        if !state.is_finite() {
            return Err(SmcError::NonFinite("state"));
        }
        if !reference.is_finite() {
            return Err(SmcError::NonFinite("reference"));
        }
        let ControllerConfig {
            gains,
            nominal,
            limits,
            switching,
            denominator,
            k_floor,
        } = self.config;
        let x0 = nominal.x0;

        let eps = local_error(reference, state);
        let rates = error_rates(&eps, state, reference, x0);
        let surfaces = sliding_surfaces(&eps, &rates, &gains);
        let phi = phi_terms(&eps, state, reference, &nominal, x0, &gains);
        let phi_bar = phi_bounds(&eps, state, reference, &nominal, &gains);
        let d = denominator.evaluate(&gains, x0, eps.eps1)?;

        let sw = switching_control(&surfaces, &phi_bar, &eps, &nominal, &gains, d, switching, k_floor);
        let omega_hat = equivalent_yaw(phi.phi2, &nominal, d)?;
        let omega_r = (omega_hat + sw.omega_bar).clamp(-limits.omega_r_max, limits.omega_r_max);
        let v_x_hat = equivalent_longitudinal(phi.phi1, eps.eps2, omega_r, &nominal);
        let v_x_r = (v_x_hat + sw.v_x_bar).clamp(-limits.v_x_r_max, limits.v_x_r_max);
        if !(v_x_r.is_finite() && omega_r.is_finite()) {
            return Err(SmcError::NonFinite("command"));
        }

        let (saturated_v, saturated_omega) = limits.saturated(ControlInput::new(v_x_r, omega_r));
        let k1_plain = (gains.k1 - phi_bar.phi1).max(k_floor);
        let diagnostics = Diagnostics {
            k1_floored: sw.k1_floored,
            k2_floored: sw.k2_floored,
            tau1_within_bound: gains.tau1 <= tau1_bound(&gains, k1_plain, sw.k2_bar, eps.eps1.abs()),
            saturated_v,
            saturated_omega,
        };
        Ok(ControlOutput {
            v_x_r,
            omega_r,
            s1: surfaces.s1,
            s2: surfaces.s2,
            eps,
            phi,
            phi_bar,
            diagnostics,
        })
    }
}

/// One control tick with the default saturation law, guarded denominator and
/// actuator caps.
pub fn control_step(
    state: &RobotState,
    reference: &Reference,
    nominal: &VehicleParams,
    gains: &ControllerGains,
) -> Result<ControlOutput, SmcError> {
    let controller = SlidingModeController::new(ControllerConfig {
        gains: *gains,
        nominal: *nominal,
        ..ControllerConfig::default()
    })?;
    controller.control_step(state, reference)
}

/// Outcome of the boundary-layer checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub lambda1_ok: bool,
    pub lambda2_ok: bool,
    pub k1_bar: f64,
    pub k2_bar: f64,
    /// Smallest `K̄2` allowed by `τ2 ≤ 4·λ2·K̄2`.
    pub required_k2_bar: f64,
    pub tau2_ok: bool,
    /// `|ε1|` beyond which the `τ1` bound holds (searched up to 1 km).
    pub eps1_admissible_from: Option<f64>,
    /// Admissible `|ε1|` interval intersected with the layer region `[0, 2τ1]`.
    pub eps1_interval_in_layer: Option<(f64, f64)>,
    pub violations: Vec<String>,
}

impl CertificateReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.set("lambda1_gt_1", self.lambda1_ok);
        map.set("lambda2_gt_1", self.lambda2_ok);
        map.set("k1_bar", self.k1_bar);
        map.set("k2_bar", self.k2_bar);
        map.set("required_k2_bar", self.required_k2_bar);
        map.set("tau2_condition", self.tau2_ok);
        match self.eps1_admissible_from {
            Some(e) => map.set("eps1_admissible_from", e),
            None => map.set("eps1_admissible_from", "none"),
        }
        match self.eps1_interval_in_layer {
            Some((lo, hi)) => map.set("eps1_interval_in_layer", format!("{lo} {hi}")),
            None => map.set("eps1_interval_in_layer", "empty"),
        }
        map.set("certificate_ok", self.ok());
        map.set(
            "violations",
            if self.violations.is_empty() {
                "none".to_string()
            } else {
                self.violations.join(",")
            },
        );
        map
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv().render(""))
    }
}

/// Checks the boundary-layer conditions against worst-case drift bounds.
pub fn validate_boundary_layers(gains: &ControllerGains, phi_bar_worst: &Phi) -> CertificateReport {
    let mut violations = Vec::new();
    let lambda1_ok = gains.lambda1 > 1.0;
    let lambda2_ok = gains.lambda2 > 1.0;
    if !lambda1_ok {
        violations.push("lambda1_not_greater_than_1".to_string());
    }
    if !lambda2_ok {
        violations.push("lambda2_not_greater_than_1".to_string());
    }
    let k1_bar = gains.k1 - phi_bar_worst.phi1;
    let k2_bar = gains.k2 - phi_bar_worst.phi2;
    if k1_bar <= 0.0 {
        violations.push("k1_bar_not_positive".to_string());
    }
    if k2_bar <= 0.0 {
        violations.push("k2_bar_not_positive".to_string());
    }
    let required_k2_bar = gains.tau2 / (4.0 * gains.lambda2);
    let tau2_ok = gains.tau2 <= 4.0 * gains.lambda2 * k2_bar;
    if !tau2_ok {
        violations.push("tau2_exceeds_4_lambda2_k2_bar".to_string());
    }

    let eps1_admissible_from = if k1_bar > 0.0 && k2_bar > 0.0 {
        admissible_eps1_threshold(gains, k1_bar, k2_bar)
    } else {
        None
    };
    let layer = 2.0 * gains.tau1;
    let eps1_interval_in_layer = eps1_admissible_from
        .filter(|&e| e <= layer)
        .map(|e| (e, layer));
    if eps1_interval_in_layer.is_none() {
        violations.push("tau1_bound_empty_in_layer".to_string());
    }

    CertificateReport {
        lambda1_ok,
        lambda2_ok,
        k1_bar,
        k2_bar,
        required_k2_bar,
        tau2_ok,
        eps1_admissible_from,
        eps1_interval_in_layer,
        violations,
    }
}

/// Smallest `e` such that the `τ1` bound holds on `[e, 1000]`.
fn admissible_eps1_threshold(gains: &ControllerGains, k1_bar: f64, k2_bar: f64) -> Option<f64> {
    const MAX: f64 = 1000.0;
    const SAMPLES: usize = 100_000;
    let holds = |e: f64| gains.tau1 <= tau1_bound(gains, k1_bar, k2_bar, e);
    if !holds(MAX) {
        return None;
    }
    // Last failing grid point, scanning down from the top.
    let grid = |i: usize| MAX * i as f64 / SAMPLES as f64;
    let mut hi = MAX;
    let mut lo = 0.0;
    for i in (0..SAMPLES).rev() {
        if !holds(grid(i)) {
            lo = grid(i);
            hi = grid(i + 1);
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
