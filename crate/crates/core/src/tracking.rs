//! Closed-loop trajectory tracking against analytic references.
//!
//! The reference pose is integrated jointly with the plant using the same
//! offset-ICR kinematics, so the error dynamics seen by the controller are
//! exactly the modelled ones.

use std::f64::consts::TAU;

use crate::angle::wrap_angle;
use crate::smc::{ControlOutput, Reference, SlidingModeController, SmcError};
use crate::vehicle::{
    kinematics_rate, step_with, ControlInput, Disturbance, Pose, RobotState, VehicleError, VehicleParams,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error(transparent)]
    Controller(#[from] SmcError),
    #[error(transparent)]
    Plant(#[from] VehicleError),
    #[error("control period {control_period} is not a positive multiple of dt {dt}")]
    Period { dt: f64, control_period: f64 },
}

/// Reference velocity profile as an analytic function of time.
pub trait VelocityProfile {
    /// `(v_x, ω, v̇_x, ω̇)` at time `t`.
    fn velocities(&self, t: f64) -> (f64, f64, f64, f64);
}

/// Constant forward speed with a sinusoidal yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SCurve {
    pub speed: f64,
    /// Peak yaw rate (rad/s).
    pub yaw_amplitude: f64,
    /// Period of the yaw oscillation (s).
    pub period: f64,
}

impl Default for SCurve {
    fn default() -> Self {
        Self {
            speed: 0.35,
            yaw_amplitude: 0.3,
            period: 20.0,
        }
    }
}

impl VelocityProfile for SCurve {
    fn velocities(&self, t: f64) -> (f64, f64, f64, f64) {
        let w = TAU / self.period;
        let (sin, cos) = (w * t).sin_cos();
        (self.speed, self.yaw_amplitude * sin, 0.0, self.yaw_amplitude * w * cos)
    }
}

/// Constant `(v_x, ω)`: straight lines and circles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTwist {
    pub speed: f64,
    pub yaw_rate: f64,
}

impl VelocityProfile for ConstantTwist {
    fn velocities(&self, _t: f64) -> (f64, f64, f64, f64) {
        (self.speed, self.yaw_rate, 0.0, 0.0)
    }
}

/// Reference pose integrated with RK4 from an analytic velocity profile.
#[derive(Debug, Clone)]
pub struct ReferenceIntegrator<P> {
    pub profile: P,
    pub x0: f64,
    pub t: f64,
    pub pose: Pose,
}

impl<P: VelocityProfile> ReferenceIntegrator<P> {
    pub fn new(profile: P, x0: f64, start: Pose) -> Self {
        Self {
            profile,
            x0,
            t: 0.0,
            pose: start,
        }
    }

    pub fn reference(&self) -> Reference {
        let (v_x, omega, v_x_dot, omega_dot) = self.profile.velocities(self.t);
        Reference {
            x: self.pose.x,
            y: self.pose.y,
            theta: self.pose.theta,
            v_x,
            omega,
            v_x_dot,
            omega_dot,
        }
    }

    fn rate(&self, pose: [f64; 3], t: f64) -> [f64; 3] {
        let (v_x, omega, _, _) = self.profile.velocities(t);
        let state = RobotState {
            x: pose[0],
            y: pose[1],
            theta: pose[2],
            v_x,
            omega,
        };
        let r = kinematics_rate(&state, self.x0);
        [r.x_dot, r.y_dot, r.theta_dot]
    }

    pub fn advance(&mut self, dt: f64) {
        let y = [self.pose.x, self.pose.y, self.pose.theta];
        let add = |k: &[f64; 3], h: f64| -> [f64; 3] { std::array::from_fn(|i| y[i] + h * k[i]) };
        let k1 = self.rate(y, self.t);
        let k2 = self.rate(add(&k1, dt / 2.0), self.t + dt / 2.0);
        let k3 = self.rate(add(&k2, dt / 2.0), self.t + dt / 2.0);
        let k4 = self.rate(add(&k3, dt), self.t + dt);
        let next: [f64; 3] = std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        self.pose = Pose::new(next[0], next[1], wrap_angle(next[2]));
        self.t += dt;
    }
}

/// One logged control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub state: RobotState,
    pub reference: Reference,
    pub output: ControlOutput,
}

impl TrackSample {
    pub fn distance(&self) -> f64 {
        self.state.pose().distance_to(&self.reference.pose())
    }
}

/// Plant, controller and reference stepped together without disturbances.
#[derive(Debug, Clone)]
pub struct TrackingSim<P> {
    pub plant: VehicleParams,
    pub controller: SlidingModeController,
    pub reference: ReferenceIntegrator<P>,
    pub state: RobotState,
    /// Plant integration step (s).
    pub dt: f64,
    /// Plant steps per control tick.
    pub steps_per_tick: usize,
}

impl<P: VelocityProfile> TrackingSim<P> {
    pub fn new(
        plant: VehicleParams,
        controller: SlidingModeController,
        reference: ReferenceIntegrator<P>,
        initial: RobotState,
        dt: f64,
        control_period: f64,
    ) -> Result<Self, TrackingError> {
        let ratio = control_period / dt;
        let steps = ratio.round();
        if !(steps >= 1.0 && (ratio - steps).abs() < 1e-6) {
            return Err(TrackingError::Period { dt, control_period });
        }
        plant.validate()?;
        Ok(Self {
            plant,
            controller,
            reference,
            state: initial,
            dt,
            steps_per_tick: steps as usize,
        })
    }

    /// Computes one command, holds it for a control period and returns the
    /// sample taken at the start of the tick.
    pub fn tick(&mut self) -> Result<TrackSample, TrackingError> {
        let reference = self.reference.reference();
        let output = self.controller.control_step(&self.state, &reference)?;
        let sample = TrackSample {
            t: self.reference.t,
            state: self.state,
            reference,
            output,
        };
        let input = ControlInput::new(output.v_x_r, output.omega_r);
        for _ in 0..self.steps_per_tick {
            self.state = step_with(&self.state, input, self.dt, &self.plant, &Disturbance::NONE)?;
            self.reference.advance(self.dt);
        }
        Ok(sample)
    }

    pub fn run(&mut self, duration: f64) -> Result<Vec<TrackSample>, TrackingError> {
        let ticks = (duration / (self.dt * self.steps_per_tick as f64)).round() as usize;
        (0..ticks).map(|_| self.tick()).collect()
    }
}

/// Initial state displaced from `start` by `(dx, dy, dθ)` in the world frame,
/// at rest.
pub fn offset_start(start: Pose, dx: f64, dy: f64, dtheta: f64) -> RobotState {
    RobotState::at_rest(Pose::new(start.x + dx, start.y + dy, wrap_angle(start.theta + dtheta)))
}
