//! Open-loop response of the skid-steer dynamics.
//!
//! A step in the reference speed settles with the longitudinal lag, a step in
//! the reference yaw rate with the much faster yaw lag. Because the ICR sits
//! ahead of the axle, spinning in place also moves the centre sideways.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tr_smc::vehicle::{
    body_to_wheel, ActuatorLimits, ControlInput, Plant, Pose, RobotState, TerrainProfile, VehicleParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = VehicleParams::nominal();
    let mut plant = Plant::new(
        params,
        TerrainProfile::IDENTITY,
        ActuatorLimits::default(),
        0.001,
        RobotState::at_rest(Pose::default()),
        ChaCha8Rng::seed_from_u64(0),
    )?;

    // Steady state of v̇ = 0 with ω = 0 is v = u1 / c4.
    let input = ControlInput::new(params.c4 * 0.5, 0.0);
    println!("speed step to {:.2} m/s", input.v_x_r / params.c4);
    println!("   t      v_x      x");
    for k in 1..=6 {
        let s = plant.advance(input, 500)?;
        println!("{:4.1} {:8.4} {:6.3}", k as f64 * 0.5, s.v_x, s.x);
    }

    plant.state = RobotState::at_rest(Pose::default());
    let input = ControlInput::new(0.0, params.c6 * 1.0);
    println!("\nyaw step to 1 rad/s from rest");
    println!("   t    omega  x      y");
    for k in 1..=5 {
        let s = plant.advance(input, 100)?;
        println!("{:4.1} {:7.4} {:6.3} {:6.3}", k as f64 * 0.1, s.omega, s.x, s.y);
    }

    let w = body_to_wheel(0.5, 1.0, &params);
    println!("\nwheels for (0.5 m/s, 1 rad/s): right {:.2} rad/s, left {:.2} rad/s", w.right, w.left);
    Ok(())
}
