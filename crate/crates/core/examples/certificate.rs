//! Boundary-layer certificate for the default gains.
//!
//! The drift bounds come from a stretch of S-curve tracking, inflated by half
//! as a safety margin. Lowering a surface slope to 1 shows a flagged report.

use tr_smc::smc::{validate_boundary_layers, ControllerConfig, ControllerGains, Phi, SlidingModeController};
use tr_smc::tracking::{offset_start, ReferenceIntegrator, SCurve, TrackingSim};
use tr_smc::vehicle::{Pose, VehicleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = VehicleParams::nominal();
    let controller = SlidingModeController::new(ControllerConfig::default())?;
    let reference = ReferenceIntegrator::new(SCurve::default(), plant.x0, Pose::default());
    let mut sim = TrackingSim::new(plant, controller, reference, offset_start(Pose::default(), 0.0, 0.0, 0.0), 0.001, 0.02)?;
    let worst = sim.run(20.0)?.iter().fold(Phi::default(), |w, s| Phi {
        phi1: w.phi1.max(s.output.phi_bar.phi1),
        phi2: w.phi2.max(s.output.phi_bar.phi2),
    });
    let worst = Phi {
        phi1: 1.5 * worst.phi1,
        phi2: 1.5 * worst.phi2,
    };

    let gains = ControllerGains::nominal();
    println!("drift bounds: phi1 {:.3}, phi2 {:.3}\n", worst.phi1, worst.phi2);
    println!("{}", validate_boundary_layers(&gains, &worst));

    let flat = ControllerGains { lambda2: 1.0, ..gains };
    println!("\nwith lambda2 = 1:\n{}", validate_boundary_layers(&flat, &worst));
    Ok(())
}
