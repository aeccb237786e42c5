//! Calibrates the odometry heading bias of each environment.
//!
//! The bias is bisected until the mean terminal drift over the indoor loop
//! hits the target, using 64 noise seeds, then checked on 64 held-out seeds.
//! The results are frozen as `INDOOR_DRIFT_BIAS` and `OUTDOOR_DRIFT_BIAS`.

use tr_smc::path::PathSpec;
use tr_smc::world::{calibrate_drift_bias, make_indoor_profile, make_outdoor_profile, terminal_drift, OdometryModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathSpec::indoor_loop().build()?;
    // 7 mm spacing: one odometry update per millisecond at teach speed.
    let n = (path.length() / 0.007) as usize;
    let poses: Vec<_> = (0..=n).map(|k| path.pose_at(k as f64 * path.length() / n as f64)).collect();
    println!("loop length {:.2} m, {} odometry updates", path.length(), n);
    for (profile, target) in [(make_indoor_profile(), 0.502), (make_outdoor_profile(), 0.904)] {
        let bias = calibrate_drift_bias(&poses, &profile.odometry, target, 0..64);
        let model = OdometryModel {
            drift_bias: bias,
            ..profile.odometry
        };
        println!(
            "{:8} target {target:.3} m: bias {bias:.7} rad/m (frozen {:.7}), held-out drift {:.3} m",
            profile.name,
            profile.odometry.drift_bias,
            terminal_drift(&poses, &model, 100..164)
        );
    }
    Ok(())
}
