//! Visual matching against a taught keyframe.
//!
//! Renders the camera strip at a pose, turns the camera in 5° steps and
//! recovers each turn as a column offset with normalized cross-correlation.
//! Then steps one keyframe along a short taught path and recovers the
//! along-path offset from the neighbouring keyframes.

use tr_smc::image::{ncc_offset, patch_normalize};
use tr_smc::planner::{along_path_correction, PlannerGains, TeachMap};
use tr_smc::vehicle::Pose;
use tr_smc::world::WorldModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = WorldModel::new(1);
    let gains = PlannerGains::default();
    let mut map = TeachMap::with_defaults();
    let px = gains.rad_per_px(&map.geometry);

    let pose = Pose::new(0.0, 0.0, 0.3);
    let base = patch_normalize(&world.render(&pose).to_float(), &map.geometry)?;
    println!("turn(deg) expected(px) found(px)   rho");
    for step in -4..=4 {
        let turn = (5.0 * step as f64).to_radians();
        let turned = Pose::new(pose.x, pose.y, pose.theta + turn);
        let query = patch_normalize(&world.render(&turned).to_float(), &map.geometry)?;
        let m = ncc_offset(&query, &base, gains.search_range);
        println!("{:9.1} {:12.2} {:9} {:5.3}", turn.to_degrees(), turn / px, m.offset, m.rho);
    }

    // Straight 1 m of teach: keyframes every 0.1 m.
    for k in 0..=10 {
        let p = Pose::new(0.1 * k as f64, 0.0, 0.0);
        map.push(p, world.render(&p))?;
    }
    let query = patch_normalize(&world.render(&Pose::new(0.6, 0.0, 0.0)).to_float(), &map.geometry)?;
    let along = along_path_correction(&query, &map, 5, &gains);
    println!(
        "\nquery at keyframe 6 matched from keyframe 5: fraction {:+.2}, correction {:+.3} m, rho {:.3}",
        along.fraction, along.delta_s, along.rho
    );
    Ok(())
}
