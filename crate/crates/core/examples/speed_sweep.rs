//! Repeat speed sweep with unchanged gains for both controllers.
//!
//! The sliding-mode controller keeps tracking as the speed cap rises; the
//! proportional baseline, tuned at the lowest speed, loses the path.

use tr_smc::harness::{run_speed_sweep, run_teach, BaselineGains, ControllerKind, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::indoor(1);
    cfg.trials = 3;
    let teach = run_teach(&cfg)?;
    let speeds = [0.35, 0.45, 0.6];
    println!("controller speed stable mean_dist");
    for kind in [ControllerKind::Smc, ControllerKind::Baseline(BaselineGains::default())] {
        for row in run_speed_sweep(&cfg, &teach, &speeds, kind)? {
            let stable = row.trials.iter().filter(|m| m.stable).count();
            println!(
                "{:10} {:5.2} {:>4}/{} {:9.4}",
                row.controller,
                row.speed,
                stable,
                row.trials.len(),
                row.mean_dist()
            );
        }
    }
    Ok(())
}
