//! One teach pass and a set of repeats on the indoor loop.
//!
//! Writes per-trial logs, the path overlay, the distance plot and a metrics
//! summary to the directory given as the first argument
//! (default `teach-and-repeat-out`).
//!
//! ```text
//! cargo run --release --example teach_and_repeat -- /tmp/run
//! ```

use std::path::PathBuf;

use tr_smc::harness::{run_teach, run_trials, ExperimentConfig, RepeatOptions};
use tr_smc::report::emit_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "teach-and-repeat-out".into()));
    let mut cfg = ExperimentConfig::indoor(1);
    cfg.trials = 3;

    let teach = run_teach(&cfg)?;
    println!(
        "teach: {} keyframes over {:.2} m, odometry drift {:.3} m",
        teach.map.len(),
        teach.path_length,
        teach.terminal_drift
    );

    let trials = run_trials(&cfg, &teach, &RepeatOptions::default())?;
    for t in &trials {
        println!(
            "trial {}: {} mean_dist {:.4} m, max {:.4} m",
            t.trial,
            t.metrics.status(),
            t.metrics.mean_dist,
            t.metrics.max_dist
        );
    }
    for path in emit_report(&out, &teach, &trials)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
