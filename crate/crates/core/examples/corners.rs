//! Robustness to plant mismatch.
//!
//! Each of the six dynamic coefficients moves to ±25% of nominal and the ICR
//! offset to either end of its assumed range, giving 128 true plants. The
//! controller keeps its nominal model throughout.

use tr_smc::harness::{run_robustness_corners, run_teach, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::indoor(1);
    let teach = run_teach(&cfg)?;
    let mut rows = run_robustness_corners(&cfg, &teach, 0.25)?;
    rows.sort_by(|a, b| b.metrics.mean_dist.total_cmp(&a.metrics.mean_dist));
    let stable = rows.iter().filter(|r| r.metrics.stable).count();
    println!("{stable}/{} corners stable; five hardest:", rows.len());
    println!("mask    x0     c1..c6                                   mean_dist");
    for r in rows.iter().take(5) {
        let c = r.params.coefficients();
        println!(
            "{:4} {:6.3}  [{:5.2} {:5.2} {:5.2} {:5.2} {:5.2} {:5.2}]  {:.4}",
            r.mask, r.x0, c[0], c[1], c[2], c[3], c[4], c[5], r.metrics.mean_dist
        );
    }
    Ok(())
}
