//! MBE coarsening from small random data: power-law fits of the energy and
//! the roughness. Scaled down; the experiment config runs the full problem.

use gfrk::harness::{run_coarsening, Epsilon, Initial, RunConfig};
use gfrk::models::ModelKind;

fn main() -> gfrk::Result<()> {
    // The noise grows at rates ~ 1/(4 eps^2) before it saturates; a larger
    // step misses the onset and q drifts away from the slope energy.
    let mut cfg = RunConfig::new(ModelKind::Mbe, 64, 0.0025, 10.0);
    cfg.lx = 6.4;
    cfg.ly = 6.4;
    cfg.lambda = 1.0;
    cfg.epsilon = Epsilon::Epsilon(0.03);
    cfg.initial = Initial::Random {
        amplitude: 0.001,
        seed: 2024,
    };
    let r = run_coarsening(&cfg, (2.0, 10.0))?;
    println!(
        "energy ~ t^{:.3}, roughness ~ t^{:.3} (coarsening predicts -1/3 and 1/3)",
        r.energy_slope, r.roughness_slope
    );
    Ok(())
}
