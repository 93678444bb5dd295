//! Largest step size that reproduces a fine-step reference within 5%, on a
//! small Cahn-Hilliard coarsening problem.

use gfrk::harness::{run_max_stable_dt, Epsilon, Initial, RunConfig, SchemeKind};
use gfrk::models::ModelKind;

fn main() -> gfrk::Result<()> {
    let dts = [1.6e-2, 8e-3, 4e-3, 2e-3, 1e-3];
    for (scheme, tableau) in [(SchemeKind::Cs2, "gauss4"), (SchemeKind::LeqrkPc, "gauss4")] {
        let mut cfg = RunConfig::new(ModelKind::CahnHilliard, 32, dts[0], 0.4);
        cfg.lx = 1.0;
        cfg.ly = 1.0;
        cfg.lambda = 1.0;
        cfg.epsilon = Epsilon::Epsilon(0.08);
        cfg.initial = Initial::CosineCombo;
        cfg.scheme = scheme;
        cfg.tableau = tableau.into();
        let table = run_max_stable_dt(&cfg, &dts, 2.5e-4, 0.05)?;
        println!("{}:", scheme.name());
        for row in &table.rows {
            println!("  dt {:.1e}: deviation {:.3e} {}", row.dt, row.deviation, row.correct);
        }
        println!("  largest correct dt {:?}", table.largest_correct());
    }
    Ok(())
}
