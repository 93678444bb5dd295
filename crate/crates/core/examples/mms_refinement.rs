//! Time-step refinement against the manufactured solution sin x sin y cos t.

use gfrk::harness::{run_refinement, RunConfig, SchemeKind};
use gfrk::integrators::Forcing;
use gfrk::models::ModelKind;

fn main() -> gfrk::Result<()> {
    let dts = [0.1, 0.05, 0.025, 0.0125];
    for (scheme, tableau, m) in [
        (SchemeKind::LeqrkPc, "gauss4", 0),
        (SchemeKind::LeqrkPc, "gauss4", 1),
        (SchemeKind::LeqrkPc, "dirk4", 2),
        (SchemeKind::Cs2, "gauss4", 0),
    ] {
        let mut cfg = RunConfig::new(ModelKind::CahnHilliard, 32, dts[0], 1.0);
        cfg.scheme = scheme;
        cfg.tableau = tableau.into();
        cfg.pc_iters = m;
        cfg.forcing = Forcing::Mms;
        let r = run_refinement(&cfg, &dts)?;
        let label = match scheme {
            SchemeKind::Cs2 => "cs2".to_string(),
            _ => format!("{tableau} M={m}"),
        };
        println!(
            "{label:>12}: l2 errors {:?}, order {:.2}",
            r.l2_errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            r.fitted_order_l2
        );
    }
    Ok(())
}
