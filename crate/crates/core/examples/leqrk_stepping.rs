//! Stepping LEQRK and LEQRK-PC by hand and watching the quadratized energy.

use gfrk::diagnostics::mass;
use gfrk::integrators::{Leqrk, Scheme, SolverConfig, Stepper};
use gfrk::models::{GradientFlowModel, ModelKind, ModelParams};
use gfrk::spectral::{Field, Grid, Spectral};
use gfrk::tableau::{dirk4, gauss4};

fn main() -> gfrk::Result<()> {
    let grid = Grid::square_2pi(64)?;
    let sp = Spectral::new(&grid);
    let phi0 = Field::from_fn(&grid, |x, y| 0.6 * (x + 2.0 * y).sin() + 0.3 * (3.0 * x).cos());
    for (tab, scheme) in [
        (gauss4(), Scheme::Leqrk),
        (gauss4(), Scheme::LeqrkPc),
        (dirk4(), Scheme::LeqrkPc),
    ] {
        let name = format!("{} {:?}", tab.name(), scheme);
        let model =
            GradientFlowModel::new(ModelKind::CahnHilliard, &grid, ModelParams::new(0.01, 1.0, 1.0))?;
        let integ = Leqrk::new(model, tab, SolverConfig::default().with_pc_iters(2))?;
        let mut st = Stepper::new(integ, scheme, phi0.clone(), 0.0);
        let e0 = st.integrator().model().energy_quadratized(&sp, st.state());
        for _ in 0..20 {
            st.step(0.1)?;
        }
        let rec = st.last_stages().expect("stepped");
        println!(
            "{name}: energy {e0:.8} -> {:.8}, mass drift {:.1e}, last step {} Krylov iterations",
            st.integrator().model().energy_quadratized(&sp, st.state()),
            mass(&st.state().phi) - mass(&phi0),
            rec.stats.krylov_iterations
        );
    }
    Ok(())
}
