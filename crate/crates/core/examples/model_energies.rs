//! Cahn-Hilliard and MBE models: original and quadratized energies, the
//! chemical potential and the mobility.

use gfrk::models::{EqState, GradientFlowModel, ModelKind, ModelParams};
use gfrk::spectral::{inner, Field, Grid, Spectral};

fn main() -> gfrk::Result<()> {
    let grid = Grid::square_2pi(64)?;
    let sp = Spectral::new(&grid);
    let phi = Field::from_fn(&grid, |x, y| 0.5 * x.sin() * y.cos() + 0.1 * (2.0 * x).cos());
    for kind in [ModelKind::CahnHilliard, ModelKind::Mbe] {
        let model = GradientFlowModel::new(kind, &grid, ModelParams::new(1.0, 0.3, 1.0))?;
        let state = EqState::consistent(&model, &sp, phi.clone(), 0.0);
        let mu = model.chemical_potential(&sp, &state.phi, &state.q, &state.phi);
        // dF/dt = (mu, G mu) <= 0 along the flow.
        let rate = inner(&mu, &model.apply_mobility(&sp, &mu));
        println!(
            "{kind}: F = {:.10}, quadratized = {:.10}, dF/dt = {rate:.4e}",
            model.energy_original(&sp, &phi),
            model.energy_quadratized(&sp, &state),
        );
    }
    Ok(())
}
