//! Second-order convex-splitting baselines.
//!
//! Cahn-Hilliard:
//! ```text
//! (phi^{n+1} - phi^n)/dt = lambda Lap[-eps^2 Lap phi^{n+1/2}
//!     + 1/2 ((phi^n)^2 + (phi^{n+1})^2) phi^{n+1/2} - (3/2 phi^n - 1/2 phi^{n-1})]
//! ```
//! MBE:
//! ```text
//! (phi^{n+1} - phi^n)/dt = -lambda (eps^2 Lap^2 phi^{n+1/2}
//!     - 1/2 div((|grad phi^{n+1}|^2 + |grad phi^n|^2) grad phi^{n+1/2})
//!     + Lap(3/2 phi^n - 1/2 phi^{n-1}))
//! ```
//! The implicit nonlinearity is resolved by a stabilized Picard iteration:
//! the linear part plus `S (phi^{p+1} - phi^p)` is inverted per Fourier mode.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{GradientFlowModel, ModelKind, ModelParams};
use crate::spectral::{Field, Spectral};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cs2Config {
    /// Max-norm change between Picard iterates that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for Cs2Config {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn picard(
    guess: Field,
    cfg: &Cs2Config,
    mut iterate: impl FnMut(&Field) -> Field,
) -> Result<Field> {
    let mut cur = guess;
    let mut increment = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let next = iterate(&cur);
        if !next.is_finite() {
            break;
        }
        increment = next.sub(&cur).max_abs();
        cur = next;
        if increment < cfg.tol {
            return Ok(cur);
        }
    }
    Err(Error::PicardNonConvergence {
        iterations: cfg.max_iters,
        increment,
    })
}

/// One 2nd-CS step for Cahn-Hilliard. `forcing` is the source at `t_{n+1/2}`.
pub fn cs2_step_ch(
    sp: &Spectral,
    phi_n: &Field,
    phi_nm1: &Field,
    dt: f64,
    params: &ModelParams,
    forcing: Option<&Field>,
    cfg: &Cs2Config,
) -> Result<Field> {
    let grid = sp.grid().clone();
    let n = grid.len();
    let k2 = grid.k2();
    let ModelParams {
        lambda,
        epsilon_sq: eps2,
        ..
    } = *params;
    let stab = 0.75 * phi_n.data().iter().fold(0.0f64, |m, v| m.max(v * v));
    let explicit = phi_n.zip_map(phi_nm1, |a, b| 1.5 * a - 0.5 * b);

    let mut base = vec![ZERO; n];
    sp.forward_into(phi_n.data(), &mut base);
    let fc = forcing.map(|f| {
        let mut c = vec![ZERO; n];
        sp.forward_into(f.data(), &mut c);
        c
    });
    for idx in 0..n {
        let k4 = k2[idx] * k2[idx];
        base[idx] *= 1.0 - 0.5 * dt * lambda * eps2 * k4;
        if let Some(f) = &fc {
            base[idx] += f[idx] * dt;
        }
    }
    let denom: Vec<f64> = k2
        .iter()
        .map(|&k| 1.0 + dt * lambda * (0.5 * eps2 * k * k + stab * k))
        .collect();

    let guess = phi_n.zip_map(phi_nm1, |a, b| 2.0 * a - b);
    let mut work = vec![ZERO; n];
    picard(guess, cfg, |phi| {
        let lagged: Vec<f64> = (0..n)
            .map(|i| {
                let (pn, p) = (phi_n.data()[i], phi.data()[i]);
                let half = 0.5 * (pn + p);
                0.5 * (pn * pn + p * p) * half - stab * p - explicit.data()[i]
            })
            .collect();
        sp.forward_into(&lagged, &mut work);
        sp.truncate_if_dealiased(&mut work);
        for idx in 0..n {
            work[idx] = (base[idx] - work[idx] * (dt * lambda * k2[idx])) / denom[idx];
        }
        let mut out = Field::zeros(&grid);
        sp.inverse_real_into(&work, out.data_mut());
        out
    })
}

/// One 2nd-CS step for MBE. `forcing` is the source at `t_{n+1/2}`.
pub fn cs2_step_mbe(
    sp: &Spectral,
    phi_n: &Field,
    phi_nm1: &Field,
    dt: f64,
    params: &ModelParams,
    forcing: Option<&Field>,
    cfg: &Cs2Config,
) -> Result<Field> {
    let grid = sp.grid().clone();
    let n = grid.len();
    let k2 = grid.k2();
    let ModelParams {
        lambda,
        epsilon_sq: eps2,
        ..
    } = *params;
    let (gnx, gny) = sp.gradient(phi_n);
    let grad_n2 = gnx.zip_map(&gny, |a, b| a * a + b * b);
    let explicit = phi_n.zip_map(phi_nm1, |a, b| 1.5 * a - 0.5 * b);

    let mut base = vec![ZERO; n];
    sp.forward_into(phi_n.data(), &mut base);
    let mut ec = vec![ZERO; n];
    sp.forward_into(explicit.data(), &mut ec);
    let fc = forcing.map(|f| {
        let mut c = vec![ZERO; n];
        sp.forward_into(f.data(), &mut c);
        c
    });
    for idx in 0..n {
        let k4 = k2[idx] * k2[idx];
        base[idx] =
            base[idx] * (1.0 - 0.5 * dt * lambda * eps2 * k4) + ec[idx] * (dt * lambda * k2[idx]);
        if let Some(f) = &fc {
            base[idx] += f[idx] * dt;
        }
    }

    let guess = phi_n.zip_map(phi_nm1, |a, b| 2.0 * a - b);
    // The stabilization constant tracks the current slope magnitude.
    let stab_of = |phi: &Field| {
        let (gx, gy) = sp.gradient(phi);
        let m = (0..n)
            .map(|i| gx.data()[i].powi(2) + gy.data()[i].powi(2) + grad_n2.data()[i])
            .fold(0.0f64, f64::max);
        0.75 * m
    };
    let stab = stab_of(phi_n).max(stab_of(&guess));
    let denom: Vec<f64> = k2
        .iter()
        .map(|&k| 1.0 + dt * lambda * (0.5 * eps2 * k * k + stab * k))
        .collect();

    let mut pc = vec![ZERO; n];
    let mut nl = vec![ZERO; n];
    picard(guess, cfg, |phi| {
        let (gx, gy) = sp.gradient(phi);
        let mut fx = vec![0.0; n];
        let mut fy = vec![0.0; n];
        for i in 0..n {
            let psi = gx.data()[i].powi(2) + gy.data()[i].powi(2) + grad_n2.data()[i];
            fx[i] = 0.5 * psi * 0.5 * (gx.data()[i] + gnx.data()[i]);
            fy[i] = 0.5 * psi * 0.5 * (gy.data()[i] + gny.data()[i]);
        }
        // nl = coefficients of -1/2 div(Psi grad phi^{n+1/2})
        sp.divergence_coeffs(&fx, &fy, &mut nl);
        sp.truncate_if_dealiased(&mut nl);
        sp.forward_into(phi.data(), &mut pc);
        for idx in 0..n {
            let rhs =
                base[idx] + nl[idx] * (dt * lambda) + pc[idx] * (dt * lambda * stab * k2[idx]);
            pc[idx] = rhs / denom[idx];
        }
        let mut out = Field::zeros(&grid);
        sp.inverse_real_into(&pc, out.data_mut());
        out
    })
}

/// Dispatches on the model kind.
pub fn cs2_step(
    model: &GradientFlowModel,
    sp: &Spectral,
    phi_n: &Field,
    phi_nm1: &Field,
    dt: f64,
    forcing: Option<&Field>,
    cfg: &Cs2Config,
) -> Result<Field> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Precondition(format!(
            "time step must be > 0, got {dt}"
        )));
    }
    match model.kind() {
        ModelKind::CahnHilliard => {
            cs2_step_ch(sp, phi_n, phi_nm1, dt, model.params(), forcing, cfg)
        }
        ModelKind::Mbe => cs2_step_mbe(sp, phi_n, phi_nm1, dt, model.params(), forcing, cfg),
    }
}
