//! Gradient-flow models in energy-quadratized form.
//!
//! A model is the triple of a self-adjoint PSD linear operator `L`, a negative
//! semi-definite mobility `G` and a bulk map `g` whose square carries the
//! nonlinear energy. With the auxiliary variable `q = g[phi] - offset` the
//! energy becomes quadratic:
//!
//! ```text
//! F = 1/2 (phi, L phi) + ||q||^2 + energy_offset
//! ```
//!
//! and the flow reads `phi_t = G mu`, `q_t = dg/dphi phi_t + dg/dgrad(phi) . grad(phi_t)`
//! with `mu = L phi + 2 q dg/dphi - div(2 q dg/dgrad(phi))`.
//!
//! Two scalar instances are provided: Cahn-Hilliard (`L = -eps^2 Lap + gamma`,
//! `G = lambda Lap`, `q = (phi^2 - 1 - gamma)/2`) and molecular-beam epitaxy with
//! slope selection (`L = eps^2 Lap^2 - gamma Lap`, `G = -lambda`,
//! `q = (|grad phi|^2 - 1 - gamma)/2`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{inner, Field, Grid, Spectral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    CahnHilliard,
    Mbe,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CahnHilliard => "cahn_hilliard",
            ModelKind::Mbe => "mbe",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Mobility coefficient.
    pub lambda: f64,
    /// Square of the interface parameter; stored squared because the MBE
    /// literature quotes `eps^2` directly.
    pub epsilon_sq: f64,
    /// Stabilization constant.
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, epsilon: f64, gamma: f64) -> Self {
        Self {
            lambda,
            epsilon_sq: epsilon * epsilon,
            gamma,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_sq.sqrt()
    }

    fn validate(&self) -> Result<()> {
        let bad =
            |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda", format!("must be > 0, got {}", self.lambda));
        }
        if !(self.epsilon_sq.is_finite() && self.epsilon_sq > 0.0) {
            return bad(
                "epsilon",
                format!("must be > 0, got eps^2 = {}", self.epsilon_sq),
            );
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma", format!("must be >= 0, got {}", self.gamma));
        }
        Ok(())
    }
}

/// EQ state `(phi, q)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqState {
    pub phi: Field,
    pub q: Field,
    pub t: f64,
}

impl EqState {
    /// Builds the state with the consistent auxiliary variable.
    pub fn consistent(model: &GradientFlowModel, sp: &Spectral, phi: Field, t: f64) -> Self {
        let q = model.init_q(sp, &phi);
        Self { phi, q, t }
    }
}

/// Coefficients of the linearized nonlinear terms, frozen at one `phi*`.
///
/// Cahn-Hilliard keeps `phi*` itself, MBE keeps `grad phi*`.
#[derive(Debug, Clone)]
pub(crate) enum Frozen {
    Value(Vec<f64>),
    Gradient(Vec<f64>, Vec<f64>),
}

/// Spatial mean of the coupling `G N_i(l_j(.))` between two frozen stages,
/// used to build constant-coefficient preconditioners.
#[derive(Debug, Clone, Copy)]
pub(crate) enum MeanCoupling {
    /// `mean(phi*_i phi*_j)`
    Scalar(f64),
    /// `mean(grad phi*_i (x) grad phi*_j)` as `[xx, xy, yx, yy]`.
    Tensor([f64; 4]),
}

#[derive(Debug, Clone)]
pub struct GradientFlowModel {
    kind: ModelKind,
    params: ModelParams,
    grid: Arc<Grid>,
    l_sym: Vec<f64>,
    g_sym: Vec<f64>,
    energy_offset: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be > 0, got {epsilon}"),
        })
    }
}

pub fn make_cahn_hilliard(
    grid: &Arc<Grid>,
    lambda: f64,
    epsilon: f64,
    gamma: f64,
) -> Result<GradientFlowModel> {
    check_epsilon(epsilon)?;
    GradientFlowModel::new(
        ModelKind::CahnHilliard,
        grid,
        ModelParams::new(lambda, epsilon, gamma),
    )
}

pub fn make_mbe(
    grid: &Arc<Grid>,
    lambda: f64,
    epsilon: f64,
    gamma: f64,
) -> Result<GradientFlowModel> {
    check_epsilon(epsilon)?;
    GradientFlowModel::new(
        ModelKind::Mbe,
        grid,
        ModelParams::new(lambda, epsilon, gamma),
    )
}

impl GradientFlowModel {
    pub fn new(kind: ModelKind, grid: &Arc<Grid>, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let mut model = Self {
            kind,
            params,
            grid: grid.clone(),
            l_sym: Vec::new(),
            g_sym: Vec::new(),
            energy_offset: -(params.gamma * params.gamma + 2.0 * params.gamma) / 4.0 * grid.area(),
        };
        model.l_sym = grid.k2().iter().map(|&k2| model.l_symbol_k2(k2)).collect();
        model.g_sym = grid.k2().iter().map(|&k2| model.g_symbol_k2(k2)).collect();
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn energy_offset(&self) -> f64 {
        self.energy_offset
    }

    fn l_symbol_k2(&self, k2: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            ModelKind::CahnHilliard => p.epsilon_sq * k2 + p.gamma,
            ModelKind::Mbe => p.epsilon_sq * k2 * k2 + p.gamma * k2,
        }
    }

    fn g_symbol_k2(&self, k2: f64) -> f64 {
        match self.kind {
            ModelKind::CahnHilliard => -self.params.lambda * k2,
            ModelKind::Mbe => -self.params.lambda,
        }
    }

    /// Fourier symbol of `L` (nonnegative).
    pub fn l_symbol(&self, kx: f64, ky: f64) -> f64 {
        self.l_symbol_k2(kx * kx + ky * ky)
    }

    /// Fourier symbol of the mobility `G` (nonpositive).
    pub fn g_symbol(&self, kx: f64, ky: f64) -> f64 {
        self.g_symbol_k2(kx * kx + ky * ky)
    }

    /// `L` symbol per mode in coefficient layout.
    pub fn l_symbols(&self) -> &[f64] {
        &self.l_sym
    }

    pub fn g_symbols(&self) -> &[f64] {
        &self.g_sym
    }

    /// Consistent auxiliary variable for `phi`.
    pub fn init_q(&self, sp: &Spectral, phi: &Field) -> Field {
        let shift = 1.0 + self.params.gamma;
        match self.kind {
            ModelKind::CahnHilliard => phi.map(|v| 0.5 * (v * v - shift)),
            ModelKind::Mbe => {
                let (gx, gy) = sp.gradient(phi);
                gx.zip_map(&gy, |a, b| 0.5 * (a * a + b * b - shift))
            }
        }
    }

    pub(crate) fn freeze(&self, sp: &Spectral, phi_star: &Field) -> Frozen {
        match self.kind {
            ModelKind::CahnHilliard => Frozen::Value(phi_star.data().to_vec()),
            ModelKind::Mbe => {
                let (gx, gy) = sp.gradient(phi_star);
                Frozen::Gradient(gx.into_vec(), gy.into_vec())
            }
        }
    }

    /// Coefficients of `2 q dg/dphi - div(2 q dg/dgrad(phi))` at the frozen state.
    pub(crate) fn nonlinear_coeffs(
        &self,
        sp: &Spectral,
        frozen: &Frozen,
        q: &[f64],
        out: &mut [Complex64],
    ) {
        match frozen {
            Frozen::Value(ps) => {
                let prod: Vec<f64> = q.iter().zip(ps).map(|(q, p)| 2.0 * q * p).collect();
                sp.forward_into(&prod, out);
            }
            Frozen::Gradient(gx, gy) => {
                let fx: Vec<f64> = q.iter().zip(gx).map(|(q, g)| 2.0 * q * g).collect();
                let fy: Vec<f64> = q.iter().zip(gy).map(|(q, g)| 2.0 * q * g).collect();
                sp.divergence_coeffs(&fx, &fy, out);
                out.iter_mut().for_each(|c| *c = -*c);
            }
        }
        sp.truncate_if_dealiased(out);
    }

    /// `l = dg/dphi k + dg/dgrad(phi) . grad k` at the frozen state, given the
    /// coefficients of `k` (and its nodal values for the pointwise case).
    pub(crate) fn l_slope_frozen(
        &self,
        sp: &Spectral,
        frozen: &Frozen,
        k: &[f64],
        k_coeffs: &[Complex64],
        out: &mut [f64],
    ) {
        match frozen {
            Frozen::Value(ps) => {
                for ((o, k), p) in out.iter_mut().zip(k).zip(ps) {
                    *o = p * k;
                }
            }
            Frozen::Gradient(gx, gy) => {
                let n = k.len();
                let mut kx = vec![0.0; n];
                let mut ky = vec![0.0; n];
                sp.gradient_from_coeffs(k_coeffs, &mut kx, &mut ky);
                for idx in 0..n {
                    out[idx] = gx[idx] * kx[idx] + gy[idx] * ky[idx];
                }
            }
        }
        if sp.dealias() {
            let mut c = vec![Complex64::new(0.0, 0.0); out.len()];
            sp.forward_into(out, &mut c);
            sp.truncate_if_dealiased(&mut c);
            sp.inverse_real_into(&c, out);
        }
    }

    pub(crate) fn mean_coupling(&self, a: &Frozen, b: &Frozen) -> MeanCoupling {
        let mean = |u: &[f64], v: &[f64]| {
            u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / u.len() as f64
        };
        match (a, b) {
            (Frozen::Value(u), Frozen::Value(v)) => MeanCoupling::Scalar(mean(u, v)),
            (Frozen::Gradient(ax, ay), Frozen::Gradient(bx, by)) => {
                MeanCoupling::Tensor([mean(ax, bx), mean(ax, by), mean(ay, bx), mean(ay, by)])
            }
            _ => unreachable!("frozen stages of one model share a variant"),
        }
    }

    /// Symbol of the mean coupling `G N_i(l_j(.))` at mode `idx`.
    pub(crate) fn mean_coupling_symbol(&self, c: &MeanCoupling, idx: usize) -> f64 {
        let g = &self.grid;
        let weight = match *c {
            MeanCoupling::Scalar(m) => m,
            MeanCoupling::Tensor([xx, xy, yx, yy]) => {
                let (kx, ky) = (g.deriv_x()[idx], g.deriv_y()[idx]);
                kx * kx * xx + kx * ky * (xy + yx) + ky * ky * yy
            }
        };
        2.0 * weight * self.g_sym[idx]
    }

    /// Chemical potential `L phi + 2 q dg/dphi[phi*] - div(2 q dg/dgrad(phi)[phi*])`.
    pub fn chemical_potential(
        &self,
        sp: &Spectral,
        phi: &Field,
        q: &Field,
        phi_star: &Field,
    ) -> Field {
        let n = self.grid.len();
        let frozen = self.freeze(sp, phi_star);
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        self.nonlinear_coeffs(sp, &frozen, q.data(), &mut c);
        let mut cphi = vec![Complex64::new(0.0, 0.0); n];
        sp.forward_into(phi.data(), &mut cphi);
        for idx in 0..n {
            c[idx] += cphi[idx] * self.l_sym[idx];
        }
        let mut out = Field::zeros(&self.grid);
        sp.inverse_real_into(&c, out.data_mut());
        out
    }

    /// `G mu`.
    pub fn apply_mobility(&self, sp: &Spectral, mu: &Field) -> Field {
        match self.kind {
            ModelKind::CahnHilliard => sp.apply_mode_symbol(mu, &self.g_sym),
            ModelKind::Mbe => mu.map(|v| -self.params.lambda * v),
        }
    }

    /// Slope of `q` induced by the slope `k` of `phi`, with coefficients frozen at `phi*`.
    pub fn l_slope(&self, sp: &Spectral, phi_star: &Field, k: &Field) -> Field {
        let frozen = self.freeze(sp, phi_star);
        let mut kc = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        if matches!(frozen, Frozen::Gradient(..)) {
            sp.forward_into(k.data(), &mut kc);
        }
        let mut out = Field::zeros(&self.grid);
        self.l_slope_frozen(sp, &frozen, k.data(), &kc, out.data_mut());
        out
    }

    /// `(phi, L phi)`, evaluated spectrally.
    pub fn l_quadratic_form(&self, sp: &Spectral, phi: &Field) -> f64 {
        let c = sp.forward(phi);
        self.grid.area()
            * c.coeffs()
                .iter()
                .zip(&self.l_sym)
                .map(|(c, l)| c.norm_sqr() * l)
                .sum::<f64>()
    }

    /// Original (non-quadratized) free energy.
    pub fn energy_original(&self, sp: &Spectral, phi: &Field) -> f64 {
        let c = sp.forward(phi);
        let area = self.grid.area();
        let eps2 = self.params.epsilon_sq;
        match self.kind {
            ModelKind::CahnHilliard => {
                let grad2: f64 = c
                    .coeffs()
                    .iter()
                    .zip(self.grid.k2())
                    .map(|(c, k2)| c.norm_sqr() * k2)
                    .sum::<f64>()
                    * area;
                let well = phi.map(|v| v * v - 1.0);
                0.5 * eps2 * grad2 + 0.25 * inner(&well, &well)
            }
            ModelKind::Mbe => {
                let lap2: f64 = c
                    .coeffs()
                    .iter()
                    .zip(self.grid.k2())
                    .map(|(c, k2)| c.norm_sqr() * k2 * k2)
                    .sum::<f64>()
                    * area;
                let (gx, gy) = sp.gradient(phi);
                let slope = gx.zip_map(&gy, |a, b| a * a + b * b - 1.0);
                0.5 * eps2 * lap2 + 0.25 * inner(&slope, &slope)
            }
        }
    }

    /// Quadratized energy `1/2 (phi, L phi) + ||q||^2 + offset`.
    pub fn energy_quadratized(&self, sp: &Spectral, s: &EqState) -> f64 {
        0.5 * self.l_quadratic_form(sp, &s.phi) + inner(&s.q, &s.q) + self.energy_offset
    }

    fn require_mms_domain(&self) -> Result<()> {
        let two_pi = 2.0 * PI;
        let close = |l: f64| (l - two_pi).abs() <= 1e-12 * two_pi;
        if close(self.grid.lx()) && close(self.grid.ly()) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "manufactured solution needs the [0, 2pi]^2 domain, got [0, {}] x [0, {}]",
                self.grid.lx(),
                self.grid.ly()
            )))
        }
    }

    /// Manufactured solution `sin x sin y cos t`.
    pub fn mms_exact(&self, t: f64) -> Field {
        let ct = t.cos();
        Field::from_fn(&self.grid, |x, y| x.sin() * y.sin() * ct)
    }

    /// Forcing `f = d/dt phi_e - RHS(phi_e)` that makes `sin x sin y cos t`
    /// an exact solution of the forced equation `phi_t = RHS(phi) + f`.
    pub fn mms_forcing(&self, t: f64) -> Result<Field> {
        self.require_mms_domain()?;
        let ModelParams {
            lambda,
            epsilon_sq: eps2,
            ..
        } = self.params;
        let (st, ct) = t.sin_cos();
        let ct3 = ct * ct * ct;
        let field = match self.kind {
            ModelKind::CahnHilliard => Field::from_fn(&self.grid, move |x, y| {
                let (sx, sy) = (x.sin(), y.sin());
                let s = sx * sy;
                let (sx3, sy3) = (sx * sx * sx, sy * sy * sy);
                // Lap(s^3) for s = sin x sin y
                let lap_s3 = 6.0 * sx * sy3 + 6.0 * sx3 * sy - 18.0 * sx3 * sy3;
                -s * st + 2.0 * lambda * (2.0 * eps2 - 1.0) * s * ct - lambda * ct3 * lap_s3
            }),
            ModelKind::Mbe => Field::from_fn(&self.grid, move |x, y| {
                let (sx, cx) = x.sin_cos();
                let (sy, cy) = y.sin_cos();
                let s = sx * sy;
                let p = cx * cx * sy * sy + sx * sx * cy * cy;
                // div(|grad s|^2 grad s)
                let d = (2.0 * x).sin() * (2.0 * y).cos() * cx * sy
                    + (2.0 * x).cos() * (2.0 * y).sin() * sx * cy
                    - 2.0 * p * s;
                -s * st + lambda * (4.0 * eps2 * s * ct - 2.0 * s * ct - ct3 * d)
            }),
        };
        Ok(field)
    }

    /// Right-hand side of the original (unforced) PDE, evaluated pseudo-spectrally.
    pub fn pde_rhs(&self, sp: &Spectral, phi: &Field) -> Field {
        let ModelParams {
            lambda,
            epsilon_sq: eps2,
            ..
        } = self.params;
        match self.kind {
            ModelKind::CahnHilliard => {
                let lap = sp.laplacian(phi);
                let mu = phi.zip_map(&lap, |p, l| -eps2 * l + p * p * p - p);
                let mut out = sp.laplacian(&mu);
                out.scale(lambda);
                out
            }
            ModelKind::Mbe => {
                let bih = sp.laplacian(&sp.laplacian(phi));
                let (gx, gy) = sp.gradient(phi);
                let w = gx.zip_map(&gy, |a, b| a * a + b * b - 1.0);
                let div = sp.divergence(&w.mul(&gx), &w.mul(&gy));
                bih.zip_map(&div, |b, d| -lambda * (eps2 * b - d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_field(grid: &Arc<Grid>, seed: u64, amp: f64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, f64, f64, f64)> = (0..6)
            .map(|_| {
                (
                    amp * rng.gen_range(-1.0..1.0),
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0..4) as f64,
                    rng.gen_range(0.0..6.3),
                )
            })
            .collect();
        let (kx0, ky0) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
        Field::from_fn(grid, |x, y| {
            terms
                .iter()
                .map(|&(a, mx, my, ph)| a * (mx * kx0 * x + my * ky0 * y + ph).sin())
                .sum()
        })
    }

    fn random_field(grid: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_vec(
            grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn both(grid: &Arc<Grid>) -> [GradientFlowModel; 2] {
        [
            make_cahn_hilliard(grid, 0.01, 1.0, 1.0).unwrap(),
            make_mbe(grid, 0.5, 0.3, 1.0).unwrap(),
        ]
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = Grid::square_2pi(8).unwrap();
        assert!(make_cahn_hilliard(&g, 0.0, 1.0, 1.0).is_err());
        assert!(make_cahn_hilliard(&g, 1.0, -1.0, 1.0).is_err());
        assert!(make_mbe(&g, 1.0, 1.0, -0.5).is_err());
    }

    #[test]
    fn symbols() {
        let g = Grid::square_2pi(8).unwrap();
        let ch = make_cahn_hilliard(&g, 0.01, 1.0, 1.0).unwrap();
        assert_eq!(ch.l_symbol(1.0, 0.0), 2.0);
        assert_eq!(ch.g_symbol(0.0, 0.0), 0.0);
        assert!((ch.g_symbol(1.0, 1.0) + 0.02).abs() < 1e-16);
        let mbe = GradientFlowModel::new(
            ModelKind::Mbe,
            &g,
            ModelParams {
                lambda: 1.0,
                epsilon_sq: 0.1,
                gamma: 1.0,
            },
        )
        .unwrap();
        assert!(g.k2().iter().all(|&k2| mbe.g_symbol_k2(k2) == -1.0));
        assert!((mbe.l_symbol(1.0, 1.0) - 2.4).abs() < 1e-15);
        assert_eq!(mbe.l_symbol(0.0, 0.0), 0.0);
        for m in [&ch, &mbe] {
            assert!(m.l_symbols().iter().all(|&l| l >= 0.0));
            assert!(m.g_symbols().iter().all(|&g| g <= 0.0));
        }
        assert!((ch.energy_offset() + 0.75 * 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn consistent_q() {
        let g = Grid::square_2pi(8).unwrap();
        let sp = Spectral::new(&g);
        let [ch, mbe] = both(&g);
        let q = ch.init_q(&sp, &Field::zeros(&g));
        assert!(q.data().iter().all(|&v| v == -1.0));
        let q = ch.init_q(&sp, &Field::constant(&g, 1.0));
        assert!(q.data().iter().all(|&v| v == -0.5));
        let q = mbe.init_q(&sp, &Field::constant(&g, 3.7));
        assert!(q.data().iter().all(|&v| (v + 1.0).abs() < 1e-15));
    }

    #[test]
    fn chemical_potential_examples() {
        let g = Grid::square_2pi(8).unwrap();
        let sp = Spectral::new(&g);
        let [ch, mbe] = both(&g);
        let c = Field::constant(&g, 2.0);
        let mu = ch.chemical_potential(&sp, &c, &ch.init_q(&sp, &c), &c);
        assert!(mu.data().iter().all(|&v| (v - 6.0).abs() < 1e-13));
        let c = Field::constant(&g, 0.4);
        let mu = mbe.chemical_potential(&sp, &c, &Field::constant(&g, -1.0), &c);
        assert!(mu.max_abs() < 1e-14);
    }

    #[test]
    fn chemical_potential_is_linear() {
        let g = Grid::new(16, 16, 3.0, 2.0).unwrap();
        let sp = Spectral::new(&g);
        for m in both(&g) {
            let ps = smooth_field(&g, 1, 1.0);
            let (p1, p2) = (random_field(&g, 2), random_field(&g, 3));
            let (q1, q2) = (random_field(&g, 4), random_field(&g, 5));
            let lhs = m.chemical_potential(&sp, &p1.add(&p2), &q1.add(&q2), &ps);
            let rhs = m
                .chemical_potential(&sp, &p1, &q1, &ps)
                .add(&m.chemical_potential(&sp, &p2, &q2, &ps));
            let scale = lhs.max_abs().max(1.0);
            assert!(lhs.sub(&rhs).max_abs() < 1e-12 * scale, "{}", m.kind());
        }
    }

    #[test]
    fn mobility() {
        let g = Grid::new(16, 16, 3.0, 2.0).unwrap();
        let sp = Spectral::new(&g);
        let [ch, _] = both(&g);
        assert!(ch.apply_mobility(&sp, &Field::constant(&g, 4.0)).max_abs() < 1e-15);
        let mbe = make_mbe(&g, 1.0, 1.0, 1.0).unwrap();
        let mu = random_field(&g, 9);
        assert_eq!(mbe.apply_mobility(&sp, &mu), mu.map(|v| -v));
        for m in [ch, mbe] {
            for seed in 0..100 {
                let v = random_field(&g, 100 + seed);
                let d = inner(&v, &m.apply_mobility(&sp, &v));
                assert!(d <= 1e-12 * inner(&v, &v), "{d}");
            }
        }
    }

    #[test]
    fn l_operator_is_psd() {
        let g = Grid::new(16, 16, 3.0, 2.0).unwrap();
        let sp = Spectral::new(&g);
        for m in both(&g) {
            for seed in 0..20 {
                let v = random_field(&g, seed);
                assert!(m.l_quadratic_form(&sp, &v) >= -1e-12 * inner(&v, &v));
            }
        }
    }

    #[test]
    fn l_slope_examples() {
        let g = Grid::square_2pi(8).unwrap();
        let sp = Spectral::new(&g);
        let [ch, mbe] = both(&g);
        let k = random_field(&g, 1);
        assert_eq!(ch.l_slope(&sp, &Field::zeros(&g), &k).max_abs(), 0.0);
        assert_eq!(ch.l_slope(&sp, &Field::constant(&g, 1.0), &k), k);
        assert!(mbe.l_slope(&sp, &Field::constant(&g, 2.0), &k).max_abs() < 1e-14);
    }

    #[test]
    fn energies_of_constants() {
        let g = Grid::square_2pi(8).unwrap();
        let sp = Spectral::new(&g);
        let [ch, mbe] = both(&g);
        let pi2 = PI * PI;
        assert!((ch.energy_original(&sp, &Field::zeros(&g)) - pi2).abs() < 1e-12);
        assert!(ch.energy_original(&sp, &Field::constant(&g, 1.0)).abs() < 1e-14);
        assert!((mbe.energy_original(&sp, &Field::zeros(&g)) - pi2).abs() < 1e-12);
        let zero = EqState::consistent(&ch, &sp, Field::zeros(&g), 0.0);
        assert!((ch.energy_quadratized(&sp, &zero) - pi2).abs() < 1e-12);
        let one = EqState::consistent(&ch, &sp, Field::constant(&g, 1.0), 0.0);
        assert!(ch.energy_quadratized(&sp, &one).abs() < 1e-12);
    }

    #[test]
    fn quadratized_energy_matches_original() {
        let g = Grid::new(32, 32, 2.0 * PI, 4.0).unwrap();
        let sp = Spectral::new(&g);
        for m in both(&g) {
            for seed in 0..20 {
                let phi = smooth_field(&g, seed, 0.8);
                let s = EqState::consistent(&m, &sp, phi.clone(), 0.0);
                let e0 = m.energy_original(&sp, &phi);
                let e1 = m.energy_quadratized(&sp, &s);
                assert!(
                    (e0 - e1).abs() < 1e-11 * e0.abs().max(1.0),
                    "{} {e0} {e1}",
                    m.kind()
                );
            }
        }
    }

    #[test]
    fn mms_forcing_closes_the_equation() {
        let g = Grid::square_2pi(128).unwrap();
        let sp = Spectral::new(&g);
        let mms_models = [
            make_cahn_hilliard(&g, 0.01, 1.0, 1.0).unwrap(),
            make_mbe(&g, 0.01, 1.0, 1.0).unwrap(),
        ];
        for m in mms_models {
            for t in [0.0, 0.3, 1.0, 2.2] {
                let f = m.mms_forcing(t).unwrap();
                let dt_exact = {
                    let st = t.sin();
                    Field::from_fn(&g, |x, y| -x.sin() * y.sin() * st)
                };
                let resid = dt_exact.sub(&m.pde_rhs(&sp, &m.mms_exact(t))).sub(&f);
                assert!(
                    resid.max_abs() < 1e-10,
                    "{} t={t}: {}",
                    m.kind(),
                    resid.max_abs()
                );
            }
            let f0 = m.mms_forcing(0.0).unwrap();
            assert!(inner(&f0, &Field::constant(&g, 1.0)).abs() < 1e-12);
        }
        let ch = make_cahn_hilliard(&g, 0.01, 1.0, 1.0).unwrap();
        let f = ch.mms_forcing(PI / 2.0).unwrap();
        let (i, j) = (32, 32); // node (pi/2, pi/2)
        assert!((f.at(i, j) + 1.0).abs() < 1e-12);
        let off = Grid::new(8, 8, 1.0, 1.0).unwrap();
        assert!(make_mbe(&off, 1.0, 1.0, 1.0)
            .unwrap()
            .mms_forcing(0.0)
            .is_err());
    }

    #[test]
    fn forcing_oracle_by_time_differences() {
        // Independent of the closed-form time derivative: central differences in t.
        let g = Grid::square_2pi(32).unwrap();
        let sp = Spectral::new(&g);
        for m in both(&g) {
            let (t, h) = (0.7, 1e-5);
            let dphi = {
                let mut d = m.mms_exact(t + h).sub(&m.mms_exact(t - h));
                d.scale(0.5 / h);
                d
            };
            let f = dphi.sub(&m.pde_rhs(&sp, &m.mms_exact(t)));
            assert!(f.sub(&m.mms_forcing(t).unwrap()).max_abs() < 1e-9);
        }
    }

    #[test]
    fn explicit_euler_dissipates_quadratized_energy() {
        let g = Grid::new(32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        let sp = Spectral::new(&g);
        for m in both(&g) {
            let phi = smooth_field(&g, 3, 0.6);
            let s0 = EqState::consistent(&m, &sp, phi, 0.0);
            let mu = m.chemical_potential(&sp, &s0.phi, &s0.q, &s0.phi);
            let k = m.apply_mobility(&sp, &mu);
            let l = m.l_slope(&sp, &s0.phi, &k);
            let dt = 1e-8;
            let mut s1 = s0.clone();
            s1.phi.axpy(dt, &k);
            s1.q.axpy(dt, &l);
            let (e0, e1) = (
                m.energy_quadratized(&sp, &s0),
                m.energy_quadratized(&sp, &s1),
            );
            assert!(e1 <= e0 + 1e-10, "{} {e0} {e1}", m.kind());
        }
    }
}
