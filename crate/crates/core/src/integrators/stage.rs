//! Stage-system solves.
//!
//! The stage slopes `k` of a block `B` of stages satisfy
//!
//! ```text
//! k_a - dt sum_{b in B} a_ab [G L k_b + G N_a(l_b(k_b))] = G (L Phi~_a + N_a(Q~_a)) + f_a
//! ```
//!
//! with `Phi~`, `Q~` carrying the contributions of stages solved earlier. Writing
//! the operator as `P + R`, with `P` its constant-coefficient part (per Fourier
//! mode an `|B| x |B|` matrix built from `G L` and the spatial mean of the
//! frozen coupling) and `R` the remaining coefficient fluctuation, the system
//! solved is the right-preconditioned `(I + R P^-1) y = rhs`, `k = P^-1 y`.
//! The stiff `G L` part cancels exactly in `R`.
//!
//! A block of one stage (every stage of a diagonally implicit tableau) is
//! self-adjoint and positive definite in the inner product weighted by the
//! inverse mobility symbol, and is solved by preconditioned CG.
//!
//! Coupled blocks use GMRES. There `R P^-1` still carries the mobility symbol,
//! which makes it strongly non-normal, so GMRES runs on the system rescaled in
//! Fourier space by `W = max(-g, 1)`, inside an iterative-refinement loop that
//! measures the residual of the unscaled system.
//!
//! Either way convergence is declared on the residual of the unscaled system.

use rustfft::num_complex::Complex64;

use super::gmres::{gmres, GmresConfig};
use super::{Leqrk, StageRecord, StepStats};
use crate::error::{Error, Result};
use crate::models::{EqState, Frozen};
use crate::spectral::Field;
use crate::tableau::TableauKind;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// LU factors (partial pivoting) of one small dense matrix per Fourier mode.
pub(crate) struct ModeLu {
    s: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl ModeLu {
    /// `fill(idx, m)` writes the row-major `s x s` matrix of mode `idx`.
    pub(crate) fn factor(modes: usize, s: usize, mut fill: impl FnMut(usize, &mut [f64])) -> Self {
        let mut lu = vec![0.0; modes * s * s];
        let mut piv = vec![0; modes * s];
        for idx in 0..modes {
            let m = &mut lu[idx * s * s..(idx + 1) * s * s];
            fill(idx, m);
            let p = &mut piv[idx * s..(idx + 1) * s];
            for col in 0..s {
                let mut best = col;
                for row in col + 1..s {
                    if m[row * s + col].abs() > m[best * s + col].abs() {
                        best = row;
                    }
                }
                p[col] = best;
                if best != col {
                    for c in 0..s {
                        m.swap(col * s + c, best * s + c);
                    }
                }
                let d = m[col * s + col];
                for row in col + 1..s {
                    let f = m[row * s + col] / d;
                    m[row * s + col] = f;
                    for c in col + 1..s {
                        m[row * s + c] -= f * m[col * s + c];
                    }
                }
            }
        }
        Self { s, lu, piv }
    }

    pub(crate) fn solve(&self, idx: usize, rhs: &mut [Complex64]) {
        let s = self.s;
        let m = &self.lu[idx * s * s..(idx + 1) * s * s];
        let p = &self.piv[idx * s..(idx + 1) * s];
        for col in 0..s {
            rhs.swap(col, p[col]);
        }
        for row in 1..s {
            let mut acc = rhs[row];
            for c in 0..row {
                acc -= rhs[c] * m[row * s + c];
            }
            rhs[row] = acc;
        }
        for row in (0..s).rev() {
            let mut acc = rhs[row];
            for c in row + 1..s {
                acc -= rhs[c] * m[row * s + c];
            }
            rhs[row] = acc / m[row * s + row];
        }
    }

    /// Solves every mode of the stacked coefficient vectors in place.
    pub(crate) fn solve_all(&self, stacked: &mut [Vec<Complex64>]) {
        let modes = stacked.first().map_or(0, |v| v.len());
        let mut buf = vec![ZERO; self.s];
        for idx in 0..modes {
            for (b, v) in buf.iter_mut().zip(stacked.iter()) {
                *b = v[idx];
            }
            self.solve(idx, &mut buf);
            for (b, v) in buf.iter().zip(stacked.iter_mut()) {
                v[idx] = *b;
            }
        }
    }
}

/// Preconditioned CG for one stage in Fourier coefficients. `apply` is
/// `A = P + R`, self-adjoint and positive definite in the inner product
/// weighted by `1 / (-g)` on modes with a nonzero mobility symbol `g`; on the
/// other modes it is the identity. `P` is diagonal with symbol `p_sym`.
/// Passes restart from the true residual until it meets `rel_tol`. Returns
/// the solution, iterations used and the final relative residual.
fn pcg(
    mut apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    p_sym: &[f64],
    g: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> Result<(Vec<Complex64>, usize, f64)> {
    let cnorm = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let wdot = |u: &[Complex64], v: &[Complex64]| -> f64 {
        u.iter()
            .zip(v)
            .zip(g)
            .filter(|(_, gv)| **gv < 0.0)
            .map(|((u, v), gv)| (u.conj() * v).re / -gv)
            .sum()
    };
    let precond = |r: &[Complex64]| -> Vec<Complex64> {
        r.iter().zip(p_sym).map(|(r, p)| r / p).collect()
    };
    let mut x = precond(b);
    let b_norm = cnorm(b);
    if b_norm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let target = rel_tol * b_norm;
    let mut used = 0;
    let mut best = f64::INFINITY;
    loop {
        let ax = apply(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let r_norm = cnorm(&r);
        if r_norm <= target {
            return Ok((x, used, r_norm / b_norm));
        }
        if used >= max_iters || !r_norm.is_finite() || !(r_norm < best) {
            return Err(Error::KrylovNonConvergence {
                iterations: used,
                residual: r_norm / b_norm,
            });
        }
        best = r_norm;
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rho = wdot(&r, &z);
        while used < max_iters {
            let ap = apply(&p);
            used += 1;
            let alpha = rho / wdot(&p, &ap);
            if !alpha.is_finite() {
                break;
            }
            for idx in 0..x.len() {
                x[idx] += p[idx] * alpha;
                r[idx] -= ap[idx] * alpha;
            }
            // The recurrence residual drifts from the true one; aim below the
            // target and let the outer loop confirm.
            if cnorm(&r) <= 0.5 * target {
                break;
            }
            z = precond(&r);
            let rho_next = wdot(&r, &z);
            let beta = rho_next / rho;
            rho = rho_next;
            for (pv, zv) in p.iter_mut().zip(&z) {
                *pv = zv + *pv * beta;
            }
        }
    }
}

impl Leqrk {
    fn forcing_at_stages(&self, t: f64, dt: f64) -> Result<Vec<Option<Field>>> {
        self.tableau
            .c()
            .iter()
            .map(|&ci| self.forcing.eval(&self.model, t + ci * dt))
            .collect()
    }

    fn coeffs(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c = vec![ZERO; f.len()];
        self.sp.forward_into(f, &mut c);
        c
    }

    fn nodal(&self, c: &[Complex64]) -> Field {
        let mut out = Field::zeros(self.model.grid());
        self.sp.inverse_real_into(c, out.data_mut());
        out
    }

    fn slope_of(&self, frozen: &Frozen, k: &[f64], kc: &[Complex64]) -> Field {
        let mut out = Field::zeros(self.model.grid());
        self.model
            .l_slope_frozen(&self.sp, frozen, k, kc, out.data_mut());
        out
    }

    /// Solves the linear stage system with the nonlinear coefficients frozen at `phi_star`.
    pub fn solve_stage_system(
        &self,
        state: &EqState,
        phi_star: Vec<Field>,
        dt: f64,
    ) -> Result<StageRecord> {
        let s = self.tableau.stages();
        assert_eq!(phi_star.len(), s, "one frozen value per stage");
        let n = self.model.grid().len();
        let g = self.model.g_symbols();
        let lsym = self.model.l_symbols();
        let a = |i: usize, j: usize| self.tableau.a(i, j);
        let frozen: Vec<Frozen> = phi_star
            .iter()
            .map(|p| self.model.freeze(&self.sp, p))
            .collect();
        let forcing = self.forcing_at_stages(state.t, dt)?;
        let blocks: Vec<Vec<usize>> = match self.tableau.kind() {
            TableauKind::DiagonallyImplicit => (0..s).map(|i| vec![i]).collect(),
            TableauKind::FullyImplicit => vec![(0..s).collect()],
        };
        let gcfg = GmresConfig {
            rel_tol: self.cfg.krylov_rel_tol,
            max_iters: self.cfg.krylov_max_iters,
            restart: self.cfg.krylov_restart,
        };

        let mut k = vec![Field::zeros(self.model.grid()); s];
        let mut l = vec![Field::zeros(self.model.grid()); s];
        let mut solved: Vec<usize> = Vec::with_capacity(s);
        let mut stats = StepStats::default();

        for block in &blocks {
            let nb = block.len();
            // Right-hand side with the already-solved stages folded in.
            let mut rhs = vec![0.0; nb * n];
            for (p, &i) in block.iter().enumerate() {
                let mut phi_t = state.phi.clone();
                let mut q_t = state.q.clone();
                for &j in &solved {
                    phi_t.axpy(dt * a(i, j), &k[j]);
                    q_t.axpy(dt * a(i, j), &l[j]);
                }
                let mut c = vec![ZERO; n];
                self.model
                    .nonlinear_coeffs(&self.sp, &frozen[i], q_t.data(), &mut c);
                let pc = self.coeffs(phi_t.data());
                for idx in 0..n {
                    c[idx] = (c[idx] + pc[idx] * lsym[idx]) * g[idx];
                }
                let out = &mut rhs[p * n..(p + 1) * n];
                self.sp.inverse_real_into(&c, out);
                if let Some(f) = &forcing[i] {
                    for (o, v) in out.iter_mut().zip(f.data()) {
                        *o += v;
                    }
                }
            }

            let coupling: Vec<Vec<_>> = block
                .iter()
                .map(|&i| {
                    block
                        .iter()
                        .map(|&j| self.model.mean_coupling(&frozen[i], &frozen[j]))
                        .collect()
                })
                .collect();
            let precond = ModeLu::factor(n, nb, |idx, m| {
                for p in 0..nb {
                    for r in 0..nb {
                        let cbar = self.model.mean_coupling_symbol(&coupling[p][r], idx);
                        let delta = if p == r { 1.0 } else { 0.0 };
                        m[p * nb + r] =
                            delta - dt * a(block[p], block[r]) * (g[idx] * lsym[idx] + cbar);
                    }
                }
            });

            // Krylov variables are scaled by the mobility symbol, y = W y~, which
            // strips the (strongly non-normal) mobility factor out of R P^-1.
            let w: Vec<f64> = g
                .iter()
                .map(|&gv| if gv < 0.0 { -gv } else { 1.0 })
                .collect();

            // Spectral coefficients of the block stacked in `y` (times `scale`).
            let to_coeffs = |y: &[f64], scale: Option<&[f64]>| -> Vec<Vec<Complex64>> {
                (0..nb)
                    .map(|p| {
                        let mut c = self.coeffs(&y[p * n..(p + 1) * n]);
                        if let Some(sc) = scale {
                            c.iter_mut().zip(sc).for_each(|(c, s)| *c *= *s);
                        }
                        c
                    })
                    .collect()
            };
            // R z in coefficient space given the coefficients of z.
            let fluctuation = |zc: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> {
                let lz: Vec<Field> = (0..nb)
                    .map(|r| {
                        let zv = self.nodal(&zc[r]);
                        self.slope_of(&frozen[block[r]], zv.data(), &zc[r])
                    })
                    .collect();
                (0..nb)
                    .map(|p| {
                        let i = block[p];
                        let mut q = Field::zeros(self.model.grid());
                        for r in 0..nb {
                            q.axpy(a(i, block[r]), &lz[r]);
                        }
                        let mut c = vec![ZERO; n];
                        self.model
                            .nonlinear_coeffs(&self.sp, &frozen[i], q.data(), &mut c);
                        for idx in 0..n {
                            let mut mean_part = ZERO;
                            for r in 0..nb {
                                let cbar = self.model.mean_coupling_symbol(&coupling[p][r], idx);
                                mean_part += zc[r][idx] * (a(i, block[r]) * cbar);
                            }
                            c[idx] = (mean_part - c[idx] * g[idx]) * dt;
                        }
                        c
                    })
                    .collect()
            };
            let scaled_op = |yt: &[f64], out: &mut [f64]| {
                let mut zc = to_coeffs(yt, Some(&w));
                precond.solve_all(&mut zc);
                let rc = fluctuation(&zc);
                for p in 0..nb {
                    let c: Vec<Complex64> = rc[p].iter().zip(&w).map(|(c, wv)| c / wv).collect();
                    let o = &mut out[p * n..(p + 1) * n];
                    self.sp.inverse_real_into(&c, o);
                    for (ov, yv) in o.iter_mut().zip(&yt[p * n..(p + 1) * n]) {
                        *ov += yv;
                    }
                }
            };
            // Residual b - (I + R P^-1) y of the unscaled system, and P^-1 y.
            let residual = |y: &[f64]| -> (Vec<f64>, Vec<Vec<Complex64>>) {
                let mut zc = to_coeffs(y, None);
                precond.solve_all(&mut zc);
                let rc = fluctuation(&zc);
                let mut r = rhs.clone();
                for p in 0..nb {
                    let ry = self.nodal(&rc[p]);
                    for ((rv, yv), tv) in r[p * n..(p + 1) * n]
                        .iter_mut()
                        .zip(&y[p * n..(p + 1) * n])
                        .zip(ry.data())
                    {
                        *rv -= yv + tv;
                    }
                }
                (r, zc)
            };
            let unscale = |yt: &[f64]| -> Vec<f64> {
                let c = to_coeffs(yt, Some(&w));
                let mut y = vec![0.0; nb * n];
                for p in 0..nb {
                    self.sp.inverse_real_into(&c[p], &mut y[p * n..(p + 1) * n]);
                }
                y
            };
            let scale_down = |v: &[f64]| -> Vec<f64> {
                let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
                let c = to_coeffs(v, Some(&inv));
                let mut out = vec![0.0; nb * n];
                for p in 0..nb {
                    self.sp
                        .inverse_real_into(&c[p], &mut out[p * n..(p + 1) * n]);
                }
                out
            };

            let b_norm = norm(&rhs);
            let target = self.cfg.krylov_rel_tol * b_norm;
            let (kc, used, r_norm) = if nb == 1 {
                // A single stage is self-adjoint in the mobility-weighted inner
                // product, so CG replaces GMRES.
                let i = block[0];
                let p_sym: Vec<f64> = (0..n)
                    .map(|idx| {
                        let cbar = self.model.mean_coupling_symbol(&coupling[0][0], idx);
                        1.0 - dt * a(i, i) * (g[idx] * lsym[idx] + cbar)
                    })
                    .collect();
                let apply = |zc: &[Complex64]| -> Vec<Complex64> {
                    let mut out = fluctuation(&[zc.to_vec()]).pop().expect("one stage");
                    for ((o, z), p) in out.iter_mut().zip(zc).zip(&p_sym) {
                        *o += z * p;
                    }
                    out
                };
                let (kc, used, rel) = pcg(
                    apply,
                    &self.coeffs(&rhs),
                    &p_sym,
                    g,
                    self.cfg.krylov_rel_tol,
                    self.cfg.krylov_max_iters,
                )?;
                (vec![kc], used, rel * b_norm)
            } else {
                // Iterative refinement on the unscaled residual around GMRES on
                // the scaled system.
                let mut y = rhs.clone();
                let mut used = 0;
                let (mut r, mut kc) = residual(&y);
                let mut r_norm = norm(&r);
                while r_norm > target {
                    let remaining = self.cfg.krylov_max_iters.saturating_sub(used);
                    if remaining == 0 || !r_norm.is_finite() {
                        return Err(Error::KrylovNonConvergence {
                            iterations: used,
                            residual: r_norm / b_norm,
                        });
                    }
                    let rt = scale_down(&r);
                    let mut dt_y = rt.clone();
                    // Only ask for the reduction the outer target still needs.
                    let cfg = GmresConfig {
                        max_iters: remaining,
                        rel_tol: (0.5 * target / r_norm).clamp(1e-14, 0.5),
                        ..gcfg
                    };
                    match gmres(scaled_op, &rt, &mut dt_y, &cfg) {
                        Ok(gs) => used += gs.iterations.max(1),
                        Err(Error::KrylovNonConvergence { iterations, .. }) => {
                            used += iterations.max(1)
                        }
                        Err(e) => return Err(e),
                    }
                    let dy = unscale(&dt_y);
                    y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
                    let (r2, kc2) = residual(&y);
                    let r2_norm = norm(&r2);
                    if !(r2_norm < r_norm) && used >= self.cfg.krylov_max_iters {
                        r_norm = r2_norm;
                        break;
                    }
                    r = r2;
                    kc = kc2;
                    r_norm = r2_norm;
                }
                if r_norm > target {
                    return Err(Error::KrylovNonConvergence {
                        iterations: used,
                        residual: r_norm / b_norm,
                    });
                }
                (kc, used, r_norm)
            };
            stats.krylov_iterations += used;
            stats.krylov_residual =
                stats
                    .krylov_residual
                    .max(if b_norm > 0.0 { r_norm / b_norm } else { 0.0 });

            for (p, &i) in block.iter().enumerate() {
                let kv = self.nodal(&kc[p]);
                l[i] = self.slope_of(&frozen[i], kv.data(), &kc[p]);
                k[i] = kv;
                solved.push(i);
            }
        }

        let mut phi_stages = Vec::with_capacity(s);
        let mut q_stages = Vec::with_capacity(s);
        for i in 0..s {
            let mut phi = state.phi.clone();
            let mut q = state.q.clone();
            for j in 0..s {
                if a(i, j) != 0.0 {
                    phi.axpy(dt * a(i, j), &k[j]);
                    q.axpy(dt * a(i, j), &l[j]);
                }
            }
            phi_stages.push(phi);
            q_stages.push(q);
        }
        Ok(StageRecord {
            phi_stages,
            q_stages,
            k,
            l,
            phi_star,
            stats,
        })
    }

    /// Prediction sweeps: each one is a constant-coefficient per-mode solve
    /// with the nonlinear terms lagged at the previous sweep. Returns the
    /// predicted stage values, the sweeps performed and the last increment.
    pub(crate) fn predict(
        &self,
        state: &EqState,
        mut phi_m: Vec<Field>,
        mut q_m: Vec<Field>,
        dt: f64,
        sweeps: usize,
    ) -> Result<(Vec<Field>, usize, f64)> {
        if sweeps == 0 {
            return Ok((phi_m, 0, 0.0));
        }
        let s = self.tableau.stages();
        let n = self.model.grid().len();
        let g = self.model.g_symbols();
        let lsym = self.model.l_symbols();
        let a = |i: usize, j: usize| self.tableau.a(i, j);
        let lu = ModeLu::factor(n, s, |idx, m| {
            for i in 0..s {
                for j in 0..s {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    m[i * s + j] = delta - dt * a(i, j) * g[idx] * lsym[idx];
                }
            }
        });
        let phi_n = self.coeffs(state.phi.data());
        let forcing: Vec<Option<Vec<Complex64>>> = self
            .forcing_at_stages(state.t, dt)?
            .into_iter()
            .map(|f| f.map(|f| self.coeffs(f.data())))
            .collect();

        let mut done = 0;
        let mut increment = f64::INFINITY;
        let mut prev: Option<Vec<Field>> = None;
        for _ in 0..sweeps {
            let mut kc: Vec<Vec<Complex64>> = (0..s)
                .map(|i| {
                    let frozen = self.model.freeze(&self.sp, &phi_m[i]);
                    let mut c = vec![ZERO; n];
                    self.model
                        .nonlinear_coeffs(&self.sp, &frozen, q_m[i].data(), &mut c);
                    for idx in 0..n {
                        c[idx] = (c[idx] + phi_n[idx] * lsym[idx]) * g[idx];
                        if let Some(f) = &forcing[i] {
                            c[idx] += f[idx];
                        }
                    }
                    c
                })
                .collect();
            lu.solve_all(&mut kc);

            let mut phi_next = Vec::with_capacity(s);
            for i in 0..s {
                let mut c = phi_n.clone();
                for j in 0..s {
                    let w = dt * a(i, j);
                    if w != 0.0 {
                        for idx in 0..n {
                            c[idx] += kc[j][idx] * w;
                        }
                    }
                }
                phi_next.push(self.nodal(&c));
            }
            let l: Vec<Field> = (0..s)
                .map(|i| {
                    let frozen = self.model.freeze(&self.sp, &phi_next[i]);
                    let kv = self.nodal(&kc[i]);
                    self.slope_of(&frozen, kv.data(), &kc[i])
                })
                .collect();
            let q_next: Vec<Field> = (0..s)
                .map(|i| {
                    let mut q = state.q.clone();
                    for j in 0..s {
                        if a(i, j) != 0.0 {
                            q.axpy(dt * a(i, j), &l[j]);
                        }
                    }
                    q
                })
                .collect();
            let change = if phi_next.iter().all(|f| f.is_finite()) {
                phi_next
                    .iter()
                    .zip(&phi_m)
                    .map(|(x, y)| x.sub(y).max_abs())
                    .fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            // `change` is the fixed-point residual of the current iterate. Once
            // it grows the lagged iteration diverges at this step size, and the
            // previous iterate (smallest residual so far) is kept.
            if !change.is_finite() || (done > 0 && change > increment) {
                if let Some(p) = prev.take() {
                    phi_m = p;
                    done -= 1;
                }
                break;
            }
            increment = change;
            prev = Some(std::mem::replace(&mut phi_m, phi_next));
            q_m = q_next;
            done += 1;
            if increment < self.cfg.pc_tol {
                break;
            }
        }
        Ok((phi_m, done, increment))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_lu_matches_direct_solve() {
        // Two modes, a 3x3 system needing a pivot in the first.
        let mats = [
            [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0],
            [4.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 4.0],
        ];
        let lu = ModeLu::factor(2, 3, |idx, m| m.copy_from_slice(&mats[idx]));
        for (idx, mat) in mats.iter().enumerate() {
            let x = [
                Complex64::new(1.0, -2.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(-3.0, 1.0),
            ];
            let mut b: Vec<Complex64> = (0..3)
                .map(|r| (0..3).map(|c| x[c] * mat[r * 3 + c]).sum())
                .collect();
            lu.solve(idx, &mut b);
            for (u, v) in b.iter().zip(&x) {
                assert!((u - v).norm() < 1e-14);
            }
        }
    }
}
