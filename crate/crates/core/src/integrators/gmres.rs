//! Restarted GMRES for matrix-free real operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    /// Final true residual relative to `||b||`.
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `op(x) = b` starting from the guess in `x`.
///
/// Convergence is declared on the true residual `||b - op(x)|| <= rel_tol ||b||`,
/// recomputed at every restart.
pub fn gmres(
    mut op: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    cfg: &GmresConfig,
) -> Result<GmresStats> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(GmresStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let target = cfg.rel_tol * b_norm;
    let m = cfg.restart.max(1);
    let mut iterations = 0;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    // Hessenberg columns, each of length m + 1.
    let mut h = vec![vec![0.0; m + 1]; m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];

    loop {
        op(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        if beta <= target {
            return Ok(GmresStats {
                iterations,
                rel_residual: beta / b_norm,
            });
        }
        if iterations >= cfg.max_iters {
            return Err(Error::KrylovNonConvergence {
                iterations,
                residual: beta / b_norm,
            });
        }

        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if iterations >= cfg.max_iters {
                break;
            }
            iterations += 1;
            op(&basis[k], &mut w);
            // Modified Gram-Schmidt, applied twice for robustness near convergence.
            for _ in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    h[k][j] += hij;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= hij * vi;
                    }
                }
            }
            let h_next = norm(&w);
            h[k][k + 1] = h_next;
            for j in 0..k {
                let (a, bb) = (h[k][j], h[k][j + 1]);
                h[k][j] = cs[j] * a + sn[j] * bb;
                h[k][j + 1] = -sn[j] * a + cs[j] * bb;
            }
            let (a, bb) = (h[k][k], h[k][k + 1]);
            let rho = a.hypot(bb);
            if rho == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = a / rho;
                sn[k] = bb / rho;
            }
            h[k][k] = rho;
            h[k][k + 1] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= 0.5 * target || h_next == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // Back substitution for the update coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[j][i] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * vi;
            }
        }
        for col in h.iter_mut() {
            col.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tol: f64) -> GmresConfig {
        GmresConfig {
            rel_tol: tol,
            max_iters: 200,
            restart: 10,
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        // Tridiagonal, nonsymmetric, diagonally dominant.
        let n = 50;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let left = if i > 0 { x[i - 1] } else { 0.0 };
                let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 4.0 * x[i] - 1.5 * left + 0.5 * right;
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; n];
        op(&exact, &mut b);
        let mut x = vec![0.0; n];
        let stats = gmres(op, &b, &mut x, &cfg(1e-13)).unwrap();
        assert!(stats.rel_residual <= 1e-13);
        let err = x
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let mut x = vec![1.0; 4];
        let stats = gmres(|x, y| y.copy_from_slice(x), &[0.0; 4], &mut x, &cfg(1e-12)).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.0];
        let mut x = vec![0.0; 3];
        let stats = gmres(|x, y| y.copy_from_slice(x), &b, &mut x, &cfg(1e-14)).unwrap();
        assert_eq!(stats.iterations, 1);
        assert_eq!(x, b);
    }

    #[test]
    fn reports_non_convergence() {
        // Rotation by 90 degrees: GMRES stagnates with a 1-dimensional restart.
        let op = |x: &[f64], y: &mut [f64]| {
            y[0] = -x[1];
            y[1] = x[0];
        };
        let mut x = vec![0.0; 2];
        let res = gmres(
            op,
            &[1.0, 0.0],
            &mut x,
            &GmresConfig {
                rel_tol: 1e-12,
                max_iters: 5,
                restart: 1,
            },
        );
        assert!(matches!(res, Err(Error::KrylovNonConvergence { .. })));
    }
}
