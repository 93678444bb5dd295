//! Runge-Kutta coefficient tables and the algebraic-stability checks that
//! gate energy stability and unique solvability of the linear stage systems.
//!
//! A tableau with nonnegative weights whose matrix
//! `M_ij = b_i a_ij + b_j a_ji - b_i b_j` is positive semi-definite is
//! *algebraically stable*; applied to a linear gradient flow such a method
//! cannot increase the quadratic energy.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Default tolerance for the PSD tests, relative to `1 + spectral radius`.
pub const DEFAULT_PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableauKind {
    FullyImplicit,
    DiagonallyImplicit,
}

/// Coefficients `(A, b, c)` of an `s`-stage Runge-Kutta method.
///
/// `c` is always derived from the row sums of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    s: usize,
    /// Row-major `s x s`.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    kind: TableauKind,
}

impl ButcherTableau {
    /// Builds a tableau from the rows of `A` and the weights `b`.
    ///
    /// The kind is inferred: any nonzero strictly-upper entry makes the method
    /// fully implicit.
    pub fn new(name: impl Into<String>, a_rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::InvalidTableau("stage count must be positive".into()));
        }
        if a_rows.len() != s || a_rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidTableau(format!(
                "A must be {s}x{s} to match {s} weights"
            )));
        }
        let a: Vec<f64> = a_rows.iter().flatten().copied().collect();
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTableau("coefficients must be finite".into()));
        }
        let c = (0..s).map(|i| a[i * s..(i + 1) * s].iter().sum()).collect();
        let upper_zero = (0..s).all(|i| (i + 1..s).all(|j| a[i * s + j] == 0.0));
        let kind = if upper_zero {
            TableauKind::DiagonallyImplicit
        } else {
            TableauKind::FullyImplicit
        };
        Ok(Self {
            name: name.into(),
            s,
            a,
            b: b.to_vec(),
            c,
            kind,
        })
    }

    /// Reads a tableau from a plain-text file: `s` on the first line, then the
    /// `s` rows of `A`, then the weights. Blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let bad = |msg: String| Error::InvalidTableau(msg);
        let s: usize = lines
            .next()
            .ok_or_else(|| bad("empty tableau file".into()))?
            .parse()
            .map_err(|_| bad("first line must be the stage count".into()))?;
        let mut parse_row = |what: &str| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {what}")))?;
            let row = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("non-numeric entry in {what}")))?;
            if row.len() != s {
                return Err(bad(format!(
                    "{what} has {} entries, expected {s}",
                    row.len()
                )));
            }
            Ok(row)
        };
        let mut rows = Vec::with_capacity(s);
        for i in 0..s {
            rows.push(parse_row(&format!("row {} of A", i + 1))?);
        }
        let b = parse_row("b")?;
        Self::new(name, &rows, &b)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn kind(&self) -> TableauKind {
        self.kind
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks(self.s).map(<[f64]>::to_vec).collect()
    }

    /// Reorders the stages by `perm` (new stage `i` is old stage `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let s = self.s;
        let mut seen = vec![false; s];
        if perm.len() != s
            || perm
                .iter()
                .any(|&p| p >= s || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidTableau(
                "not a permutation of the stages".into(),
            ));
        }
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|i| (0..s).map(|j| self.a(perm[i], perm[j])).collect())
            .collect();
        let b: Vec<f64> = perm.iter().map(|&p| self.b[p]).collect();
        Self::new(self.name.clone(), &rows, &b)
    }
}

impl fmt::Display for ButcherTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.s {
            write!(f, "{:>22.16} |", self.c[i])?;
            for j in 0..self.s {
                write!(f, " {:>22.16}", self.a(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>22} |", "")?;
        for bi in &self.b {
            write!(f, " {bi:>22.16}")?;
        }
        Ok(())
    }
}

/// Two-stage Gauss-Legendre method (order 4, `M = 0`).
pub fn gauss4() -> ButcherTableau {
    let r = 3f64.sqrt() / 6.0;
    ButcherTableau::new(
        "gauss4",
        &[vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]],
        &[0.5, 0.5],
    )
    .expect("gauss4 coefficients are valid")
}

/// Diagonal entry of the three-stage, fourth-order DIRK method.
pub fn dirk4_sigma() -> f64 {
    (std::f64::consts::PI / 18.0).cos() / 3f64.sqrt() + 0.5
}

/// Outer weight of the three-stage DIRK method.
pub fn dirk4_mu() -> f64 {
    let two_sigma_m1 = 2.0 * dirk4_sigma() - 1.0;
    1.0 / (6.0 * two_sigma_m1 * two_sigma_m1)
}

/// Three-stage, fourth-order, algebraically stable DIRK method.
pub fn dirk4() -> ButcherTableau {
    let sigma = dirk4_sigma();
    let mu = dirk4_mu();
    ButcherTableau::new(
        "dirk4",
        &[
            vec![sigma, 0.0, 0.0],
            vec![0.5 - sigma, sigma, 0.0],
            vec![2.0 * sigma, 1.0 - 4.0 * sigma, sigma],
        ],
        &[mu, 1.0 - 2.0 * mu, mu],
    )
    .expect("dirk4 coefficients are valid")
}

/// Looks up one of the built-in tableaux by name.
pub fn by_name(name: &str) -> Option<ButcherTableau> {
    match name.to_ascii_lowercase().as_str() {
        "gauss4" | "gauss4th" => Some(gauss4()),
        "dirk4" | "dirk4th" => Some(dirk4()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Row-major `s x s` matrix `M`.
    pub m: Vec<f64>,
    pub s: usize,
    pub m_eigenvalues: Vec<f64>,
    pub weights_nonneg: bool,
    pub m_min_eigenvalue: f64,
    pub algebraically_stable: bool,
    /// Symmetric part of `A` is positive semi-definite.
    pub a_psd: bool,
    /// Every diagonal entry of `A` is strictly positive.
    pub diag_positive: bool,
}

impl StabilityReport {
    pub fn m_entry(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.s + j]
    }

    pub fn m_max_abs(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub fn stability_report(t: &ButcherTableau, tol: f64) -> StabilityReport {
    let s = t.s;
    let b = &t.b;
    let mut m = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            m[i * s + j] = b[i] * t.a(i, j) + b[j] * t.a(j, i) - b[i] * b[j];
        }
    }
    let m_eigenvalues = symmetric_eigenvalues(&m, s);
    let m_min_eigenvalue = m_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let weights_nonneg = b.iter().all(|&bi| bi >= 0.0);
    let algebraically_stable = weights_nonneg && is_psd(&m_eigenvalues, tol);

    let mut a_sym = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            a_sym[i * s + j] = 0.5 * (t.a(i, j) + t.a(j, i));
        }
    }
    let a_psd = is_psd(&symmetric_eigenvalues(&a_sym, s), tol);
    let diag_positive = (0..s).all(|i| t.a(i, i) > 0.0);

    StabilityReport {
        m,
        s,
        m_eigenvalues,
        weights_nonneg,
        m_min_eigenvalue,
        algebraically_stable,
        a_psd,
        diag_positive,
    }
}

fn is_psd(eigs: &[f64], tol: f64) -> bool {
    let radius = eigs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    eigs.iter().all(|&l| l >= -tol * (1.0 + radius))
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// returned in ascending order.
pub fn symmetric_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(m.len(), n * n);
    let mut a = m.to_vec();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j] * a[i * n + j])
                .sum();
            if off.sqrt() <= 1e-300_f64.max(f64::EPSILON * 1e-3 * scale) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Tolerance used by [`check_order_conditions`].
pub const ORDER_TOL: f64 = 1e-12;

/// Checks the rooted-tree order conditions up to order `p` (at most 4).
pub fn check_order_conditions(t: &ButcherTableau, p: usize) -> Result<bool> {
    if !(1..=4).contains(&p) {
        return Err(Error::Unsupported(format!(
            "order conditions are implemented for 1 <= p <= 4, got {p}"
        )));
    }
    Ok(order_condition_residuals(t, p)
        .iter()
        .all(|r| r.abs() <= ORDER_TOL))
}

/// Residuals of the order conditions up to order `p`, in the order
/// `[b1, bc, bc2, bAc, bc3, bcAc, bAc2, bAAc]` truncated to `p`.
pub fn order_condition_residuals(t: &ButcherTableau, p: usize) -> Vec<f64> {
    let s = t.s;
    let b = &t.b;
    let c = &t.c;
    let apply_a = |v: &[f64]| -> Vec<f64> {
        (0..s)
            .map(|i| (0..s).map(|j| t.a(i, j) * v[j]).sum())
            .collect()
    };
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).map(|(x, y)| x * y).sum() };
    let ones = vec![1.0; s];
    let c2: Vec<f64> = c.iter().map(|x| x * x).collect();
    let c3: Vec<f64> = c.iter().map(|x| x * x * x).collect();
    let ac = apply_a(c);
    let ac2 = apply_a(&c2);
    let aac = apply_a(&ac);
    let c_ac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();

    let mut r = vec![dot(b, &ones) - 1.0];
    if p >= 2 {
        r.push(dot(b, c) - 0.5);
    }
    if p >= 3 {
        r.push(dot(b, &c2) - 1.0 / 3.0);
        r.push(dot(b, &ac) - 1.0 / 6.0);
    }
    if p >= 4 {
        r.push(dot(b, &c3) - 0.25);
        r.push(dot(b, &c_ac) - 0.125);
        r.push(dot(b, &ac2) - 1.0 / 12.0);
        r.push(dot(b, &aac) - 1.0 / 24.0);
    }
    r
}
