//! Scalar observables: error norms, mass, roughness, energy time series,
//! convergence-order fits and the Gauss dissipation-identity residual.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::integrators::StageRecord;
use crate::models::{EqState, GradientFlowModel};
use crate::spectral::{inner, Field, Spectral};
use crate::tableau::{stability_report, ButcherTableau};

/// Quadrature-weighted `L^2` norm of `num - exact`.
pub fn l2_error(num: &Field, exact: &Field) -> f64 {
    let d = num.sub(exact);
    inner(&d, &d).sqrt()
}

pub fn linf_error(num: &Field, exact: &Field) -> f64 {
    num.sub(exact).max_abs()
}

/// `int phi dx`.
pub fn mass(phi: &Field) -> f64 {
    phi.mean() * phi.grid().area()
}

/// RMS deviation from the spatial mean.
pub fn roughness(phi: &Field) -> f64 {
    let m = phi.mean();
    let d = phi.map(|v| v - m);
    (inner(&d, &d) / phi.grid().area()).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition(format!(
            "slope fit needs two equally long series with >= 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Precondition(
            "log-log fit needs positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition(
            "log-log fit needs distinct abscissae".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// One sample of a [`TimeSeries`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub energy: f64,
    pub energy_eq: f64,
    pub mass: f64,
    pub roughness: f64,
}

impl SeriesRow {
    pub fn sample(model: &GradientFlowModel, sp: &Spectral, s: &EqState) -> Self {
        Self {
            t: s.t,
            energy: model.energy_original(sp, &s.phi),
            energy_eq: model.energy_quadratized(sp, s),
            mass: mass(&s.phi),
            roughness: roughness(&s.phi),
        }
    }
}

pub const SERIES_HEADER: &str = "t,energy,energy_eq,mass,roughness";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    rows: Vec<SeriesRow>,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; times must be strictly increasing.
    pub fn push(&mut self, row: SeriesRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Precondition(format!(
                    "time series must be strictly increasing ({} after {})",
                    row.t, last.t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[SeriesRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&SeriesRow> {
        self.rows.last()
    }

    /// Rows with `a <= t <= b`.
    pub fn window(&self, a: f64, b: f64) -> Vec<SeriesRow> {
        self.rows
            .iter()
            .filter(|r| r.t >= a && r.t <= b)
            .copied()
            .collect()
    }

    /// Largest per-step increase of the quadratized energy relative to its
    /// magnitude; negative when the energy decreased at every step.
    pub fn max_relative_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| {
                (w[1].energy_eq - w[0].energy_eq) / w[0].energy_eq.abs().max(f64::MIN_POSITIVE)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SERIES_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.energy, r.energy_eq, r.mass, r.roughness
            )?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let rows = read_table(r, SERIES_HEADER, 5)?;
        let mut out = Self::new();
        for v in rows {
            out.push(SeriesRow {
                t: v[0],
                energy: v[1],
                energy_eq: v[2],
                mass: v[3],
                roughness: v[4],
            })?;
        }
        Ok(out)
    }
}

fn read_table<R: BufRead>(r: R, header: &str, cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .transpose()
        .map_err(|e| Error::Format(e.to_string()))?
        .unwrap_or_default();
    if first.trim() != header {
        return Err(Error::Format(format!(
            "expected header `{header}`, got `{first}`"
        )));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", n + 2)))?;
        if vals.len() != cols {
            return Err(Error::Format(format!(
                "row {}: expected {cols} columns, got {}",
                n + 2,
                vals.len()
            )));
        }
        rows.push(vals);
    }
    Ok(rows)
}

pub const REFINEMENT_HEADER: &str = "dt,l2,linf";

/// Errors at the final time of a time-step refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult {
    pub dts: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub linf_errors: Vec<f64>,
    pub fitted_order_l2: f64,
    pub fitted_order_linf: f64,
}

impl RefinementResult {
    /// Validates the levels and fits both orders.
    pub fn new(dts: Vec<f64>, l2_errors: Vec<f64>, linf_errors: Vec<f64>) -> Result<Self> {
        if dts.len() != l2_errors.len() || dts.len() != linf_errors.len() {
            return Err(Error::Precondition(
                "refinement columns differ in length".into(),
            ));
        }
        if dts.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Precondition(
                "refinement step sizes must be strictly decreasing".into(),
            ));
        }
        let mut r = Self {
            dts,
            l2_errors,
            linf_errors,
            fitted_order_l2: f64::NAN,
            fitted_order_linf: f64::NAN,
        };
        let (a, b) = fit_order(&r)?;
        r.fitted_order_l2 = a;
        r.fitted_order_linf = b;
        Ok(r)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REFINEMENT_HEADER}")?;
        for i in 0..self.dts.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e}",
                self.dts[i], self.l2_errors[i], self.linf_errors[i]
            )?;
        }
        w.flush()
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let rows = read_table(r, REFINEMENT_HEADER, 3)?;
        Self::new(
            rows.iter().map(|v| v[0]).collect(),
            rows.iter().map(|v| v[1]).collect(),
            rows.iter().map(|v| v[2]).collect(),
        )
    }
}

/// Least-squares convergence orders `(l2, linf)`; needs at least three levels.
pub fn fit_order(r: &RefinementResult) -> Result<(f64, f64)> {
    if r.dts.len() < 3 {
        return Err(Error::Precondition(format!(
            "order fit needs >= 3 refinement levels, got {}",
            r.dts.len()
        )));
    }
    Ok((
        loglog_slope(&r.dts, &r.l2_errors)?,
        loglog_slope(&r.dts, &r.linf_errors)?,
    ))
}

/// `|(F^{n+1} - F^n) - dt sum_i b_i (mu_i, G mu_i)|` for an unforced step of a
/// tableau with `M = 0`, where `mu_i` is rebuilt from the stage values.
pub fn gauss_dissipation_residual(
    model: &GradientFlowModel,
    sp: &Spectral,
    t: &ButcherTableau,
    sr: &StageRecord,
    before: &EqState,
    after: &EqState,
    dt: f64,
) -> Result<f64> {
    let rep = stability_report(t, 1e-12);
    if rep.m_max_abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "dissipation identity needs M = 0; tableau {} has max |M| = {:.3e}",
            t.name(),
            rep.m_max_abs()
        )));
    }
    if sr.stages() != t.stages() {
        return Err(Error::Precondition(
            "stage record does not match the tableau".into(),
        ));
    }
    let mut rate = 0.0;
    for (i, &bi) in t.b().iter().enumerate() {
        let mu = model.chemical_potential(sp, &sr.phi_stages[i], &sr.q_stages[i], &sr.phi_star[i]);
        rate += bi * inner(&mu, &model.apply_mobility(sp, &mu));
    }
    let de = model.energy_quadratized(sp, after) - model.energy_quadratized(sp, before);
    Ok((de - dt * rate).abs())
}
