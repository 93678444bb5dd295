//! Experiment drivers: single runs, MMS refinement studies, maximum-stable
//! step comparisons and coarsening power laws.

mod config;

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{
    l2_error, linf_error, loglog_slope, RefinementResult, SeriesRow, TimeSeries,
};
use crate::error::{Error, Result};
use crate::integrators::{cs2_step, Cs2Config, Forcing, Leqrk, Scheme, Stepper};
use crate::models::{EqState, GradientFlowModel};
use crate::spectral::{load_snapshot, save_snapshot, Field, Grid, Spectral};

pub use config::{load_config, parse_config, Epsilon, Initial, RunConfig, SchemeKind, KEYS};

/// Uniform sample in `[-1, 1)` from the top 53 bits of one `next_u64` draw.
fn symmetric_uniform(rng: &mut ChaCha8Rng) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

/// Initial field for `cfg` on `grid`.
///
/// `random(a, seed)` draws `a * (2u - 1)` per node, in storage order, with `u`
/// built from the top 53 bits of successive outputs of ChaCha8 seeded by
/// `seed_from_u64(seed)`.
pub fn build_initial(cfg: &RunConfig, grid: &std::sync::Arc<Grid>) -> Result<Field> {
    // Expressions are written for [0, 2pi]^2 and rescaled to the domain.
    let (sx, sy) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
    match &cfg.initial {
        Initial::Mms => Ok(Field::from_fn(grid, |x, y| (sx * x).sin() * (sy * y).sin())),
        Initial::CosineCombo => Ok(Field::from_fn(grid, |x, y| {
            let (x, y) = (sx * x, sy * y);
            let b = (4.0 * x).cos() * (3.0 * y).cos();
            0.05 * ((3.0 * x).cos() * (4.0 * y).cos()
                + b * b
                + (x - 5.0 * y).cos() * (2.0 * x - y).cos())
        })),
        Initial::SineCombo => Ok(Field::from_fn(grid, |x, y| {
            let (x, y) = (sx * x, sy * y);
            0.1 * ((3.0 * x).sin() * (2.0 * y).sin() + (5.0 * x).sin() * (5.0 * y).sin())
        })),
        Initial::Random { amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let data = (0..grid.len())
                .map(|_| amplitude * symmetric_uniform(&mut rng))
                .collect();
            Field::from_vec(grid, data)
        }
        Initial::File(path) => {
            let (f, _) = load_snapshot(path)?;
            let g = f.grid();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
            if g.nx() != grid.nx()
                || g.ny() != grid.ny()
                || !close(g.lx(), grid.lx())
                || !close(g.ly(), grid.ly())
            {
                return Err(Error::Format(format!(
                    "{}: snapshot grid {}x{} on [0,{}]x[0,{}] does not match the configured {}x{} on [0,{}]x[0,{}]",
                    path.display(),
                    g.nx(),
                    g.ny(),
                    g.lx(),
                    g.ly(),
                    grid.nx(),
                    grid.ny(),
                    grid.lx(),
                    grid.ly()
                )));
            }
            Field::from_vec(grid, f.into_vec())
        }
    }
}

enum Engine {
    Rk(Stepper),
    Cs2 {
        sp: Spectral,
        prev: Field,
        cur: Field,
        t: f64,
        forcing: Forcing,
        cfg: Cs2Config,
    },
}

/// One configured simulation, advanced a step at a time.
pub struct Simulation {
    model: GradientFlowModel,
    sp: Spectral,
    engine: Engine,
    dt: f64,
    steps: usize,
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg.nx, cfg.ny, cfg.lx, cfg.ly)?;
        let model = GradientFlowModel::new(cfg.model, &grid, cfg.params())?;
        let phi0 = build_initial(cfg, &grid)?;
        let engine = match cfg.scheme {
            SchemeKind::Cs2 => Engine::Cs2 {
                sp: Spectral::new(&grid),
                prev: phi0.clone(),
                cur: phi0,
                t: 0.0,
                forcing: cfg.forcing,
                cfg: Cs2Config::default(),
            },
            SchemeKind::Leqrk | SchemeKind::LeqrkPc => {
                let integ = Leqrk::new(model.clone(), cfg.butcher_tableau()?, cfg.solver_config())?
                    .with_forcing(cfg.forcing)?;
                let scheme = if cfg.scheme == SchemeKind::Leqrk {
                    Scheme::Leqrk
                } else {
                    Scheme::LeqrkPc
                };
                Engine::Rk(Stepper::new(integ, scheme, phi0, 0.0))
            }
        };
        Ok(Self {
            sp: Spectral::new(&grid),
            model,
            engine,
            dt: cfg.dt,
            steps: 0,
        })
    }

    pub fn model(&self) -> &GradientFlowModel {
        &self.model
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn phi(&self) -> &Field {
        match &self.engine {
            Engine::Rk(st) => &st.state().phi,
            Engine::Cs2 { cur, .. } => cur,
        }
    }

    /// Current `(phi, q)`; for the CS baseline `q` is evaluated from `phi`.
    pub fn eq_state(&self) -> EqState {
        match &self.engine {
            Engine::Rk(st) => {
                let mut s = st.state().clone();
                s.t = self.time();
                s
            }
            Engine::Cs2 { cur, .. } => {
                EqState::consistent(&self.model, &self.sp, cur.clone(), self.time())
            }
        }
    }

    pub fn sample(&self) -> SeriesRow {
        SeriesRow::sample(&self.model, &self.sp, &self.eq_state())
    }

    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        match &mut self.engine {
            Engine::Rk(st) => st.step(dt)?,
            Engine::Cs2 {
                sp,
                prev,
                cur,
                t,
                forcing,
                cfg,
            } => {
                let f = forcing.eval(&self.model, *t + 0.5 * dt)?;
                let next =
                    cs2_step(&self.model, sp, cur, prev, dt, f.as_ref(), cfg).map_err(|e| {
                        Error::Step {
                            step: self.steps + 1,
                            t: *t,
                            source: Box::new(e),
                        }
                    })?;
                *prev = std::mem::replace(cur, next);
                *t = (self.steps + 1) as f64 * dt;
            }
        }
        self.steps += 1;
        if !self.phi().is_finite() {
            return Err(Error::Step {
                step: self.steps,
                t: self.time(),
                source: Box::new(Error::NonFinite),
            });
        }
        Ok(())
    }
}

/// Final field and sampled series of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub phi: Field,
    pub t: f64,
}

/// Runs `cfg` to `t_end`, sampling every step. With `write_outputs` the
/// series CSV and requested snapshots are written.
pub fn simulate(cfg: &RunConfig, write_outputs: bool) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg)?;
    let mut series = TimeSeries::new();
    series.push(sim.sample())?;
    let snap_steps: Vec<(usize, f64)> = cfg
        .snapshot_times
        .iter()
        .map(|&t| ((t / cfg.dt).round() as usize, t))
        .collect();
    if write_outputs {
        if let Some(dir) = &cfg.snapshot_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    for _ in 0..cfg.steps() {
        sim.step()?;
        series.push(sim.sample())?;
        if write_outputs {
            for &(_, t) in snap_steps.iter().filter(|(n, _)| *n == sim.steps()) {
                let dir = cfg.snapshot_dir.as_ref().expect("validated");
                save_snapshot(&dir.join(snapshot_name(t)), sim.phi(), t)?;
            }
        }
    }
    if write_outputs {
        if let Some(path) = &cfg.series_path {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let f = File::create(path).map_err(|e| Error::io(path, e))?;
            series
                .write_csv(BufWriter::new(f))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(RunOutput {
        t: sim.time(),
        phi: sim.phi().clone(),
        series,
    })
}

/// File name of the snapshot taken at time `t`.
pub fn snapshot_name(t: f64) -> PathBuf {
    PathBuf::from(format!("phi_t{t:?}.snap"))
}

/// Runs `cfg` and writes its outputs, returning the series.
pub fn run_single(cfg: &RunConfig) -> Result<TimeSeries> {
    simulate(cfg, true).map(|o| o.series)
}

fn check_dts(dts: &[f64]) -> Result<()> {
    if dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Precondition("step sizes must be positive".into()));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition(
            "step sizes must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// One MMS run per step size (concurrently), errors at `t_end`, fitted orders.
pub fn run_refinement(cfg: &RunConfig, dts: &[f64]) -> Result<RefinementResult> {
    if cfg.forcing != Forcing::Mms {
        return Err(Error::Precondition(
            "refinement studies need `forcing = mms`".into(),
        ));
    }
    if dts.len() < 3 {
        return Err(Error::Precondition(format!(
            "refinement needs >= 3 step sizes, got {}",
            dts.len()
        )));
    }
    check_dts(dts)?;
    let runs: Vec<(f64, f64)> = dts
        .par_iter()
        .map(|&dt| {
            let c = cfg.with_dt(dt);
            let out = simulate(&c, false)?;
            let grid = out.phi.grid().clone();
            let exact = GradientFlowModel::new(c.model, &grid, c.params())?.mms_exact(c.t_end);
            Ok((l2_error(&out.phi, &exact), linf_error(&out.phi, &exact)))
        })
        .collect::<Result<_>>()?;
    RefinementResult::new(
        dts.to_vec(),
        runs.iter().map(|r| r.0).collect(),
        runs.iter().map(|r| r.1).collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDtRow {
    pub dt: f64,
    /// Relative `L^2` deviation from the reference at `t_end`; infinite when the run failed.
    pub deviation: f64,
    pub correct: bool,
    /// Solver failure message, if any.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDtTable {
    pub reference_dt: f64,
    pub threshold: f64,
    pub rows: Vec<MaxDtRow>,
}

impl MaxDtTable {
    /// Largest step size judged correct.
    pub fn largest_correct(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.correct)
            .map(|r| r.dt)
            .fold(None, |m, d| Some(m.map_or(d, |m: f64| m.max(d))))
    }
}

/// Compares final fields against a fine-step reference; a run is "correct"
/// when its relative `L^2` deviation is below `threshold` (0.05 in the studies).
pub fn run_max_stable_dt(
    cfg: &RunConfig,
    dts: &[f64],
    reference_dt: f64,
    threshold: f64,
) -> Result<MaxDtTable> {
    check_dts(dts)?;
    if dts.iter().any(|&d| d < reference_dt) {
        return Err(Error::Precondition(format!(
            "reference step {reference_dt} must not exceed the compared step sizes"
        )));
    }
    let reference = simulate(&cfg.with_dt(reference_dt), false)?.phi;
    let ref_norm = l2_error(&reference, &Field::zeros(reference.grid()));
    let rows = dts
        .par_iter()
        .map(|&dt| match simulate(&cfg.with_dt(dt), false) {
            Ok(out) => {
                let deviation = l2_error(&out.phi, &reference) / ref_norm;
                MaxDtRow {
                    dt,
                    deviation,
                    correct: deviation < threshold,
                    failure: None,
                }
            }
            Err(e) => MaxDtRow {
                dt,
                deviation: f64::INFINITY,
                correct: false,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    Ok(MaxDtTable {
        reference_dt,
        threshold,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct CoarseningResult {
    pub series: TimeSeries,
    pub energy_slope: f64,
    pub roughness_slope: f64,
}

/// Log-log slopes of the original energy and the roughness over `[a, b]`.
pub fn power_law_slopes(series: &TimeSeries, window: (f64, f64)) -> Result<(f64, f64)> {
    let rows = series.window(window.0, window.1);
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.roughness).collect();
    Ok((loglog_slope(&t, &e)?, loglog_slope(&t, &w)?))
}

/// Runs `cfg` (writing its outputs) and fits the coarsening power laws.
pub fn run_coarsening(cfg: &RunConfig, window: (f64, f64)) -> Result<CoarseningResult> {
    let (a, b) = window;
    if !(a > 0.0 && a < b && b <= cfg.t_end * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "window [{a}, {b}] must satisfy 0 < a < b <= t_end = {}",
            cfg.t_end
        )));
    }
    let series = run_single(cfg)?;
    let (energy_slope, roughness_slope) = power_law_slopes(&series, window)?;
    Ok(CoarseningResult {
        series,
        energy_slope,
        roughness_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn initial_fields() {
        let mut cfg = RunConfig::new(ModelKind::CahnHilliard, 16, 0.1, 1.0);
        let grid = Grid::square_2pi(16).unwrap();
        cfg.initial = Initial::CosineCombo;
        assert!((build_initial(&cfg, &grid).unwrap().data()[0] - 0.15).abs() < 1e-15);
        cfg.initial = Initial::Mms;
        let mms = build_initial(&cfg, &grid).unwrap();
        assert!((mms.at(4, 4) - 1.0).abs() < 1e-15);
        cfg.initial = Initial::Random {
            amplitude: 0.001,
            seed: 7,
        };
        let a = build_initial(&cfg, &grid).unwrap();
        let b = build_initial(&cfg, &grid).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs() <= 0.001 && a.max_abs() > 0.0009);
    }

    #[test]
    fn synthetic_power_laws() {
        let mut s = TimeSeries::new();
        for i in 1..=20 {
            let t = i as f64;
            s.push(SeriesRow {
                t,
                energy: t.powf(-1.0 / 3.0),
                energy_eq: 0.0,
                mass: 0.0,
                roughness: 2.0,
            })
            .unwrap();
        }
        let (e, r) = power_law_slopes(&s, (2.0, 20.0)).unwrap();
        assert!((e + 1.0 / 3.0).abs() < 1e-10);
        assert!(r.abs() < 1e-14);
    }
}
