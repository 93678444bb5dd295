//! Linear energy-quadratized Runge-Kutta integrators (LEQRK and the
//! prediction-correction variant LEQRK-PC) and the second-order
//! convex-splitting baselines.
//!
//! One LEQRK step freezes the nonlinear coefficients at extrapolated stage
//! values `phi*_i` and solves the linear stage system
//!
//! ```text
//! Phi_i = phi^n + dt sum_j a_ij k_j
//! Q_i   = q^n   + dt sum_j a_ij l_j
//! k_i   = G (L Phi_i + N_i(Q_i)) + f(t_n + c_i dt)
//! l_i   = dg/dphi[phi*_i] k_i + dg/dgrad(phi)[phi*_i] . grad k_i
//! ```
//!
//! where `N_i(Q) = 2 Q dg/dphi[phi*_i] - div(2 Q dg/dgrad(phi)[phi*_i])`.

mod cs2;
mod extrapolate;
mod gmres;
mod stage;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{EqState, GradientFlowModel};
use crate::spectral::{Field, Grid, Spectral};
use crate::tableau::ButcherTableau;

pub use cs2::{cs2_step, cs2_step_ch, cs2_step_mbe, Cs2Config};
pub use extrapolate::{lagrange_weights, Node, Stencil};
pub use gmres::{gmres, GmresConfig, GmresStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target of the stage-system Krylov solve.
    pub krylov_rel_tol: f64,
    pub krylov_max_iters: usize,
    /// Krylov subspace size between restarts.
    pub krylov_restart: usize,
    /// Number of prediction sweeps `M` for LEQRK-PC.
    pub pc_iters: usize,
    /// Early-exit threshold on the max-norm change between sweeps.
    pub pc_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            krylov_rel_tol: 1e-12,
            krylov_max_iters: 500,
            krylov_restart: 150,
            pc_iters: 5,
            pc_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.krylov_rel_tol > 0.0) {
            return Err(Error::Precondition(format!(
                "krylov_rel_tol must be > 0, got {}",
                self.krylov_rel_tol
            )));
        }
        if self.krylov_max_iters == 0 || self.krylov_restart == 0 {
            return Err(Error::Precondition(
                "krylov_max_iters and krylov_restart must be positive".into(),
            ));
        }
        if !(self.pc_tol >= 0.0) {
            return Err(Error::Precondition(format!(
                "pc_tol must be >= 0, got {}",
                self.pc_tol
            )));
        }
        Ok(())
    }

    pub fn with_pc_iters(mut self, m: usize) -> Self {
        self.pc_iters = m;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub krylov_iterations: usize,
    /// Largest final relative residual over the Krylov solves of the step.
    pub krylov_residual: f64,
    /// Prediction sweeps actually performed.
    pub pc_sweeps: usize,
    /// Max-norm change of the last prediction sweep.
    pub pc_increment: f64,
}

/// Stage values of one step.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub phi_stages: Vec<Field>,
    pub q_stages: Vec<Field>,
    pub k: Vec<Field>,
    pub l: Vec<Field>,
    /// Values the nonlinear coefficients were frozen at.
    pub phi_star: Vec<Field>,
    pub stats: StepStats,
}

impl StageRecord {
    pub fn stages(&self) -> usize {
        self.k.len()
    }
}

/// Data of the previous step needed for extrapolation.
#[derive(Debug, Clone, Default)]
pub struct History {
    entry: Option<(EqState, StageRecord)>,
}

impl History {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(prev_state: EqState, prev_stages: StageRecord) -> Self {
        Self {
            entry: Some((prev_state, prev_stages)),
        }
    }

    pub fn valid(&self) -> bool {
        self.entry.is_some()
    }

    pub fn prev_state(&self) -> Option<&EqState> {
        self.entry.as_ref().map(|e| &e.0)
    }

    pub fn prev_stages(&self) -> Option<&StageRecord> {
        self.entry.as_ref().map(|e| &e.1)
    }
}

/// Source term added to the `phi` equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Forcing {
    #[default]
    None,
    /// Forcing of the manufactured solution `sin x sin y cos t`.
    Mms,
}

impl Forcing {
    pub(crate) fn eval(self, model: &GradientFlowModel, t: f64) -> Result<Option<Field>> {
        match self {
            Forcing::None => Ok(None),
            Forcing::Mms => model.mms_forcing(t).map(Some),
        }
    }
}

/// LEQRK / LEQRK-PC integrator for one model, tableau and grid.
#[derive(Debug)]
pub struct Leqrk {
    model: GradientFlowModel,
    tableau: ButcherTableau,
    sp: Spectral,
    cfg: SolverConfig,
    forcing: Forcing,
    stencil: Stencil,
}

impl Leqrk {
    pub fn new(
        model: GradientFlowModel,
        tableau: ButcherTableau,
        cfg: SolverConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let sp = Spectral::new(model.grid());
        let stencil = Stencil::for_tableau(&tableau);
        Ok(Self {
            model,
            tableau,
            sp,
            cfg,
            forcing: Forcing::None,
            stencil,
        })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Result<Self> {
        if forcing == Forcing::Mms {
            // Fail early on a domain the manufactured solution does not fit.
            self.model.mms_forcing(0.0)?;
        }
        self.forcing = forcing;
        Ok(self)
    }

    /// Replaces the extrapolation stencil (one row per stage).
    pub fn with_stencil(mut self, stencil: Stencil) -> Result<Self> {
        if stencil.stages() != self.tableau.stages() {
            return Err(Error::Precondition(format!(
                "stencil has {} rows, tableau {} has {} stages",
                stencil.stages(),
                self.tableau.name(),
                self.tableau.stages()
            )));
        }
        let s = self.tableau.stages();
        if stencil
            .nodes
            .iter()
            .any(|n| matches!(n, Node::PrevStage(j) if *j >= s))
            || stencil
                .weights
                .iter()
                .any(|w| w.len() != stencil.nodes.len())
        {
            return Err(Error::Precondition(
                "stencil nodes and weights do not match the tableau".into(),
            ));
        }
        self.stencil = stencil;
        Ok(self)
    }

    pub fn with_dealias(mut self, on: bool) -> Self {
        self.sp = Spectral::new(self.model.grid()).with_dealias(on);
        self
    }

    pub fn model(&self) -> &GradientFlowModel {
        &self.model
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn config_mut(&mut self) -> &mut SolverConfig {
        &mut self.cfg
    }

    pub fn forcing(&self) -> Forcing {
        self.forcing
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.model.grid()
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Consistent initial state `(phi0, q[phi0])` at time `t`.
    pub fn initial_state(&self, phi: Field, t: f64) -> EqState {
        EqState::consistent(&self.model, &self.sp, phi, t)
    }

    /// Extrapolated `(phi, q)` at the stage times of the step starting at `cur.t`.
    pub fn extrapolate(&self, h: &History, cur: &EqState) -> Result<(Vec<Field>, Vec<Field>)> {
        let (prev, stages) = h.entry.as_ref().ok_or(Error::HistoryNotReady)?;
        if stages.stages() != self.tableau.stages() {
            return Err(Error::Precondition(format!(
                "history has {} stages, tableau {} has {}",
                stages.stages(),
                self.tableau.name(),
                self.tableau.stages()
            )));
        }
        let phi = self.stencil.apply(|node| match node {
            Node::PrevState => &prev.phi,
            Node::PrevStage(j) => &stages.phi_stages[j],
            Node::Current => &cur.phi,
        });
        let q = self.stencil.apply(|node| match node {
            Node::PrevState => &prev.q,
            Node::PrevStage(j) => &stages.q_stages[j],
            Node::Current => &cur.q,
        });
        Ok((phi, q))
    }

    /// `(phi^{n+1}, q^{n+1})` from the stage slopes.
    fn update(&self, state: &EqState, rec: &StageRecord, dt: f64) -> EqState {
        let mut phi = state.phi.clone();
        let mut q = state.q.clone();
        for (i, &bi) in self.tableau.b().iter().enumerate() {
            phi.axpy(dt * bi, &rec.k[i]);
            q.axpy(dt * bi, &rec.l[i]);
        }
        EqState {
            phi,
            q,
            t: state.t + dt,
        }
    }

    fn check_dt(dt: f64) -> Result<()> {
        if dt.is_finite() && dt > 0.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "time step must be > 0, got {dt}"
            )))
        }
    }

    /// One LEQRK step with coefficients frozen at the extrapolants.
    pub fn leqrk_step(
        &self,
        state: &EqState,
        h: &History,
        dt: f64,
    ) -> Result<(EqState, StageRecord)> {
        Self::check_dt(dt)?;
        let (phi_star, _) = self.extrapolate(h, state)?;
        let rec = self.solve_stage_system(state, phi_star, dt)?;
        Ok((self.update(state, &rec, dt), rec))
    }

    /// One LEQRK-PC step with `cfg.pc_iters` prediction sweeps. Without a
    /// valid history the sweeps start from the constants `(phi^n, q^n)`.
    pub fn leqrk_pc_step(
        &self,
        state: &EqState,
        h: &History,
        dt: f64,
    ) -> Result<(EqState, StageRecord)> {
        self.pc_step_with(state, h, dt, self.cfg.pc_iters)
    }

    fn pc_step_with(
        &self,
        state: &EqState,
        h: &History,
        dt: f64,
        sweeps: usize,
    ) -> Result<(EqState, StageRecord)> {
        Self::check_dt(dt)?;
        let s = self.tableau.stages();
        let (phi0, q0) = if h.valid() {
            self.extrapolate(h, state)?
        } else {
            (vec![state.phi.clone(); s], vec![state.q.clone(); s])
        };
        let (phi_star, sweeps_done, increment) = self.predict(state, phi0, q0, dt, sweeps)?;
        let mut rec = self.solve_stage_system(state, phi_star, dt)?;
        rec.stats.pc_sweeps = sweeps_done;
        rec.stats.pc_increment = increment;
        Ok((self.update(state, &rec, dt), rec))
    }

    /// Start-up step: LEQRK-PC from constant guesses with at least five sweeps.
    pub fn first_step(&self, state0: &EqState, dt: f64) -> Result<(EqState, StageRecord, History)> {
        let (next, rec) =
            self.pc_step_with(state0, &History::empty(), dt, self.cfg.pc_iters.max(5))?;
        let h = History::new(state0.clone(), rec.clone());
        Ok((next, rec, h))
    }

    /// Largest stage-equation residual `max_i ||k_i - G(L Phi_i + N_i(Q_i)) - f_i||_inf`
    /// relative to `max_i ||k_i||_inf`, recomputed with the public model operators.
    pub fn stage_residual(&self, state: &EqState, rec: &StageRecord, dt: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..rec.stages() {
            let mu = self.model.chemical_potential(
                &self.sp,
                &rec.phi_stages[i],
                &rec.q_stages[i],
                &rec.phi_star[i],
            );
            let mut rhs = self.model.apply_mobility(&self.sp, &mu);
            if let Some(f) = self
                .forcing
                .eval(&self.model, state.t + self.tableau.c()[i] * dt)?
            {
                rhs.axpy(1.0, &f);
            }
            worst = worst.max(rec.k[i].sub(&rhs).max_abs());
            scale = scale.max(rec.k[i].max_abs());
        }
        Ok(if scale > 0.0 { worst / scale } else { worst })
    }

    /// Largest violation of `Phi_i = phi^n + dt sum_j a_ij k_j` and the `Q` analogue.
    pub fn stage_consistency(&self, state: &EqState, rec: &StageRecord, dt: f64) -> (f64, f64) {
        let s = rec.stages();
        let mut dphi = 0.0f64;
        let mut dq = 0.0f64;
        for i in 0..s {
            let mut phi = state.phi.clone();
            let mut q = state.q.clone();
            for j in 0..s {
                phi.axpy(dt * self.tableau.a(i, j), &rec.k[j]);
                q.axpy(dt * self.tableau.a(i, j), &rec.l[j]);
            }
            dphi = dphi.max(phi.sub(&rec.phi_stages[i]).max_abs());
            dq = dq.max(q.sub(&rec.q_stages[i]).max_abs());
        }
        (dphi, dq)
    }
}

/// Which update rule a [`Stepper`] applies after the start-up step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Leqrk,
    LeqrkPc,
}

/// Drives an integrator forward with uniform steps, managing the history.
#[derive(Debug)]
pub struct Stepper {
    integrator: Leqrk,
    scheme: Scheme,
    state: EqState,
    history: History,
    steps: usize,
    last: Option<StageRecord>,
}

impl Stepper {
    pub fn new(integrator: Leqrk, scheme: Scheme, phi0: Field, t0: f64) -> Self {
        let state = integrator.initial_state(phi0, t0);
        Self {
            integrator,
            scheme,
            state,
            history: History::empty(),
            steps: 0,
            last: None,
        }
    }

    pub fn integrator(&self) -> &Leqrk {
        &self.integrator
    }

    pub fn state(&self) -> &EqState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn last_stages(&self) -> Option<&StageRecord> {
        self.last.as_ref()
    }

    /// Advances one step; the state is left untouched on failure.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let wrap = |e: Error, steps: usize, t: f64| Error::Step {
            step: steps + 1,
            t,
            source: Box::new(e),
        };
        let (next, rec) = if self.history.valid() {
            match self.scheme {
                Scheme::Leqrk => self.integrator.leqrk_step(&self.state, &self.history, dt),
                Scheme::LeqrkPc => self
                    .integrator
                    .leqrk_pc_step(&self.state, &self.history, dt),
            }
            .map_err(|e| wrap(e, self.steps, self.state.t))?
        } else {
            let (next, rec, _) = self
                .integrator
                .first_step(&self.state, dt)
                .map_err(|e| wrap(e, self.steps, self.state.t))?;
            (next, rec)
        };
        let prev = std::mem::replace(&mut self.state, next);
        self.history = History::new(prev, rec.clone());
        self.last = Some(rec);
        self.steps += 1;
        Ok(())
    }
}
