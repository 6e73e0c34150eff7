//! Explicit time integration of the two-species system and its
//! zero-diffusion limit.
//!
//! One Euler step advances both densities with donor-cell upwind advection
//! along the signal gradient, explicit diffusion and the logistic
//! competition kinetics, then re-solves the quasi-static signal equation
//! from the updated densities. Advection and diffusion are written in
//! conservative flux form with zero boundary flux, so each of them changes
//! `∫u` and `∫v` only at rounding level; nonnegativity is preserved by the
//! step-size control plus an accept/reject guard.
//!
//! With `d1 = d2 = 0` the diffusion term is skipped entirely, so the
//! parabolic step degenerates bit-exactly to the hyperbolic limit step.

use thiserror::Error;

use crate::elliptic::{solve_w_warm, EllipticConfig, EllipticError};
use crate::exec::{fill_bands, ExecMode};
use crate::grid::{FaceField, Field, GridError};
use crate::numeric::pairwise_sum_by;

/// The twelve coefficients of the model.
///
/// `d1 = d2 = 0` selects the hyperbolic limit system. Chemotactic
/// sensitivities and kinetic rates may be zero so that the no-chemotaxis
/// and no-kinetics control runs are expressible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub a1: f64,
    pub a2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Error)]
#[error("model parameter {name} = {value} violates {constraint}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub constraint: &'static str,
}

impl ModelParams {
    /// All coefficients set to one.
    pub fn unit() -> Self {
        Self {
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            chi1: 1.0,
            chi2: 1.0,
            mu1: 1.0,
            mu2: 1.0,
            a1: 1.0,
            a2: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let nonneg: [(&'static str, f64); 7] = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("a1", self.a1),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ParamError {
                    name,
                    value,
                    constraint: ">= 0",
                });
            }
        }
        if !(self.a2.is_finite() && self.a2 >= 0.0) {
            return Err(ParamError {
                name: "a2",
                value: self.a2,
                constraint: ">= 0",
            });
        }
        let positive: [(&'static str, f64); 4] = [
            ("d3", self.d3),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError {
                    name,
                    value,
                    constraint: "> 0",
                });
            }
        }
        Ok(())
    }

    /// True when both species diffusivities vanish.
    pub fn is_hhe(&self) -> bool {
        self.d1 == 0.0 && self.d2 == 0.0
    }
}

/// Adaptive step-size control and the numerical blow-up proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Advective Courant number in (0, 1].
    pub cfl_adv: f64,
    /// Diffusive safety factor in (0, 1].
    pub cfl_diff: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// L∞ level of `u + v` treated as numerical blow-up; `None` resolves to
    /// `1e6 · max(1, ‖u0 + v0‖∞)` at run start.
    pub blowup_threshold: Option<f64>,
    /// Safety factor in (0, 1) for the kinetics positivity bound on dt.
    pub reaction_safety: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl_adv: 0.5,
            cfl_diff: 0.4,
            dt_max: 1e-2,
            dt_min: 1e-12,
            blowup_threshold: None,
            reaction_safety: 0.5,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), ParamError> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            (
                "cfl_adv",
                self.cfl_adv,
                self.cfl_adv > 0.0 && self.cfl_adv <= 1.0,
                "in (0, 1]",
            ),
            (
                "cfl_diff",
                self.cfl_diff,
                self.cfl_diff > 0.0 && self.cfl_diff <= 1.0,
                "in (0, 1]",
            ),
            (
                "dt bounds",
                self.dt_min,
                self.dt_min > 0.0 && self.dt_min < self.dt_max && self.dt_max.is_finite(),
                "0 < dt_min < dt_max",
            ),
            (
                "reaction_safety",
                self.reaction_safety,
                self.reaction_safety > 0.0 && self.reaction_safety < 1.0,
                "in (0, 1)",
            ),
            (
                "blowup_threshold",
                self.blowup_threshold.unwrap_or(1.0),
                self.blowup_threshold.is_none_or(|b| b > 0.0 && b.is_finite()),
                "> 0",
            ),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok {
                return Err(ParamError {
                    name,
                    value,
                    constraint,
                });
            }
        }
        Ok(())
    }
}

/// Which functionals the diagnostic series tracks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    /// Exponent of the `∫u^p + ∫v^p` series.
    pub p: f64,
    /// Exponent of the `∫|∇u|^q + ∫|∇v|^q` series.
    pub q: f64,
}

impl Default for Monitors {
    fn default() -> Self {
        // q = 4 exceeds max{n, 2} for every supported dimension.
        Self { p: 2.0, q: 4.0 }
    }
}

impl Monitors {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(ParamError {
                name: "monitors.p",
                value: self.p,
                constraint: ">= 1",
            });
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return Err(ParamError {
                name: "monitors.q",
                value: self.q,
                constraint: "> 1",
            });
        }
        Ok(())
    }
}

/// Time-stamped solution triple.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

impl State {
    /// Max over cells of `u + v`.
    pub fn linf_sum(&self) -> f64 {
        self.u
            .values()
            .iter()
            .zip(self.v.values())
            .fold(f64::NEG_INFINITY, |m, (&a, &b)| m.max(a + b))
    }
}

/// One diagnostic sample of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub linf_sum: f64,
    /// `∫u^p + ∫v^p` at the monitored p.
    pub yp: f64,
    /// `∫|∇u|^q + ∫|∇v|^q` at the monitored q.
    pub gradq: f64,
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    Completed,
    BlowUp { t: f64 },
    DtUnderflow { t: f64 },
}

/// Full outcome of a run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub series: Vec<DiagRecord>,
    pub final_state: State,
    pub termination: Termination,
    pub steps: u64,
}

impl RunResult {
    /// Largest recorded `‖u + v‖∞` and the time it occurred.
    pub fn peak_density(&self) -> (f64, f64) {
        self.series
            .iter()
            .fold((f64::NEG_INFINITY, 0.0), |(pk, tk), r| {
                if r.linf_sum > pk {
                    (r.linf_sum, r.t)
                } else {
                    (pk, tk)
                }
            })
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("time step collapsed below dt_min at t = {t}")]
    DtUnderflow { t: f64 },
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error("initial data invalid: {0}")]
    BadInitialData(String),
}

/// Donor-cell chemotactic flux `chi · c_upwind · (∂w/∂n)` per face.
///
/// The donor is the cell the face-normal velocity `chi ∂w/∂n` points away
/// from; boundary faces stay zero.
pub fn chemotactic_flux(c: &Field, w: &Field, chi: f64) -> FaceField {
    chemotactic_flux_mode(c, w, chi, ExecMode::default())
}

pub fn chemotactic_flux_mode(c: &Field, w: &Field, chi: f64, mode: ExecMode) -> FaceField {
    assert_eq!(c.grid(), w.grid(), "flux: fields on different grids");
    let g = *c.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let (cv, wv) = (c.values(), w.values());
    let mut out = FaceField::zeros(g);
    fill_bands(mode, out.fx_mut(), nx + 1, |start, band| {
        for (k, o) in band.iter_mut().enumerate() {
            let f = start + k;
            let (i, j) = (f % (nx + 1), f / (nx + 1));
            if i == 0 || i == nx {
                *o = 0.0;
                continue;
            }
            let (cl, cr) = (j * nx + i - 1, j * nx + i);
            let vel = chi * ((wv[cr] - wv[cl]) / dx);
            let donor = if vel > 0.0 { cv[cl] } else { cv[cr] };
            *o = vel * donor;
        }
    });
    if ny > 1 {
        fill_bands(mode, out.fy_mut(), nx, |start, band| {
            for (k, o) in band.iter_mut().enumerate() {
                let f = start + k;
                let (i, j) = (f % nx, f / nx);
                if j == 0 || j == ny {
                    *o = 0.0;
                    continue;
                }
                let (cl, cr) = ((j - 1) * nx + i, j * nx + i);
                let vel = chi * ((wv[cr] - wv[cl]) / dy);
                let donor = if vel > 0.0 { cv[cl] } else { cv[cr] };
                *o = vel * donor;
            }
        });
    }
    out
}

/// Pointwise kinetics `(μ1 u (1 − u − a1 v), μ2 v (1 − a2 u − v))`.
pub fn reaction(u: &Field, v: &Field, params: &ModelParams) -> (Field, Field) {
    assert_eq!(u.grid(), v.grid(), "reaction: fields on different grids");
    let (uv, vv) = (u.values(), v.values());
    let mut ru = Field::zeros(*u.grid());
    let mut rv = Field::zeros(*u.grid());
    for ((ou, &a), &b) in ru.values_mut().iter_mut().zip(uv).zip(vv) {
        *ou = params.mu1 * a * (1.0 - a - params.a1 * b);
    }
    for ((ov, &a), &b) in rv.values_mut().iter_mut().zip(uv).zip(vv) {
        *ov = params.mu2 * b * (1.0 - params.a2 * a - b);
    }
    (ru, rv)
}

/// A configured integrator. Owns no state; every call is deterministic
/// given its inputs, so independent runs can execute concurrently.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub params: ModelParams,
    pub ctrl: StepControl,
    pub elliptic: EllipticConfig,
    pub monitors: Monitors,
    pub exec: ExecMode,
}

impl Simulation {
    pub fn new(
        params: ModelParams,
        ctrl: StepControl,
        elliptic: EllipticConfig,
        monitors: Monitors,
    ) -> Result<Self, DynamicsError> {
        params.validate()?;
        ctrl.validate()?;
        monitors.validate()?;
        elliptic.validate()?;
        Ok(Self {
            params,
            ctrl,
            elliptic,
            monitors,
            exec: ExecMode::default(),
        })
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    /// Solve the signal equation for given densities and assemble a state.
    pub fn initial_state(&self, u0: Field, v0: Field) -> Result<State, DynamicsError> {
        if u0.grid() != v0.grid() {
            return Err(DynamicsError::Grid(GridError::GridMismatch));
        }
        u0.check_finite()?;
        v0.check_finite()?;
        if u0.min() < 0.0 || v0.min() < 0.0 {
            return Err(DynamicsError::BadInitialData(
                "initial densities must be nonnegative".into(),
            ));
        }
        let (w, _) = solve_w_warm(&u0, &v0, &self.params, &self.elliptic, None)?;
        Ok(State {
            t: 0.0,
            u: u0,
            v: v0,
            w,
        })
    }

    /// Largest stable step from the current state: the min of `dt_max`, the
    /// diffusive bound `cfl_diff h²/(2 dim max(d1,d2))`, the advective bound
    /// `cfl_adv h / max|chi ∂w/∂n|` per species, and the kinetics positivity
    /// bound `reaction_safety / max_i μ_i(‖·‖∞ + a_i‖·‖∞ + 1)`.
    pub fn stability_dt(&self, state: &State) -> f64 {
        let gw = state.w.gradient_faces_mode(self.exec);
        self.stability_dt_with_grad(state, &gw)
    }

    fn stability_dt_with_grad(&self, state: &State, gw: &FaceField) -> f64 {
        let g = state.u.grid();
        let h = g.h_min();
        let p = &self.params;

        let mut dt = self.ctrl.dt_max;

        let dmax = p.d1.max(p.d2);
        if dmax > 0.0 {
            dt = dt.min(self.ctrl.cfl_diff * h * h / (2.0 * g.dim_count() as f64 * dmax));
        }

        let gmax = gw.max_abs();
        let speed = p.chi1.max(p.chi2) * gmax;
        if speed > 0.0 {
            dt = dt.min(self.ctrl.cfl_adv * h / speed);
        }

        let linf_u = state.u.max().max(0.0);
        let linf_v = state.v.max().max(0.0);
        let r1 = p.mu1 * (linf_u + p.a1 * linf_v + 1.0);
        let r2 = p.mu2 * (linf_v + p.a2 * linf_u + 1.0);
        let rmax = r1.max(r2);
        if rmax > 0.0 {
            dt = dt.min(self.ctrl.reaction_safety / rmax);
        }
        dt
    }

    /// Largest stable step, or the underflow signal when it drops below
    /// `dt_min`.
    pub fn compute_dt(&self, state: &State) -> Result<f64, StepError> {
        let dt = self.stability_dt(state);
        if dt < self.ctrl.dt_min {
            Err(StepError::DtUnderflow { t: state.t })
        } else {
            Ok(dt)
        }
    }

    /// One explicit Euler step using the stability step size.
    pub fn step(&self, state: &State) -> Result<State, StepError> {
        let gw = state.w.gradient_faces_mode(self.exec);
        let dt = self.stability_dt_with_grad(state, &gw);
        if dt < self.ctrl.dt_min {
            return Err(StepError::DtUnderflow { t: state.t });
        }
        self.advance(state, dt, &gw)
    }

    /// One explicit Euler step of at most `dt`.
    pub fn step_by(&self, state: &State, dt: f64) -> Result<State, StepError> {
        let gw = state.w.gradient_faces_mode(self.exec);
        self.advance(state, dt, &gw)
    }

    /// Hyperbolic-limit step; requires `d1 = d2 = 0` and shares every
    /// instruction with [`Simulation::step`], which skips the diffusion
    /// term when a diffusivity is zero.
    pub fn step_hhe(&self, state: &State) -> Result<State, StepError> {
        assert!(
            self.params.is_hhe(),
            "step_hhe requires d1 = d2 = 0, got d1={} d2={}",
            self.params.d1,
            self.params.d2
        );
        self.step(state)
    }

    /// Attempt the update at `dt`, halving on any negative or non-finite
    /// cell until it fits or `dt` underflows. The flux/diffusion/kinetics
    /// rates depend only on the state, so retries reuse them.
    fn advance(&self, state: &State, mut dt: f64, gw: &FaceField) -> Result<State, StepError> {
        let p = &self.params;
        let div_u = chemotactic_flux_mode(&state.u, &state.w, p.chi1, self.exec)
            .divergence_mode(self.exec);
        let div_v = chemotactic_flux_mode(&state.v, &state.w, p.chi2, self.exec)
            .divergence_mode(self.exec);
        let lap_u = (p.d1 > 0.0).then(|| state.u.laplacian_mode(self.exec));
        let lap_v = (p.d2 > 0.0).then(|| state.v.laplacian_mode(self.exec));
        let (ru, rv) = reaction(&state.u, &state.v, p);

        let mut u_new = Field::zeros(*state.u.grid());
        let mut v_new = Field::zeros(*state.u.grid());
        loop {
            if dt < self.ctrl.dt_min {
                return Err(StepError::DtUnderflow { t: state.t });
            }
            euler_update(
                self.exec,
                &mut u_new,
                &state.u,
                &div_u,
                &ru,
                lap_u.as_ref().map(|l| (p.d1, l)),
                dt,
            );
            euler_update(
                self.exec,
                &mut v_new,
                &state.v,
                &div_v,
                &rv,
                lap_v.as_ref().map(|l| (p.d2, l)),
                dt,
            );
            let admissible = |f: &Field| f.values().iter().all(|&x| x.is_finite() && x >= 0.0);
            if admissible(&u_new) && admissible(&v_new) {
                break;
            }
            dt *= 0.5;
        }

        let (w, _) = solve_w_warm(&u_new, &v_new, p, &self.elliptic, Some(&state.w))?;
        Ok(State {
            t: state.t + dt,
            u: u_new,
            v: v_new,
            w,
        })
    }

    /// Diagnostic sample of a state.
    pub fn diagnostics(&self, state: &State) -> Result<DiagRecord, GridError> {
        let pm = self.monitors.p;
        let vol = state.u.grid().cell_volume();
        let up = {
            let vals = state.u.values();
            pairwise_sum_by(vals.len(), &|i| vals[i].powf(pm)) * vol
        };
        let vp = {
            let vals = state.v.values();
            pairwise_sum_by(vals.len(), &|i| vals[i].powf(pm)) * vol
        };
        Ok(DiagRecord {
            t: state.t,
            mass_u: state.u.integrate()?,
            mass_v: state.v.integrate()?,
            linf_u: state.u.lp_norm(f64::INFINITY)?,
            linf_v: state.v.lp_norm(f64::INFINITY)?,
            linf_sum: state.linf_sum(),
            yp: up + vp,
            gradq: state.u.grad_norm_q(self.monitors.q)? + state.v.grad_norm_q(self.monitors.q)?,
        })
    }

    /// Integrate from `(u0, v0)` until `t_end` or termination, sampling
    /// diagnostics at `t = 0`, every `observe_every`-th step, and at the end.
    pub fn run(
        &self,
        u0: Field,
        v0: Field,
        t_end: f64,
        observe_every: usize,
    ) -> Result<RunResult, DynamicsError> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(DynamicsError::BadInitialData(format!(
                "t_end = {t_end} must be positive and finite"
            )));
        }
        let observe_every = observe_every.max(1);
        let mut state = self.initial_state(u0, v0)?;
        let threshold = self
            .ctrl
            .blowup_threshold
            .unwrap_or_else(|| 1e6 * state.linf_sum().max(1.0));

        let mut series = vec![self.diagnostics(&state)?];
        let mut steps: u64 = 0;
        let termination = loop {
            if state.t >= t_end {
                break Termination::Completed;
            }
            let gw = state.w.gradient_faces_mode(self.exec);
            let stable = self.stability_dt_with_grad(&state, &gw);
            if stable < self.ctrl.dt_min {
                break Termination::DtUnderflow { t: state.t };
            }
            let remaining = t_end - state.t;
            let clamped = stable >= remaining;
            let dt = if clamped { remaining } else { stable };
            match self.advance(&state, dt, &gw) {
                Ok(mut next) => {
                    if clamped && next.t - (state.t + dt) == 0.0 {
                        next.t = t_end;
                    }
                    state = next;
                }
                Err(StepError::DtUnderflow { t }) => break Termination::DtUnderflow { t },
                Err(StepError::Elliptic(e)) => return Err(e.into()),
            }
            steps += 1;
            if state.linf_sum() > threshold {
                break Termination::BlowUp { t: state.t };
            }
            if steps % observe_every as u64 == 0 {
                series.push(self.diagnostics(&state)?);
            }
        };
        if series.last().map(|r| r.t) != Some(state.t) {
            series.push(self.diagnostics(&state)?);
        }
        Ok(RunResult {
            series,
            final_state: state,
            termination,
            steps,
        })
    }
}

/// `out = cur + dt · (d·lap + (react − div))`, diffusion omitted when absent.
fn euler_update(
    mode: ExecMode,
    out: &mut Field,
    cur: &Field,
    div: &Field,
    react: &Field,
    diffusion: Option<(f64, &Field)>,
    dt: f64,
) {
    let nx = cur.grid().nx();
    let (c, d, r) = (cur.values(), div.values(), react.values());
    match diffusion {
        Some((coeff, lap)) => {
            let l = lap.values();
            fill_bands(mode, out.values_mut(), nx, |start, band| {
                for (k, o) in band.iter_mut().enumerate() {
                    let i = start + k;
                    *o = c[i] + dt * (coeff * l[i] + (r[i] - d[i]));
                }
            });
        }
        None => {
            fill_bands(mode, out.values_mut(), nx, |start, band| {
                for (k, o) in band.iter_mut().enumerate() {
                    let i = start + k;
                    *o = c[i] + dt * (r[i] - d[i]);
                }
            });
        }
    }
}
