//! Orchestrated numerical studies: vanishing-diffusion sweeps, empirical
//! threshold searches, limit-system convergence, and blow-up probes, plus
//! deterministic initial-data generators.
//!
//! Sweep members are independent runs and execute concurrently under the
//! `parallel` feature; aggregation is keyed by parameter value, so results
//! do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{
    DynamicsError, Monitors, ModelParams, RunResult, Simulation, State, StepControl, Termination,
};
use crate::elliptic::EllipticConfig;
use crate::exec::{map_tasks, ExecMode};
use crate::grid::{Dim, Field, GridError, GridSpec};
use crate::regimes::{
    check_p_conditions, initial_data_criterion, CriterionInputs, CriterionOutcome, RegimesError,
};

#[derive(Debug, Error)]
pub enum ExperimentsError {
    #[error("initial data spec invalid: {0}")]
    BadSpec(String),
    #[error("d values must satisfy 0 < d_lo < d_hi, got d_lo={d_lo}, d_hi={d_hi}")]
    BadBracket { d_lo: f64, d_hi: f64 },
    #[error("reference run terminated at t = {reached} before the checkpoint t = {t_check}")]
    ReferenceTooShort { t_check: f64, reached: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Regimes(#[from] RegimesError),
}

/// Deterministic nonnegative initial-data shapes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialDataSpec {
    Constant {
        value: f64,
    },
    /// Gaussian bump `amplitude · exp(−r²/(2 width²))` centered at
    /// `(center_x, center_y)`; `center_y` is ignored in 1D.
    Bump {
        amplitude: f64,
        center_x: f64,
        center_y: f64,
        width: f64,
    },
    /// `mass` spread uniformly over the smallest centered cell block whose
    /// measure is at least `patch_fraction · |Ω|`.
    Spike {
        mass: f64,
        patch_fraction: f64,
    },
    /// Low-mode cosine noise, rescaled to `[0, amplitude]`. Bit-identical
    /// for equal seeds.
    FilteredNoise {
        seed: u64,
        cutoff: u32,
        amplitude: f64,
    },
}

/// Realize a spec on a grid.
pub fn generate_initial(
    spec: &InitialDataSpec,
    grid: &GridSpec,
) -> Result<Field, ExperimentsError> {
    match *spec {
        InitialDataSpec::Constant { value } => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ExperimentsError::BadSpec(format!(
                    "constant value {value} must be finite and nonnegative"
                )));
            }
            Ok(Field::constant(*grid, value))
        }
        InitialDataSpec::Bump {
            amplitude,
            center_x,
            center_y,
            width,
        } => {
            if !(amplitude.is_finite() && amplitude >= 0.0) || !(width.is_finite() && width > 0.0) {
                return Err(ExperimentsError::BadSpec(format!(
                    "bump needs amplitude >= 0 and width > 0, got {amplitude}, {width}"
                )));
            }
            let two_w2 = 2.0 * width * width;
            Ok(match grid.dim() {
                Dim::One => Field::from_fn(*grid, |x, _| {
                    amplitude * (-(x - center_x).powi(2) / two_w2).exp()
                }),
                Dim::Two => Field::from_fn(*grid, |x, y| {
                    amplitude
                        * (-((x - center_x).powi(2) + (y - center_y).powi(2)) / two_w2).exp()
                }),
            })
        }
        InitialDataSpec::Spike {
            mass,
            patch_fraction,
        } => {
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(ExperimentsError::BadSpec(format!(
                    "spike mass {mass} must be finite and nonnegative"
                )));
            }
            if !(patch_fraction > 0.0 && patch_fraction <= 1.0) {
                return Err(ExperimentsError::BadSpec(format!(
                    "patch_fraction {patch_fraction} must lie in (0, 1]"
                )));
            }
            let (nx, ny) = (grid.nx(), grid.ny());
            let (kx, ky) = match grid.dim() {
                Dim::One => ((patch_fraction * nx as f64).ceil() as usize, 1),
                Dim::Two => {
                    let side = patch_fraction.sqrt();
                    (
                        (side * nx as f64).ceil() as usize,
                        (side * ny as f64).ceil() as usize,
                    )
                }
            };
            let (kx, ky) = (kx.clamp(1, nx), ky.clamp(1, ny));
            let height = mass / (kx as f64 * ky as f64 * grid.cell_volume());
            let (x0, y0) = ((nx - kx) / 2, (ny - ky) / 2);
            let mut f = Field::zeros(*grid);
            for j in y0..y0 + ky {
                for i in x0..x0 + kx {
                    f.values_mut()[grid.idx(i, j)] = height;
                }
            }
            Ok(f)
        }
        InitialDataSpec::FilteredNoise {
            seed,
            cutoff,
            amplitude,
        } => {
            if !(amplitude.is_finite() && amplitude >= 0.0) || cutoff == 0 {
                return Err(ExperimentsError::BadSpec(format!(
                    "noise needs amplitude >= 0 and cutoff >= 1, got {amplitude}, {cutoff}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = std::f64::consts::PI;
            let mut raw = Field::zeros(*grid);
            match grid.dim() {
                Dim::One => {
                    for k in 1..=cutoff {
                        let coeff: f64 = rng.random_range(-1.0..1.0);
                        let freq = k as f64 * pi / grid.lx();
                        for (i, v) in raw.values_mut().iter_mut().enumerate() {
                            let x = (i as f64 + 0.5) * grid.lx() / grid.nx() as f64;
                            *v += coeff * (freq * x).cos();
                        }
                    }
                }
                Dim::Two => {
                    for k in 0..=cutoff {
                        for l in 0..=cutoff {
                            if k == 0 && l == 0 {
                                continue;
                            }
                            let coeff: f64 = rng.random_range(-1.0..1.0);
                            let fx = k as f64 * pi / grid.lx();
                            let fy = l as f64 * pi / grid.ly();
                            let nx = grid.nx();
                            for (c, v) in raw.values_mut().iter_mut().enumerate() {
                                let x = ((c % nx) as f64 + 0.5) * grid.dx();
                                let y = ((c / nx) as f64 + 0.5) * grid.dy();
                                *v += coeff * (fx * x).cos() * (fy * y).cos();
                            }
                        }
                    }
                }
            }
            let (mn, mx) = (raw.min(), raw.max());
            let span = mx - mn;
            for v in raw.values_mut() {
                *v = if span > 0.0 {
                    amplitude * (*v - mn) / span
                } else {
                    0.5 * amplitude
                };
            }
            Ok(raw)
        }
    }
}

/// Everything needed to launch one run; experiment drivers clone and vary it.
#[derive(Clone, Debug)]
pub struct BaseConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub initial_u: InitialDataSpec,
    pub initial_v: InitialDataSpec,
    pub ctrl: StepControl,
    pub elliptic: EllipticConfig,
    pub monitors: Monitors,
    pub t_end: f64,
    pub observe_every: usize,
}

impl BaseConfig {
    pub fn simulation(&self) -> Result<Simulation, DynamicsError> {
        Simulation::new(self.params, self.ctrl, self.elliptic, self.monitors)
    }

    pub fn initial_fields(&self) -> Result<(Field, Field), ExperimentsError> {
        Ok((
            generate_initial(&self.initial_u, &self.grid)?,
            generate_initial(&self.initial_v, &self.grid)?,
        ))
    }

    pub fn run(&self) -> Result<RunResult, ExperimentsError> {
        let sim = self.simulation()?;
        let (u0, v0) = self.initial_fields()?;
        Ok(sim.run(u0, v0, self.t_end, self.observe_every)?)
    }

    pub fn with_diffusion(&self, d1: f64, d2: f64) -> BaseConfig {
        let mut cfg = self.clone();
        cfg.params.d1 = d1;
        cfg.params.d2 = d2;
        cfg
    }
}

/// Peak statistics of one sweep member.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// Largest recorded `‖u + v‖∞`.
    pub peak_density: f64,
    pub time_of_peak: f64,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub d1: f64,
    pub d2: f64,
    pub outcome: Result<SweepOutcome, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

/// Run the base config once per diffusion pair, recording peak densities.
/// Member failures are recorded and do not abort the sweep.
pub fn vanishing_diffusion_sweep(base: &BaseConfig, d_list: &[(f64, f64)]) -> SweepResult {
    vanishing_diffusion_sweep_mode(base, d_list, ExecMode::default())
}

pub fn vanishing_diffusion_sweep_mode(
    base: &BaseConfig,
    d_list: &[(f64, f64)],
    mode: ExecMode,
) -> SweepResult {
    let records = map_tasks(mode, d_list.to_vec(), |(d1, d2)| {
        let outcome = base
            .with_diffusion(d1, d2)
            .run()
            .map(|res| {
                let (peak_density, time_of_peak) = res.peak_density();
                SweepOutcome {
                    peak_density,
                    time_of_peak,
                    termination: res.termination,
                }
            })
            .map_err(|e| e.to_string());
        SweepRecord { d1, d2, outcome }
    });
    SweepResult { records }
}

/// Result of the empirical diffusion-threshold search.
#[derive(Clone, Debug, PartialEq)]
pub struct DStarSearch {
    /// Geometric midpoint of the final bracket.
    pub d_star: f64,
    /// Largest probed d whose peak exceeded the threshold.
    pub bracket_lo: f64,
    /// Smallest probed d whose peak stayed below it.
    pub bracket_hi: f64,
    /// Every `(d, peak)` evaluation in probe order.
    pub probes: Vec<(f64, f64)>,
}

/// Log-bisection on `d1 = d2 = d` for the predicate
/// `peak ‖u+v‖∞ > m`. Returns `None` when even `d_lo` fails; returns the
/// trivial bracket at `d_hi` when the whole range passes. The result is an
/// empirical bracket, not a claim about the exact threshold.
pub fn find_dstar(
    base: &BaseConfig,
    m: f64,
    d_hi: f64,
    d_lo: f64,
    iters: usize,
) -> Result<Option<DStarSearch>, ExperimentsError> {
    if !(d_lo > 0.0 && d_lo < d_hi && d_hi.is_finite()) {
        return Err(ExperimentsError::BadBracket { d_lo, d_hi });
    }
    let mut probes = Vec::new();
    let mut eval = |d: f64| -> Result<f64, ExperimentsError> {
        let res = base.with_diffusion(d, d).run()?;
        let (peak, _) = res.peak_density();
        probes.push((d, peak));
        Ok(peak)
    };
    if eval(d_hi)? > m {
        return Ok(Some(DStarSearch {
            d_star: d_hi,
            bracket_lo: d_hi,
            bracket_hi: d_hi,
            probes,
        }));
    }
    if eval(d_lo)? <= m {
        return Ok(None);
    }
    let (mut lo, mut hi) = (d_lo, d_hi);
    for _ in 0..iters {
        let mid = (lo * hi).sqrt();
        if eval(mid)? > m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(DStarSearch {
        d_star: (lo * hi).sqrt(),
        bracket_lo: lo,
        bracket_hi: hi,
        probes,
    }))
}

/// Sup-norm distances of one diffusive run from the zero-diffusion
/// reference at the checkpoint time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceEntry {
    pub d: f64,
    pub err_u: f64,
    pub err_v: f64,
    pub err_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub t_check: f64,
    pub entries: Vec<ConvergenceEntry>,
    /// Members that terminated before the checkpoint, with the reason.
    pub excluded: Vec<(f64, String)>,
}

/// March a config to `t_check`, linearly interpolating the first step that
/// crosses it. `Ok(None)` when the run terminates earlier.
fn run_to_checkpoint(
    cfg: &BaseConfig,
    t_check: f64,
) -> Result<Option<State>, ExperimentsError> {
    let sim = cfg.simulation()?;
    let (u0, v0) = cfg.initial_fields()?;
    let mut prev = sim.initial_state(u0, v0)?;
    let threshold = cfg
        .ctrl
        .blowup_threshold
        .unwrap_or_else(|| 1e6 * prev.linf_sum().max(1.0));
    if t_check == 0.0 {
        return Ok(Some(prev));
    }
    loop {
        let next = match sim.step(&prev) {
            Ok(next) => next,
            Err(crate::dynamics::StepError::DtUnderflow { .. }) => return Ok(None),
            Err(crate::dynamics::StepError::Elliptic(e)) => {
                return Err(ExperimentsError::Dynamics(e.into()))
            }
        };
        if next.t >= t_check {
            if next.t == t_check {
                return Ok(Some(next));
            }
            let theta = (t_check - prev.t) / (next.t - prev.t);
            let lerp = |a: &Field, b: &Field| {
                let vals = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(&x, &y)| x + theta * (y - x))
                    .collect();
                Field::from_values(*a.grid(), vals).expect("same grid")
            };
            return Ok(Some(State {
                t: t_check,
                u: lerp(&prev.u, &next.u),
                v: lerp(&prev.v, &next.v),
                w: lerp(&prev.w, &next.w),
            }));
        }
        if next.linf_sum() > threshold {
            return Ok(None);
        }
        prev = next;
    }
}

fn sup_distance(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Compare runs at `d1 = d2 = d` for each `d` against the `d = 0` limit
/// run at a single checkpoint time.
pub fn hhe_ppe_convergence(
    base: &BaseConfig,
    d_list: &[f64],
    t_check: f64,
) -> Result<ConvergenceReport, ExperimentsError> {
    let reference = match run_to_checkpoint(&base.with_diffusion(0.0, 0.0), t_check)? {
        Some(state) => state,
        None => {
            return Err(ExperimentsError::ReferenceTooShort {
                t_check,
                reached: f64::NAN,
            })
        }
    };
    let members = map_tasks(ExecMode::default(), d_list.to_vec(), |d| {
        (d, run_to_checkpoint(&base.with_diffusion(d, d), t_check))
    });
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (d, state) in members {
        match state {
            Ok(Some(st)) => entries.push(ConvergenceEntry {
                d,
                err_u: sup_distance(&st.u, &reference.u),
                err_v: sup_distance(&st.v, &reference.v),
                err_w: sup_distance(&st.w, &reference.w),
            }),
            Ok(None) => excluded.push((d, "terminated before the checkpoint".to_string())),
            Err(e) => excluded.push((d, e.to_string())),
        }
    }
    Ok(ConvergenceReport {
        t_check,
        entries,
        excluded,
    })
}

/// What a blow-up probe saw.
#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub termination: Termination,
    pub last_t: f64,
    /// `(t, ∫u^p + ∫v^p)` at the monitored exponent.
    pub y_series: Vec<(f64, f64)>,
    /// Largest observed `∫u + ∫v`.
    pub mass_peak: f64,
    /// `max(∫u0 + ∫v0, 2|Ω|)`.
    pub mass_bound: f64,
    /// Whether log y has positive second differences over the last quartile
    /// of samples.
    pub log_convex_tail: bool,
    /// Whether any sensitivity condition holds at the monitored exponent.
    pub conditions_hold: bool,
    /// Initial-data criterion at B = 1, when the coefficient is positive.
    pub criterion: Option<CriterionOutcome>,
}

/// Run the zero-diffusion system and report the growth functional. The
/// probe always forces `d1 = d2 = 0`.
pub fn blowup_probe(base: &BaseConfig, p_monitor: f64) -> Result<ProbeReport, ExperimentsError> {
    let mut cfg = base.with_diffusion(0.0, 0.0);
    cfg.monitors.p = p_monitor;

    let conditions_hold = check_p_conditions(&cfg.params, p_monitor)?.any();
    let (u0, v0) = cfg.initial_fields()?;
    let criterion = CriterionInputs::from_params(&cfg.params, p_monitor, cfg.grid.measure(), 1.0)
        .and_then(|inputs| initial_data_criterion(&u0, &v0, &inputs))
        .ok();
    let mass_bound = (u0.integrate()? + v0.integrate()?).max(2.0 * cfg.grid.measure());

    let sim = cfg.simulation()?;
    let res = sim.run(u0, v0, cfg.t_end, cfg.observe_every)?;

    let y_series: Vec<(f64, f64)> = res.series.iter().map(|r| (r.t, r.yp)).collect();
    let mass_peak = res
        .series
        .iter()
        .fold(0.0f64, |m, r| m.max(r.mass_u + r.mass_v));
    Ok(ProbeReport {
        termination: res.termination,
        last_t: res.final_state.t,
        log_convex_tail: log_convex_tail(&y_series),
        y_series,
        mass_peak,
        mass_bound,
        conditions_hold,
        criterion,
    })
}

/// Positive second differences of `log y(t)` over the last quartile of
/// samples (three-point non-uniform stencil).
pub fn log_convex_tail(series: &[(f64, f64)]) -> bool {
    let n = series.len();
    if n < 6 {
        return false;
    }
    let start = n - (n / 4).max(3);
    let pts: Vec<(f64, f64)> = series[start..]
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 3 {
        return false;
    }
    pts.windows(3).all(|w| {
        let [(t0, f0), (t1, f1), (t2, f2)] = [w[0], w[1], w[2]];
        let h01 = t1 - t0;
        let h12 = t2 - t1;
        if h01 <= 0.0 || h12 <= 0.0 {
            return false;
        }
        let second =
            2.0 * (f0 / (h01 * (h01 + h12)) - f1 / (h01 * h12) + f2 / (h12 * (h01 + h12)));
        second > 0.0
    })
}
