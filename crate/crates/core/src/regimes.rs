//! Closed-form parameter-region conditions and blow-up algebra.
//!
//! Everything here is exact arithmetic on the model coefficients: the four
//! sensitivity conditions at a fixed exponent `p > 1`, their `p`-free
//! reductions, comparison conditions from related analyses, the combined
//! coefficients that drive the `∫u^{p+1} + ∫v^{p+1}` growth estimate, the
//! initial-data criterion, and the closed-form bound on the blow-up time of
//! the extremal integral inequality together with an independent ODE
//! integration that checks it.
//!
//! Strict and non-strict inequalities are evaluated exactly as printed;
//! [`p_condition_margin`] reports the distance to the nearest comparison
//! boundary so callers can flag floating-point ties.

use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::grid::{Field, GridError};

#[derive(Debug, Error)]
pub enum RegimesError {
    #[error("exponent p = {p} must exceed 1")]
    BadExponent { p: f64 },
    #[error("parameter {name} = {value} violates {constraint}")]
    BadParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("explicit coefficient C = {c:.6e} is not positive at p = {p}; the growth estimate carries no information there")]
    NonPositiveCoefficient { c: f64, p: f64 },
    #[error("initial data must be nonnegative")]
    NegativeInitialData,
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn require(name: &'static str, value: f64, ok: bool, constraint: &'static str) -> Result<(), RegimesError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(RegimesError::BadParameter {
            name,
            value,
            constraint,
        })
    }
}

/// Which of the four conditions holds (they are mutually exclusive at any
/// fixed p).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    C1,
    C2,
    C3,
    C4,
}

/// Truth values of the four conditions at a fixed exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PConditions {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub c4: bool,
}

impl PConditions {
    pub fn any(&self) -> bool {
        self.c1 || self.c2 || self.c3 || self.c4
    }

    pub fn case(&self) -> Option<Case> {
        match (self.c1, self.c2, self.c3, self.c4) {
            (true, _, _, _) => Some(Case::C1),
            (_, true, _, _) => Some(Case::C2),
            (_, _, true, _) => Some(Case::C3),
            (_, _, _, true) => Some(Case::C4),
            _ => None,
        }
    }

    pub fn as_array(&self) -> [bool; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }
}

struct PThresholds {
    t1u: f64,
    t1v: f64,
    /// χ1 branch boundary `d3 p a1 μ1 / (β (p−1))`.
    ub_chi1: f64,
    /// χ2 branch boundary `d3 p a2 μ2 / (α (p−1))`.
    ub_chi2: f64,
    c2_chi1_lo: f64,
    c2_chi2_lo: f64,
    c3_chi1_lo: f64,
    c3_chi2_lo: f64,
    c4_chi1_lo: f64,
    c4_chi2_lo: f64,
}

fn p_thresholds(m: &ModelParams, p: f64) -> PThresholds {
    let (d3, a1, a2) = (m.d3, m.a1, m.a2);
    let (mu1, mu2) = (m.mu1, m.mu2);
    let (al, be) = (m.alpha, m.beta);
    let pm1 = p - 1.0;
    let pp1 = p + 1.0;
    let p2m1 = p * p - 1.0;

    let ub_chi1 = d3 * p * a1 * mu1 / (be * pm1);
    let ub_chi2 = d3 * p * a2 * mu2 / (al * pm1);

    PThresholds {
        t1u: p * d3 / pm1 * mu1 * (1.0 / al).max(a1 / be),
        t1v: p * d3 / pm1 * mu2 * (1.0 / be).max(a2 / al),
        ub_chi1,
        ub_chi2,
        c2_chi1_lo: ((d3 * p * pp1 * mu1 + d3 * p * a2 * mu2 - m.chi2 * al * pm1) / (al * p2m1))
            .max(ub_chi1),
        c2_chi2_lo: (d3 * p * pp1 * mu2 + d3 * p * p * a2 * mu2) / (al * p * pm1 + be * p2m1),
        c3_chi1_lo: (d3 * p * pp1 * mu1 + d3 * p * p * a1 * mu1) / (al * p2m1 + be * p * pm1),
        c3_chi2_lo: ((d3 * p * a1 * mu1 + d3 * p * pp1 * mu2 - m.chi1 * be * pm1) / (be * p2m1))
            .max(ub_chi2),
        c4_chi1_lo: (d3 * p * pp1 * mu1 + d3 * p * p * a1 * mu1 + d3 * p * a2 * mu2
            - m.chi2 * al * pm1)
            / (al * p2m1 + be * p * pm1),
        c4_chi2_lo: (d3 * p * pp1 * mu2 + d3 * p * a1 * mu1 + d3 * p * p * a2 * mu2
            - m.chi1 * be * pm1)
            / (al * p * pm1 + be * p2m1),
    }
}

/// Evaluate the four conditions at exponent `p`, glyph for glyph (the mixed
/// strict/non-strict comparisons in (ii)–(iv) included).
pub fn check_p_conditions(params: &ModelParams, p: f64) -> Result<PConditions, RegimesError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RegimesError::BadExponent { p });
    }
    let t = p_thresholds(params, p);
    let (x1, x2) = (params.chi1, params.chi2);
    Ok(PConditions {
        c1: x1 > t.t1u && x2 > t.t1v,
        c2: x1 > t.c2_chi1_lo && t.c2_chi2_lo < x2 && x2 <= t.ub_chi2,
        c3: t.c3_chi1_lo < x1 && x1 <= t.ub_chi1 && x2 > t.c3_chi2_lo,
        c4: t.c4_chi1_lo < x1 && x1 <= t.ub_chi1 && t.c4_chi2_lo < x2 && x2 <= t.ub_chi2,
    })
}

/// Distance from `(chi1, chi2)` to the nearest comparison boundary among
/// all four conditions at `p`; near-zero values mean the booleans sit on a
/// floating-point tie.
pub fn p_condition_margin(params: &ModelParams, p: f64) -> Result<f64, RegimesError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RegimesError::BadExponent { p });
    }
    let t = p_thresholds(params, p);
    let (x1, x2) = (params.chi1, params.chi2);
    let gaps = [
        x1 - t.t1u,
        x2 - t.t1v,
        x1 - t.ub_chi1,
        x2 - t.ub_chi2,
        x1 - t.c2_chi1_lo,
        x2 - t.c2_chi2_lo,
        x1 - t.c3_chi1_lo,
        x2 - t.c3_chi2_lo,
        x1 - t.c4_chi1_lo,
        x2 - t.c4_chi2_lo,
    ];
    Ok(gaps.iter().fold(f64::INFINITY, |m, g| m.min(g.abs())))
}

/// Truth values of the four `p`-free reduced conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReducedConditions {
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
}

impl ReducedConditions {
    pub fn any(&self) -> bool {
        self.r1 || self.r2 || self.r3 || self.r4
    }
}

/// Literal evaluation of the reduced conditions.
pub fn check_reduced(params: &ModelParams) -> ReducedConditions {
    check_reduced_scaled(params, 1.0)
}

/// Reduced conditions with every right-hand side multiplied by `scale`;
/// `scale > 1` demands a multiplicative margin, `scale < 1` grants slack.
pub fn check_reduced_scaled(params: &ModelParams, scale: f64) -> ReducedConditions {
    let m = params;
    let (al, be, d3) = (m.alpha, m.beta, m.d3);
    let full1 = d3 * m.mu1 * (1.0 / al).max(m.a1 / be);
    let full2 = d3 * m.mu2 * (1.0 / be).max(m.a2 / al);
    let mix1 = d3 * m.mu1 * (1.0 + m.a1) / (al + be);
    let mix2 = d3 * m.mu2 * (1.0 + m.a2) / (al + be);
    let side1 = m.a1 / be > scale * (1.0 / al);
    let side2 = m.a2 / al > scale * (1.0 / be);
    ReducedConditions {
        r1: m.chi1 > scale * full1 && m.chi2 > scale * full2,
        r2: m.chi1 > scale * full1 && m.chi2 > scale * mix2 && side2,
        r3: m.chi1 > scale * mix1 && m.chi2 > scale * full2 && side1,
        r4: m.chi1 > scale * mix1 && m.chi2 > scale * mix2 && side1 && side2,
    }
}

/// Log-spaced scan grid for [`exists_p`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PScan {
    pub p_min: f64,
    pub p_max: f64,
    pub points: usize,
}

impl Default for PScan {
    fn default() -> Self {
        Self {
            p_min: 1.001,
            p_max: 1e4,
            points: 400,
        }
    }
}

/// First `(p, case)` on the scan grid where any condition holds. The scan
/// witnesses existence; soundness of a `None` rests on the exact
/// equivalence with [`check_reduced`], which the tests cross-validate.
pub fn exists_p(params: &ModelParams, scan: &PScan) -> Result<Option<(f64, Case)>, RegimesError> {
    require("p_min", scan.p_min, scan.p_min > 1.0, "> 1")?;
    require("p_max", scan.p_max, scan.p_max > scan.p_min, "> p_min")?;
    if scan.points < 2 {
        return Err(RegimesError::BadParameter {
            name: "points",
            value: scan.points as f64,
            constraint: ">= 2",
        });
    }
    let (lo, hi) = (scan.p_min.ln(), scan.p_max.ln());
    for i in 0..scan.points {
        let f = i as f64 / (scan.points - 1) as f64;
        let p = (lo + f * (hi - lo)).exp();
        let conds = check_p_conditions(params, p)?;
        if let Some(case) = conds.case() {
            return Ok(Some((p, case)));
        }
    }
    Ok(None)
}

/// Comparison condition pair from the earlier symmetric analysis; `None`
/// when a denominator `α(p²−1) − γp(p−1)` or `β(p²−1) − γp(p−1)` is
/// nonpositive and the condition is inapplicable.
pub fn check_xu(params: &ModelParams, p: f64) -> Result<Option<bool>, RegimesError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RegimesError::BadExponent { p });
    }
    let m = params;
    let p2m1 = p * p - 1.0;
    let gpterm = m.gamma * p * (p - 1.0);
    let den1 = m.alpha * p2m1 - gpterm;
    let den2 = m.beta * p2m1 - gpterm;
    if den1 <= 0.0 || den2 <= 0.0 {
        return Ok(None);
    }
    let num1 = m.d3 * m.mu1 * p * (p + 1.0) + m.d3 * m.a1 * m.mu1 * p * p + m.d3 * m.a2 * m.mu2 * p;
    let num2 = m.d3 * m.mu2 * p * (p + 1.0) + m.d3 * m.a2 * m.mu2 * p * p + m.d3 * m.a1 * m.mu1 * p;
    Ok(Some(m.chi1 > num1 / den1 && m.chi2 > num2 / den2))
}

/// Global-existence region of the zero-diffusion system (non-strict).
pub fn check_hhe_global(params: &ModelParams) -> bool {
    let m = params;
    m.chi1 / m.mu1 <= m.d3 * (1.0 / m.alpha).min(m.a1 / m.beta)
        && m.chi2 / m.mu2 <= m.d3 * (1.0 / m.beta).min(m.a2 / m.alpha)
}

/// Dimension-dependent boundedness condition used for comparison: true for
/// `n <= 2`, else two strict sensitivity bounds with factor `n d3/(n−2)`.
pub fn check_m2018(params: &ModelParams, n: u32) -> Result<bool, RegimesError> {
    require("n", n as f64, n >= 1, ">= 1")?;
    if n <= 2 {
        return Ok(true);
    }
    let m = params;
    let factor = n as f64 * m.d3 / (n as f64 - 2.0);
    Ok(m.chi1 / m.mu1 < factor * (1.0 / m.alpha).min(m.a1 / m.beta)
        && m.chi2 / m.mu2 < factor * (1.0 / m.beta).min(m.a2 / m.alpha))
}

/// Tilde-parameters of the signal-loop variant used for comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopParams {
    pub chi2t: f64,
    pub chi4t: f64,
    pub mu1t: f64,
    pub mu2t: f64,
    pub a1t: f64,
    pub a2t: f64,
}

/// The two loop-variant sensitivity inequalities at exponent `p`.
pub fn check_loop_conditions(lp: &LoopParams, p: f64) -> Result<bool, RegimesError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RegimesError::BadExponent { p });
    }
    let pf = p / (p - 1.0);
    let t2 = pf * (lp.mu1t + (lp.a1t * lp.mu1t * p + lp.a2t * lp.mu2t) / (p + 1.0));
    let t4 = pf * (lp.mu2t + (lp.a2t * lp.mu2t * p + lp.a1t * lp.mu1t) / (p + 1.0));
    Ok(lp.chi2t > t2 && lp.chi4t > t4)
}

/// How each species' competition cross term was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Cross coefficient is positive, the term is simply dropped.
    DropCross,
    /// Cross coefficient is nonpositive, the term is split by Young's
    /// inequality into the two `p+1` functionals.
    YoungSplit,
}

/// Combined coefficients of `∫u^{p+1}` and `∫v^{p+1}` in the growth
/// estimate of the monitored functional `∫u^p + ∫v^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupCoefficients {
    pub p: f64,
    pub eta: f64,
    pub coeff_u: f64,
    pub coeff_v: f64,
    pub case_used_u: Branch,
    pub case_used_v: Branch,
    /// `min(coeff_u, coeff_v)` evaluated at `eta = 0`.
    pub c_explicit: f64,
    /// `chi1 β (p−1)/(d3 p) − a1 μ1`, the u-branch selector.
    pub selector_u: f64,
    /// `chi2 α (p−1)/(d3 p) − a2 μ2`, the v-branch selector.
    pub selector_v: f64,
}

impl BlowupCoefficients {
    /// The condition case matching the selected branch pair.
    pub fn selected_case(&self) -> Case {
        match (self.case_used_u, self.case_used_v) {
            (Branch::DropCross, Branch::DropCross) => Case::C1,
            (Branch::DropCross, Branch::YoungSplit) => Case::C2,
            (Branch::YoungSplit, Branch::DropCross) => Case::C3,
            (Branch::YoungSplit, Branch::YoungSplit) => Case::C4,
        }
    }

    /// Distance of the selectors and η=0 coefficients from zero; tiny
    /// values mean branch selection or positivity sits on a rounding tie.
    pub fn boundary_margin(&self) -> f64 {
        let u0 = self.coeff_u + self.eta / self.p;
        let v0 = self.coeff_v + self.eta / self.p;
        self.selector_u
            .abs()
            .min(self.selector_v.abs())
            .min(u0.abs())
            .min(v0.abs())
    }
}

/// Branch-select and combine the coefficient algebra at exponent `p` and
/// slack `eta ≥ 0`.
pub fn blowup_coefficients(
    params: &ModelParams,
    p: f64,
    eta: f64,
) -> Result<BlowupCoefficients, RegimesError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RegimesError::BadExponent { p });
    }
    require("eta", eta, eta >= 0.0, ">= 0")?;
    let m = params;
    let pm1 = p - 1.0;
    let pp1 = p + 1.0;

    let selector_u = m.chi1 * m.beta * pm1 / (m.d3 * p) - m.a1 * m.mu1;
    let selector_v = m.chi2 * m.alpha * pm1 / (m.d3 * p) - m.a2 * m.mu2;
    let case_used_u = if selector_u > 0.0 {
        Branch::DropCross
    } else {
        Branch::YoungSplit
    };
    let case_used_v = if selector_v > 0.0 {
        Branch::DropCross
    } else {
        Branch::YoungSplit
    };

    let coefficients = |eta: f64| -> (f64, f64) {
        let main_u = match case_used_u {
            Branch::DropCross => m.chi1 * m.alpha * pm1 / (m.d3 * p) - m.mu1 - 2.0 * eta / (3.0 * p),
            Branch::YoungSplit => {
                m.chi1 * m.alpha * pm1 / (m.d3 * p) - m.mu1 + m.chi1 * m.beta * pm1 / (m.d3 * pp1)
                    - m.a1 * m.mu1 * p / pp1
                    - 2.0 * eta / (3.0 * p)
            }
        };
        let cross_v_from_u = match case_used_u {
            Branch::DropCross => -eta / (3.0 * p),
            Branch::YoungSplit => {
                m.chi1 * m.beta * pm1 / (m.d3 * p * pp1) - m.a1 * m.mu1 / pp1 - eta / (3.0 * p)
            }
        };
        let main_v = match case_used_v {
            Branch::DropCross => m.chi2 * m.beta * pm1 / (m.d3 * p) - m.mu2 - 2.0 * eta / (3.0 * p),
            Branch::YoungSplit => {
                m.chi2 * m.beta * pm1 / (m.d3 * p) - m.mu2 + m.chi2 * m.alpha * pm1 / (m.d3 * pp1)
                    - m.a2 * m.mu2 * p / pp1
                    - 2.0 * eta / (3.0 * p)
            }
        };
        let cross_u_from_v = match case_used_v {
            Branch::DropCross => -eta / (3.0 * p),
            Branch::YoungSplit => {
                m.chi2 * m.alpha * pm1 / (m.d3 * p * pp1) - m.a2 * m.mu2 / pp1 - eta / (3.0 * p)
            }
        };
        (main_u + cross_u_from_v, main_v + cross_v_from_u)
    };

    let (u0, v0) = coefficients(0.0);
    let (coeff_u, coeff_v) = coefficients(eta);
    Ok(BlowupCoefficients {
        p,
        eta,
        coeff_u,
        coeff_v,
        case_used_u,
        case_used_v,
        c_explicit: u0.min(v0),
        selector_u,
        selector_v,
    })
}

/// Inputs of the initial-data criterion. The embedding constant `B` is not
/// computable from the model coefficients, so it is an explicit input
/// (default 1) and the outcome reports both sides of the comparison for
/// sensitivity studies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriterionInputs {
    pub p: f64,
    /// Explicit growth coefficient C > 0.
    pub c_coeff: f64,
    /// Surrogate for the embedding constant B(p, η) > 0.
    pub b_embed: f64,
    /// Slack 0 < η < C; defaults to C/2.
    pub eta: f64,
    /// |Ω| of the domain the data live on.
    pub omega_measure: f64,
}

impl CriterionInputs {
    pub fn new(p: f64, c_coeff: f64, b_embed: f64, omega_measure: f64) -> Result<Self, RegimesError> {
        let inputs = Self {
            p,
            c_coeff,
            b_embed,
            eta: c_coeff / 2.0,
            omega_measure,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    /// Derive `C` from the coefficient algebra at `(params, p)`; fails when
    /// the explicit coefficient is nonpositive there.
    pub fn from_params(
        params: &ModelParams,
        p: f64,
        omega_measure: f64,
        b_embed: f64,
    ) -> Result<Self, RegimesError> {
        let c = blowup_coefficients(params, p, 0.0)?.c_explicit;
        if !(c > 0.0) {
            return Err(RegimesError::NonPositiveCoefficient { c, p });
        }
        Self::new(p, c, b_embed, omega_measure)
    }

    pub fn validate(&self) -> Result<(), RegimesError> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(RegimesError::BadExponent { p: self.p });
        }
        if !(self.c_coeff > 0.0) {
            return Err(RegimesError::NonPositiveCoefficient {
                c: self.c_coeff,
                p: self.p,
            });
        }
        require("b_embed", self.b_embed, self.b_embed > 0.0, "> 0")?;
        require("omega_measure", self.omega_measure, self.omega_measure > 0.0, "> 0")?;
        require(
            "eta",
            self.eta,
            self.eta > 0.0 && self.eta < self.c_coeff,
            "in (0, C)",
        )?;
        Ok(())
    }

    /// The threshold constant
    /// `C(p) = (2^{2+1/p} |Ω|^{1/p} B / C)^{1/(p+1)} · max(1, 2|Ω|)`.
    pub fn c_of_p(&self) -> f64 {
        let p = self.p;
        let base = 2.0f64.powf(2.0 + 1.0 / p) * self.omega_measure.powf(1.0 / p) * self.b_embed
            / self.c_coeff;
        base.powf(1.0 / (p + 1.0)) * 1.0f64.max(2.0 * self.omega_measure)
    }
}

/// Both sides of the initial-data comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriterionOutcome {
    pub holds: bool,
    /// `(∫u0^p + ∫v0^p)^{1/p}`.
    pub lhs: f64,
    /// `C(p) · max(1, ∫u0 + ∫v0)`.
    pub rhs: f64,
    pub c_of_p: f64,
}

/// Evaluate the initial-data criterion for concentration-driven growth.
pub fn initial_data_criterion(
    u0: &Field,
    v0: &Field,
    inputs: &CriterionInputs,
) -> Result<CriterionOutcome, RegimesError> {
    inputs.validate()?;
    if u0.min() < 0.0 || v0.min() < 0.0 {
        return Err(RegimesError::NegativeInitialData);
    }
    let p = inputs.p;
    let up = u0.lp_norm(p)?.powf(p);
    let vp = v0.lp_norm(p)?.powf(p);
    let lhs = (up + vp).powf(1.0 / p);
    let mass = u0.integrate()? + v0.integrate()?;
    let c_of_p = inputs.c_of_p();
    let rhs = c_of_p * 1.0f64.max(mass);
    Ok(CriterionOutcome {
        holds: lhs > rhs,
        lhs,
        rhs,
        c_of_p,
    })
}

fn validate_ode_params(a: f64, b: f64, d: f64, kappa: f64) -> Result<(), RegimesError> {
    require("a", a, a > 0.0, "> 0")?;
    require("b", b, b >= 0.0, ">= 0")?;
    require("d", d, d > 0.0, "> 0")?;
    require("kappa", kappa, kappa > 1.0, "> 1")
}

/// Closed-form bound on the time a nonnegative continuous `y` can satisfy
/// `y(t) ≥ a − b t + d ∫ y^κ`: when `a > (2b/d)^{1/κ}`, the lifetime is at
/// most `2 / ((κ−1) a^{κ−1} d)`. `None` when the entry criterion fails.
pub fn finite_time_bound(
    a: f64,
    b: f64,
    d: f64,
    kappa: f64,
) -> Result<Option<f64>, RegimesError> {
    validate_ode_params(a, b, d, kappa)?;
    if a > (2.0 * b / d).powf(1.0 / kappa) {
        Ok(Some(2.0 / ((kappa - 1.0) * a.powf(kappa - 1.0) * d)))
    } else {
        Ok(None)
    }
}

/// Controls for [`ode_blowup_oracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOracleConfig {
    /// Per-step relative growth target.
    pub rel_step: f64,
    /// Give up and report `None` beyond this time.
    pub horizon: f64,
    /// Level whose crossing counts as blow-up.
    pub z_max: f64,
}

impl Default for OdeOracleConfig {
    fn default() -> Self {
        Self {
            rel_step: 1e-3,
            horizon: 100.0,
            z_max: 1e12,
        }
    }
}

/// Integrate the extremal equation `z' = d z^κ − b`, `z(0) = a` with
/// adaptive RK4 and report the time `z` crosses `z_max`, or `None` if `z`
/// stays bounded up to the horizon. Independent of [`finite_time_bound`];
/// the two are checked against each other.
pub fn ode_blowup_oracle(
    a: f64,
    b: f64,
    d: f64,
    kappa: f64,
    cfg: &OdeOracleConfig,
) -> Result<Option<f64>, RegimesError> {
    validate_ode_params(a, b, d, kappa)?;
    require("rel_step", cfg.rel_step, cfg.rel_step > 0.0 && cfg.rel_step < 0.5, "in (0, 0.5)")?;
    require("horizon", cfg.horizon, cfg.horizon > 0.0, "> 0")?;
    require("z_max", cfg.z_max, cfg.z_max > a, "> a")?;

    // Phase line: below the positive root of d z^κ = b the derivative is
    // nonpositive and z can never escape.
    let root = if b > 0.0 { (b / d).powf(1.0 / kappa) } else { 0.0 };
    if a <= root {
        return Ok(None);
    }

    let f = |z: f64| d * z.powf(kappa) - b;
    let mut z = a;
    let mut t = 0.0;
    while t < cfg.horizon {
        if !z.is_finite() {
            return Ok(None);
        }
        if z >= cfg.z_max {
            return Ok(Some(t));
        }
        if z <= root {
            return Ok(None);
        }
        let slope = f(z);
        let dt = (cfg.rel_step * z / slope).min(0.05 * cfg.horizon);
        let k1 = slope;
        let k2 = f(z + 0.5 * dt * k1);
        let k3 = f(z + 0.5 * dt * k2);
        let k4 = f(z + dt * k3);
        z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
    }
    Ok(None)
}

/// Golden-section search for the maximum of a unimodal function on
/// `[lo, hi]`; returns the argmax and the maximum.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Everything the `regimes` command reports for one parameter point.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub p: f64,
    pub at_p: PConditions,
    pub exists_p: Option<(f64, Case)>,
    pub reduced: ReducedConditions,
    /// `None` when the comparison condition's denominators are nonpositive.
    pub xu: Option<bool>,
    pub hhe_global: bool,
    /// Present when a dimension was supplied.
    pub m2018_bounded: Option<bool>,
    /// Present when tilde parameters were supplied.
    pub loop_conditions: Option<bool>,
}

/// Assemble the full report at exponent `p`.
pub fn condition_report(
    params: &ModelParams,
    p: f64,
    n: Option<u32>,
    loop_params: Option<&LoopParams>,
    scan: &PScan,
) -> Result<ConditionReport, RegimesError> {
    Ok(ConditionReport {
        p,
        at_p: check_p_conditions(params, p)?,
        exists_p: exists_p(params, scan)?,
        reduced: check_reduced(params),
        xu: check_xu(params, p)?,
        hhe_global: check_hhe_global(params),
        m2018_bounded: match n {
            Some(n) => Some(check_m2018(params, n)?),
            None => None,
        },
        loop_conditions: match loop_params {
            Some(lp) => Some(check_loop_conditions(lp, p)?),
            None => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_with(f: impl FnOnce(&mut ModelParams)) -> ModelParams {
        let mut m = ModelParams::unit();
        f(&mut m);
        m
    }

    #[test]
    fn unit_reduction_of_p_conditions() {
        // With all-unit coefficients the four conditions collapse to
        // μ1 < (p−1)/p and μ2 < (p−1)/p, realized through case (i).
        let p = 4.0;
        let good = unit_with(|m| {
            m.mu1 = 0.5;
            m.mu2 = 0.5;
        });
        let conds = check_p_conditions(&good, p).unwrap();
        assert!(conds.c1 && conds.case() == Some(Case::C1));

        let bad = unit_with(|m| {
            m.mu1 = 0.8;
            m.mu2 = 0.8;
        });
        let conds = check_p_conditions(&bad, p).unwrap();
        assert!(!conds.any(), "{conds:?}");

        // Sweep μ against the exact reduction on a grid.
        for k in 1..20 {
            let mu = k as f64 * 0.05;
            let m = unit_with(|m| {
                m.mu1 = mu;
                m.mu2 = mu;
            });
            let expect = mu < (p - 1.0) / p;
            assert_eq!(check_p_conditions(&m, p).unwrap().any(), expect, "mu={mu}");
        }
        assert!(check_p_conditions(&good, 1.0).is_err());
    }

    #[test]
    fn c1_monotone_in_alpha() {
        // The c1 threshold max{1/α, a1/β} is non-increasing in α.
        let p = 3.0;
        let mut prev = false;
        for k in 0..60 {
            let alpha = 0.05 * (k + 1) as f64;
            let m = unit_with(|m| {
                m.alpha = alpha;
                m.mu1 = 0.6;
                m.mu2 = 0.4;
            });
            let now = check_p_conditions(&m, p).unwrap().c1;
            assert!(!prev || now, "c1 flipped true -> false at alpha={alpha}");
            prev = now;
        }
    }

    #[test]
    fn exists_p_examples() {
        // χ1 = χ2 = 1.5, rest unit: any p > 3 satisfies case (i).
        let m = unit_with(|m| {
            m.chi1 = 1.5;
            m.chi2 = 1.5;
        });
        let (p, case) = exists_p(&m, &PScan::default()).unwrap().unwrap();
        assert_eq!(case, Case::C1);
        assert!(p > 3.0, "p = {p}");
        assert!(check_p_conditions(&m, p).unwrap().c1);

        // χ1 = 0.9 < 1 kills every reduced condition.
        let m = unit_with(|m| {
            m.chi1 = 0.9;
            m.chi2 = 2.0;
        });
        assert!(exists_p(&m, &PScan::default()).unwrap().is_none());
        assert!(!check_reduced(&m).any());

        // A point built to satisfy reduced (ii) with ~10% margin.
        let m = unit_with(|m| {
            m.beta = 2.0;
            m.a1 = 0.3;
            m.chi1 = 1.2;
            m.chi2 = 0.75;
        });
        let red = check_reduced_scaled(&m, 1.1);
        assert!(red.r2 && !red.r1, "{red:?}");
        assert!(exists_p(&m, &PScan::default()).unwrap().is_some());
    }

    #[test]
    fn reduced_examples() {
        let m = unit_with(|m| {
            m.chi1 = 1.01;
            m.chi2 = 1.01;
        });
        assert!(check_reduced(&m).r1);

        let m = unit_with(|m| {
            m.chi1 = 1.01;
            m.chi2 = 0.99;
        });
        let red = check_reduced(&m);
        assert!(!red.any(), "{red:?}");

        // a1 = a2 = 2 with unit α, β: mixed thresholds are 1.5 and both
        // side ratios hold.
        let base = unit_with(|m| {
            m.a1 = 2.0;
            m.a2 = 2.0;
        });
        let low = unit_with(|m| {
            *m = base;
            m.chi1 = 0.8;
            m.chi2 = 0.8;
        });
        assert!(!check_reduced(&low).r4);
        let high = unit_with(|m| {
            *m = base;
            m.chi1 = 1.6;
            m.chi2 = 1.6;
        });
        assert!(check_reduced(&high).r4);
    }

    #[test]
    fn xu_condition_examples() {
        // Unit parameters reduce the pair to 1 − 1/p > μ1 + μ2 + 2p·max.
        let p = 1.0 + 2.0f64.sqrt();
        let m = unit_with(|m| {
            m.mu1 = 0.05;
            m.mu2 = 0.05;
        });
        assert_eq!(check_xu(&m, p).unwrap(), Some(true));
        let lhs = 1.0 - 1.0 / p;
        let rhs = 0.1 + 2.0 * p * 0.05;
        assert!((lhs - 0.586).abs() < 1e-3 && (rhs - 0.341).abs() < 1e-3);

        // μ1 + μ2 = 0.2 exceeds the feasibility cap ≈ 0.1716 for every p.
        let m = unit_with(|m| {
            m.mu1 = 0.1;
            m.mu2 = 0.1;
        });
        for i in 1..400 {
            let p = 1.0 + 0.05 * i as f64;
            assert_ne!(check_xu(&m, p).unwrap(), Some(true), "p={p}");
        }

        // Denominator guard: γ large makes the condition inapplicable.
        let m = unit_with(|m| m.gamma = 2.0);
        assert_eq!(check_xu(&m, 2.0).unwrap(), None);
    }

    #[test]
    fn feasibility_cap_via_golden_section() {
        let f = |p: f64| (p - 1.0) / (p * p + p);
        let (p_star, val) = golden_section_max(f, 1.0, 100.0, 1e-10);
        let exact = 2.0f64.sqrt() / (4.0 + 3.0 * 2.0f64.sqrt());
        assert!((val - exact).abs() < 1e-9, "val {val} vs {exact}");
        assert!((p_star - (1.0 + 2.0f64.sqrt())).abs() < 1e-6, "p* {p_star}");
    }

    #[test]
    fn hhe_global_examples() {
        assert!(check_hhe_global(&ModelParams::unit()));
        assert!(!check_hhe_global(&unit_with(|m| m.chi1 = 1.0001)));
        // a1 = 0 forces min{1/α, 0} = 0.
        assert!(!check_hhe_global(&unit_with(|m| m.a1 = 0.0)));
    }

    #[test]
    fn m2018_examples() {
        assert!(check_m2018(&ModelParams::unit(), 2).unwrap());
        let m = unit_with(|m| {
            m.chi1 = 2.0;
            m.chi2 = 2.0;
        });
        assert!(check_m2018(&m, 3).unwrap());
        let m = unit_with(|m| m.chi1 = 4.0);
        assert!(!check_m2018(&m, 3).unwrap());
        assert!(check_m2018(&ModelParams::unit(), 0).is_err());
    }

    #[test]
    fn loop_condition_examples() {
        let unit = LoopParams {
            chi2t: 2.1,
            chi4t: 2.1,
            mu1t: 1.0,
            mu2t: 1.0,
            a1t: 1.0,
            a2t: 1.0,
        };
        // Large p drives the threshold to 2, so 2.1 eventually passes.
        let found = (0..400).any(|i| {
            let p = (1.001f64.ln() + i as f64 / 399.0 * (1e4f64.ln() - 1.001f64.ln())).exp();
            check_loop_conditions(&unit, p).unwrap()
        });
        assert!(found);

        let low = LoopParams {
            chi2t: 1.5,
            chi4t: 1.5,
            ..unit
        };
        for i in 0..400 {
            let p = (1.001f64.ln() + i as f64 / 399.0 * (1e4f64.ln() - 1.001f64.ln())).exp();
            assert!(!check_loop_conditions(&low, p).unwrap());
        }

        // p = 2 threshold is 2(1 + 3/3) = 4.
        let near = LoopParams {
            chi2t: 3.9,
            chi4t: 3.9,
            ..unit
        };
        assert!(!check_loop_conditions(&near, 2.0).unwrap());
        let above = LoopParams {
            chi2t: 4.01,
            chi4t: 4.01,
            ..unit
        };
        assert!(check_loop_conditions(&above, 2.0).unwrap());
    }

    #[test]
    fn coefficient_example_and_eta_linearity() {
        let m = unit_with(|m| {
            m.mu1 = 0.5;
            m.mu2 = 0.5;
        });
        let bc = blowup_coefficients(&m, 4.0, 0.0).unwrap();
        assert_eq!(bc.case_used_u, Branch::DropCross);
        assert_eq!(bc.case_used_v, Branch::DropCross);
        assert!((bc.coeff_u - 0.25).abs() < 1e-14, "{}", bc.coeff_u);
        assert!((bc.coeff_v - 0.25).abs() < 1e-14);
        assert!((bc.c_explicit - 0.25).abs() < 1e-14);

        // Coefficients shrink linearly: 2η/(3p) on the main term plus
        // η/(3p) from the partner's cross term.
        let eta = bc.c_explicit;
        let at = blowup_coefficients(&m, 4.0, eta).unwrap();
        let p = 4.0;
        let drop = 2.0 * eta / (3.0 * p) + eta / (3.0 * p);
        assert!((at.coeff_u - (bc.coeff_u - drop)).abs() < 1e-12);
        assert!((at.coeff_v - (bc.coeff_v - drop)).abs() < 1e-12);
    }

    #[test]
    fn coefficients_match_conditions_on_sample_points() {
        // Positivity of both combined coefficients at η = 0 under the
        // selected branches is exactly the matching condition boolean.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut checked = 0;
        for _ in 0..2000 {
            let m = ModelParams {
                d1: 0.0,
                d2: 0.0,
                d3: 0.2 + 2.0 * next(),
                chi1: 3.0 * next(),
                chi2: 3.0 * next(),
                mu1: 2.0 * next(),
                mu2: 2.0 * next(),
                a1: 2.0 * next(),
                a2: 2.0 * next(),
                alpha: 0.2 + 2.0 * next(),
                beta: 0.2 + 2.0 * next(),
                gamma: 0.2 + 2.0 * next(),
            };
            let p = 1.0 + 4.0 * next().max(1e-3);
            let bc = blowup_coefficients(&m, p, 0.0).unwrap();
            if bc.boundary_margin() < 1e-9 || p_condition_margin(&m, p).unwrap() < 1e-9 {
                continue;
            }
            checked += 1;
            let conds = check_p_conditions(&m, p).unwrap();
            let positive = bc.coeff_u > 0.0 && bc.coeff_v > 0.0;
            let mut expect = [false; 4];
            expect[match bc.selected_case() {
                Case::C1 => 0,
                Case::C2 => 1,
                Case::C3 => 2,
                Case::C4 => 3,
            }] = positive;
            assert_eq!(conds.as_array(), expect, "params {m:?} p {p}");
        }
        assert!(checked > 1500, "only {checked} points away from boundaries");
    }

    #[test]
    fn criterion_examples() {
        let inputs = CriterionInputs::new(2.0, 2.0, 1.0, 1.0).unwrap();
        // C(2) = (2^{2.5}/2)^{1/3} · 2 = 2 √2.
        assert!((inputs.c_of_p() - 2.0 * 2.0f64.sqrt()).abs() < 1e-12);

        let g = crate::grid::GridSpec::line(64, 1.0).unwrap();
        // Constants can never pass once C(p) ≥ 2.
        for c in [0.1, 1.0, 10.0] {
            let u = Field::constant(g, c);
            let out = initial_data_criterion(&u, &u, &inputs).unwrap();
            assert!(!out.holds, "c = {c}: {out:?}");
        }

        // Concentration wins: unit mass on a shrinking patch.
        for frac in [0.25, 0.0625, 1.0 / 64.0] {
            let cells = (frac * 64.0).ceil() as usize;
            let height = 1.0 / (cells as f64 * g.dx());
            let lo = (64 - cells) / 2;
            let u = Field::from_fn(g, |x, _| {
                let i = (x / g.dx()) as usize;
                if (lo..lo + cells).contains(&i) {
                    height
                } else {
                    0.0
                }
            });
            let eps = cells as f64 * g.dx();
            let out = initial_data_criterion(&u, &Field::zeros(g), &inputs).unwrap();
            let expect_lhs = eps.powf(1.0 / 2.0 - 1.0);
            assert!((out.lhs - expect_lhs).abs() < 1e-9 * expect_lhs);
            assert_eq!(out.holds, expect_lhs > out.rhs);
        }
        // ε = 1/64 patch: lhs = 8 > 2√2.
        let out = {
            let height = 64.0;
            let u = Field::from_fn(g, |x, _| if (0.492..0.508).contains(&x) { height } else { 0.0 });
            initial_data_criterion(&u, &Field::zeros(g), &inputs).unwrap()
        };
        assert!(out.holds && (out.lhs - 8.0).abs() < 1e-9, "{out:?}");

        // Zero data always fail.
        let z = Field::zeros(g);
        let out = initial_data_criterion(&z, &z, &inputs).unwrap();
        assert!(!out.holds && out.lhs == 0.0 && (out.rhs - inputs.c_of_p()).abs() < 1e-12);
    }

    #[test]
    fn finite_time_bound_examples() {
        assert_eq!(finite_time_bound(1.0, 0.0, 1.0, 2.0).unwrap(), Some(2.0));
        assert_eq!(finite_time_bound(2.0, 1.0, 1.0, 2.0).unwrap(), Some(1.0));
        assert_eq!(finite_time_bound(1.0, 1.0, 1.0, 2.0).unwrap(), None);
        assert!(finite_time_bound(-1.0, 0.0, 1.0, 2.0).is_err());
        assert!(finite_time_bound(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ode_oracle_analytic_cases() {
        let cfg = OdeOracleConfig::default();
        // z' = z², z(0) = 1 escapes at t = 1.
        let t = ode_blowup_oracle(1.0, 0.0, 1.0, 2.0, &cfg).unwrap().unwrap();
        assert!((t - 1.0).abs() < 0.01, "t = {t}");
        // z' = z² − 1, z(0) = 2 escapes at t = ln(3)/2.
        let t = ode_blowup_oracle(2.0, 1.0, 1.0, 2.0, &cfg).unwrap().unwrap();
        let exact = 3.0f64.ln() / 2.0;
        assert!((t - exact).abs() < 0.01 * exact, "t = {t} vs {exact}");
        // Start at the equilibrium root: no escape.
        assert_eq!(ode_blowup_oracle(1.0, 1.0, 1.0, 2.0, &cfg).unwrap(), None);
    }

    #[test]
    fn report_is_assembled() {
        let m = unit_with(|m| {
            m.chi1 = 1.5;
            m.chi2 = 1.5;
        });
        let lp = LoopParams {
            chi2t: 2.5,
            chi4t: 2.5,
            mu1t: 1.0,
            mu2t: 1.0,
            a1t: 1.0,
            a2t: 1.0,
        };
        let rep = condition_report(&m, 4.0, Some(3), Some(&lp), &PScan::default()).unwrap();
        assert!(rep.exists_p.is_some());
        assert!(rep.reduced.r1);
        assert!(!rep.hhe_global);
        assert!(rep.m2018_bounded.is_some());
        assert!(rep.loop_conditions.is_some());
    }
}
