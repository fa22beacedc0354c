//! Certification at feasible points of the envelope reformulation
//!
//! `min F(x, y)  s.t.  G(x, y) <= 0,  g(x, y) <= 0,  f(x, y) - v_gamma(x, y) <= 0`.
//!
//! Lower-level multiplier sets, the critical cone, MFCQ / FOSCMS /
//! directional quasi-normality checks, LP searches for the sKKT and wcKKT
//! systems and the comparison with S-stationarity of the complementarity
//! reformulation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::envelope::{self, Anchor, DerivativeEstimate, Direction, EnvelopeError, Hypotheses, Regime};
use crate::expr::{self, EvalError};
use crate::inner::{self, InnerError};
use crate::linalg;
use crate::lp::{self, LpError, Polyhedron};
use crate::model::{self, ActiveSet, BilevelProblem, ModelError};
use crate::tol;

mod mpcc;
mod qn;
mod stationarity;

pub use mpcc::{compare_with_mpcc, s_multiplier_violation, verify_s_stationarity, MpccComparison, SStationarityReport};
pub use qn::{check_quasi_normality, QnVariant, SamplingPlan, POSITIVE_CONSTRAINT, POSITIVE_GAP};
pub use stationarity::{
    search_stationarity, verify_certificate, verify_stationarity, Branch, BranchOutcome, SMultipliers,
    StationarityCertificate, StationaritySearch, StationaritySystem,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("point is not feasible: {0}")]
    Infeasible(String),
    #[error("direction is not tangent to the active lower constraints")]
    NotTangent,
    #[error("invalid direction: {0}")]
    BadDirection(String),
    #[error("no envelope regime bounds the directional derivative: {0}")]
    RegimeUnavailable(String),
    #[error("wcKKT needs a direction in the critical cone: {0}")]
    NotCritical(String),
    #[error("infeasible triple: {0}")]
    InfeasibleTriple(String),
}

/// Constraint violations at `(x, y)` for the envelope reformulation.
#[derive(Debug, Clone, PartialEq)]
pub struct VpFeasibility {
    pub upper_violation: f64,
    pub lower_violation: f64,
    /// `f(x, y) - v_gamma(x, y)`, nonnegative up to solver accuracy.
    pub value_gap: f64,
    pub f: f64,
}

impl VpFeasibility {
    pub fn is_feasible(&self) -> bool {
        self.upper_violation <= tol::ACTIVE
            && self.lower_violation <= tol::ACTIVE
            && self.value_gap <= tol::ACTIVE * (1.0 + self.f.abs())
    }
}

pub fn vp_feasibility(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<VpFeasibility, CertifyError> {
    let p = prob.point(x, y)?;
    let big_g = model::values(&prob.upper_constraints, &p)?;
    let g = model::values(&prob.lower_constraints, &p)?;
    let viol = |v: &[f64]| v.iter().copied().fold(0.0f64, f64::max);
    let f = prob.lower_objective.eval(&p)?;
    let lower_violation = viol(&g);
    let value_gap = if lower_violation <= tol::ACTIVE {
        f - inner::solve_inner(prob, x, y)?.value
    } else {
        f64::INFINITY
    };
    Ok(VpFeasibility {
        upper_violation: viol(&big_g),
        lower_violation,
        value_gap,
        f,
    })
}

pub(crate) fn require_feasible(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<VpFeasibility, CertifyError> {
    let feas = vp_feasibility(prob, x, y)?;
    if !feas.is_feasible() {
        return Err(CertifyError::Infeasible(format!(
            "max G = {:e}, max g = {:e}, f - v_gamma = {:e}",
            feas.upper_violation, feas.lower_violation, feas.value_gap
        )));
    }
    Ok(feas)
}

pub(crate) fn check_direction(prob: &BilevelProblem, d: &Direction) -> Result<(), CertifyError> {
    if d.u.len() != prob.n || d.v.len() != prob.m {
        return Err(CertifyError::BadDirection(format!(
            "expected |u| = {}, |v| = {}",
            prob.n, prob.m
        )));
    }
    if !d.is_finite() {
        return Err(CertifyError::BadDirection("non-finite entry".into()));
    }
    Ok(())
}

/// Tolerance for deciding the sign of `row . d`.
pub(crate) fn row_tol(row: &[f64], d: &[f64]) -> f64 {
    tol::CERT * (1.0 + linalg::norm_inf(row)) * linalg::norm_inf(d)
}

/// First-order data of both levels at a feasible point.
#[derive(Debug, Clone)]
pub(crate) struct PointData {
    pub grad_upper_obj: Vec<f64>,
    pub upper: Vec<f64>,
    pub grad_upper: Vec<Vec<f64>>,
    pub upper_active: ActiveSet,
    pub lower: Vec<f64>,
    pub grad_lower: Vec<Vec<f64>>,
    pub lower_active: ActiveSet,
    pub grad_f: Vec<f64>,
}

impl PointData {
    pub fn new(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<Self, CertifyError> {
        let p = prob.point(x, y)?;
        let upper = model::values(&prob.upper_constraints, &p)?;
        let lower = model::values(&prob.lower_constraints, &p)?;
        Ok(PointData {
            grad_upper_obj: expr::gradient(&prob.upper_objective, &p)?,
            upper_active: model::active_set_from_values(&upper, tol::ACTIVE)?,
            grad_upper: model::jacobian(&prob.upper_constraints, &p)?,
            upper,
            lower_active: model::active_set_from_values(&lower, tol::ACTIVE)?,
            grad_lower: model::jacobian(&prob.lower_constraints, &p)?,
            lower,
            grad_f: expr::gradient(&prob.lower_objective, &p)?,
        })
    }
}

/// `Lambda(x, y)` or its directional version `Lambda(x, y; u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    /// `{ lambda >= 0 : grad_y f + grad_y g^T lambda = 0, lambda_i = 0 off the active set }`.
    pub base: Polyhedron,
    pub active: ActiveSet,
    /// Active indices whose multiplier the direction forces to zero.
    pub directional_zeros: Vec<usize>,
}

impl MultiplierSet {
    pub fn polyhedron(&self) -> Polyhedron {
        let mut poly = self.base.clone();
        for &i in &self.directional_zeros {
            poly.fix(i, 0.0);
        }
        poly
    }

    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, LpError> {
        lp::vertices(&self.polyhedron())
    }

    pub fn contains(&self, lambda: &[f64], tol: f64) -> bool {
        lambda.len() == self.base.num_vars && self.polyhedron().contains(lambda, tol)
    }

    pub fn is_empty(&self) -> Result<bool, LpError> {
        Ok(lp::lp_feasible(&self.polyhedron())?.status != lp::LpStatus::Optimal)
    }
}

/// Active indices `i` with `grad g_i . d < 0`; `None` if some active row is
/// positive along `d`.
pub(crate) fn strict_rows(rows: &[Vec<f64>], active: &ActiveSet, d: &[f64]) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for &i in &active.indices {
        let s = linalg::dot(&rows[i], d);
        let t = row_tol(&rows[i], d);
        if s > t {
            return None;
        }
        if s < -t {
            out.push(i);
        }
    }
    Some(out)
}

pub fn lower_multiplier_set(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: Option<&Direction>,
) -> Result<MultiplierSet, CertifyError> {
    let a = Anchor::at_feasible(prob, x, y).map_err(lower_infeasible)?;
    let mut set = MultiplierSet {
        base: a.multipliers(),
        active: a.active.clone(),
        directional_zeros: Vec::new(),
    };
    if let Some(d) = d {
        check_direction(prob, d)?;
        set.directional_zeros = strict_rows(&a.grad_g, &a.active, &d.concat()).ok_or(CertifyError::NotTangent)?;
    }
    Ok(set)
}

fn lower_infeasible(e: EnvelopeError) -> CertifyError {
    match e {
        EnvelopeError::Model(ModelError::Infeasible { violated, values }) => CertifyError::Infeasible(format!(
            "lower constraints {:?} violated: {:?}",
            violated.iter().map(|i| i + 1).collect::<Vec<_>>(),
            values
        )),
        e => e.into(),
    }
}

/// Envelope derivative bounds along `d` from the first regime whose
/// hypotheses are available, tried in the order weakly convex, Dini, RCR.
pub(crate) fn derivative_bounds(
    prob: &BilevelProblem,
    a: &Anchor,
    d: &Direction,
    hyp: &Hypotheses,
    first: Option<Regime>,
) -> Result<DerivativeEstimate, CertifyError> {
    let mut order = Vec::with_capacity(4);
    order.extend(first);
    for r in [Regime::WeaklyConvex, Regime::Dini, Regime::Rcr] {
        if !order.contains(&r) {
            order.push(r);
        }
    }
    let mut reasons = Vec::new();
    for r in order {
        match envelope::dir_derivative_at(prob, a, d, r, hyp) {
            Ok(est) => return Ok(est),
            Err(e @ EnvelopeError::Precondition { .. }) => reasons.push(format!("{}", e)),
            Err(e) => return Err(e.into()),
        }
    }
    Err(CertifyError::RegimeUnavailable(reasons.join("; ")))
}

/// One inequality of the critical cone, `value <= bound` up to `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRow {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalConeReport {
    pub member: bool,
    pub rows: Vec<ConeRow>,
    pub derivative: DerivativeEstimate,
}

impl CriticalConeReport {
    pub fn failing(&self) -> impl Iterator<Item = &ConeRow> {
        self.rows.iter().filter(|r| !r.holds)
    }
}

/// Membership of `d` in the critical cone of the envelope reformulation.
pub fn in_critical_cone(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    hyp: &Hypotheses,
) -> Result<CriticalConeReport, CertifyError> {
    check_direction(prob, d)?;
    require_feasible(prob, x, y)?;
    let pd = PointData::new(prob, x, y)?;
    let a = Anchor::at_feasible(prob, x, y)?;
    critical_cone_at(prob, &pd, &a, d, hyp)
}

pub(crate) fn critical_cone_at(
    prob: &BilevelProblem,
    pd: &PointData,
    a: &Anchor,
    d: &Direction,
    hyp: &Hypotheses,
) -> Result<CriticalConeReport, CertifyError> {
    let dz = d.concat();
    let mut rows = Vec::new();
    let mut push = |label: String, row: &[f64], bound: f64| {
        let value = linalg::dot(row, &dz);
        let tolerance = row_tol(row, &dz);
        rows.push(ConeRow {
            label,
            value,
            bound,
            tolerance,
            holds: value <= bound + tolerance,
        });
    };
    push("grad F . d".into(), &pd.grad_upper_obj, 0.0);
    for &i in &pd.upper_active.indices {
        push(format!("grad G{} . d", i + 1), &pd.grad_upper[i], 0.0);
    }
    for &i in &pd.lower_active.indices {
        push(format!("grad g{} . d", i + 1), &pd.grad_lower[i], 0.0);
    }
    let derivative = derivative_bounds(prob, a, d, hyp, None)?;
    let fd = linalg::dot(&pd.grad_f, &dz);
    let t = tol::CERT
        * (1.0 + linalg::norm_inf(&pd.grad_f) + derivative.lower.abs().max(derivative.upper.abs()))
        * linalg::norm_inf(&dz).max(1.0);
    rows.push(ConeRow {
        label: "v'_lower - grad f . d".into(),
        value: derivative.lower - fd,
        bound: 0.0,
        tolerance: t,
        holds: derivative.lower - fd <= t,
    });
    rows.push(ConeRow {
        label: "grad f . d - v'_upper".into(),
        value: fd - derivative.upper,
        bound: 0.0,
        tolerance: t,
        holds: fd - derivative.upper <= t,
    });
    Ok(CriticalConeReport {
        member: rows.iter().all(|r| r.holds),
        rows,
        derivative,
    })
}

/// Which constraint qualification a [`CqReport`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqCheck {
    Mfcq,
    FoscmsDirection,
    QuasiNormalityDirection,
}

impl CqCheck {
    pub fn as_str(self) -> &'static str {
        match self {
            CqCheck::Mfcq => "mfcq",
            CqCheck::FoscmsDirection => "foscms-direction",
            CqCheck::QuasiNormalityDirection => "quasi-normality-direction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CqVerdict {
    Holds,
    Fails,
    /// Nonzero abnormal multipliers exist but no sampled sequence activates
    /// their support.
    CertificateModuloSampling,
    UncheckedHypothesis,
}

impl CqVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CqVerdict::Holds => "holds",
            CqVerdict::Fails => "fails",
            CqVerdict::CertificateModuloSampling => "certificate-modulo-sampling",
            CqVerdict::UncheckedHypothesis => "unchecked-hypothesis",
        }
    }

    /// The qualification holds, possibly only in evidence.
    pub fn is_positive(self) -> bool {
        matches!(self, CqVerdict::Holds | CqVerdict::CertificateModuloSampling)
    }
}

/// Best probe at one sampling level for one multiplier support.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingEvidence {
    pub support: Vec<String>,
    pub t: f64,
    pub direction: Vec<f64>,
    /// Values of the support's functions at the probe, in support order.
    pub values: Vec<f64>,
    pub realized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqReport {
    pub check: CqCheck,
    pub verdict: CqVerdict,
    /// Names of the witness coordinates.
    pub labels: Vec<String>,
    pub lp_witnesses: Vec<Vec<f64>>,
    pub sampling_evidence: Vec<SamplingEvidence>,
    pub marginal: bool,
    pub notes: Vec<String>,
}

fn lambda_labels(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("lambda{}", i)).collect()
}

fn y_rows(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r[n..].to_vec()).collect()
}

/// MFCQ for `g(x, .) <= 0` at `y`.
pub fn check_mfcq(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<CqReport, CertifyError> {
    let p = prob.point(x, y)?;
    let g = model::values(&prob.lower_constraints, &p)?;
    let active = model::active_set_from_values(&g, tol::ACTIVE)?;
    let rows = y_rows(&model::jacobian(&prob.lower_constraints, &p)?, prob.n);
    let cone = envelope::mfcq_cone(&rows, &active)?;
    Ok(cone_report(CqCheck::Mfcq, cone, lambda_labels(prob.p()), Vec::new()))
}

fn cone_report(check: CqCheck, cone: lp::ConeVerdict, labels: Vec<String>, notes: Vec<String>) -> CqReport {
    CqReport {
        check,
        verdict: if cone.only_zero { CqVerdict::Holds } else { CqVerdict::Fails },
        labels,
        lp_witnesses: cone.witness.into_iter().collect(),
        sampling_evidence: Vec::new(),
        marginal: cone.marginal,
        notes,
    }
}

/// FOSCMS for `g(x, .) <= 0` at `y` in direction `grad g(x, y) (u, v)`: no
/// nonzero `lambda >= 0` on the active set with `grad_y g^T lambda = 0` that
/// is orthogonal to the direction.
pub fn check_foscms(prob: &BilevelProblem, x: &[f64], y: &[f64], d: &Direction) -> Result<CqReport, CertifyError> {
    check_direction(prob, d)?;
    let p = prob.point(x, y)?;
    let g = model::values(&prob.lower_constraints, &p)?;
    let active = model::active_set_from_values(&g, tol::ACTIVE)?;
    let jac = model::jacobian(&prob.lower_constraints, &p)?;
    let dz = d.concat();
    let mut kept = Vec::new();
    let mut notes = Vec::new();
    for &i in &active.indices {
        let s = linalg::dot(&jac[i], &dz);
        if s.abs() <= row_tol(&jac[i], &dz) {
            kept.push(i);
        } else {
            notes.push(format!("lambda{} = 0 since grad g{} . d = {:e}", i + 1, i + 1, s));
        }
    }
    let reduced = ActiveSet {
        indices: kept,
        tolerance: active.tolerance,
    };
    let cone = envelope::mfcq_cone(&y_rows(&jac, prob.n), &reduced)?;
    Ok(cone_report(CqCheck::FoscmsDirection, cone, lambda_labels(prob.p()), notes))
}
