//! Moreau envelope `v_gamma(x, y)`: values, the y-gradient, directional
//! derivatives under three sets of hypotheses, subdifferential estimates,
//! finite-difference oracles and a sampled weak-convexity test.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{self, EvalPoint};
use crate::inner::{self, InnerError, InnerOptions, InnerSolution};
use crate::linalg;
use crate::lp::{self, LpError, LpStatus, Polyhedron, Sense};
use crate::model::{self, ActiveSet, BilevelProblem, ConstraintConvexity, ObjectiveConvexity};
use crate::tol;

/// A direction `(u, v)` in `R^n x R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Direction {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        Direction { u, v }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Direction {
            u: vec![0.0; n],
            v: vec![0.0; m],
        }
    }

    /// Splits a concatenated `(u, v)`.
    pub fn from_concat(d: &[f64], n: usize) -> Self {
        Direction {
            u: d[..n].to_vec(),
            v: d[n..].to_vec(),
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut d = self.u.clone();
        d.extend_from_slice(&self.v);
        d
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|c| *c == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|c| c.is_finite())
    }

    pub fn scaled(&self, t: f64) -> Self {
        Direction {
            u: self.u.iter().map(|c| c * t).collect(),
            v: self.v.iter().map(|c| c * t).collect(),
        }
    }
}

/// Which sensitivity result backs a directional derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Joint weak convexity of f, joint quasiconvexity of g, Guignard CQ.
    WeaklyConvex,
    /// MFCQ or FOSCMS for `g(x, .)` at the proximal point: Dini bounds.
    Dini,
    /// RCR regularity plus directional Robinson stability.
    Rcr,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::WeaklyConvex => "weakly-convex",
            Regime::Dini => "dini",
            Regime::Rcr => "rcr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weakly-convex" | "wc" => Some(Regime::WeaklyConvex),
            "dini" => Some(Regime::Dini),
            "rcr" => Some(Regime::Rcr),
            _ => None,
        }
    }
}

/// Hypotheses the caller asserts rather than have checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Hypotheses {
    pub guignard: bool,
    pub foscms: bool,
    pub rcr: bool,
    pub rs: bool,
    pub mscq: bool,
    pub inner_calm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    ExactFormula,
    Bounds,
    FiniteDifference,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::ExactFormula => "exact-formula",
            EstimateKind::Bounds => "bounds",
            EstimateKind::FiniteDifference => "finite-difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub kind: EstimateKind,
    pub lower: f64,
    pub upper: f64,
    /// The value for exact formulas, the extrapolated quotient for finite
    /// differences, the midpoint for bounds.
    pub estimate: f64,
    /// `None` for the finite-difference oracle.
    pub regime: Option<Regime>,
    /// Multipliers attaining `lower` and `upper`.
    pub witnesses: Vec<Vec<f64>>,
    /// `(t, quotient)` pairs of the finite-difference oracle.
    pub quotients: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Eval(#[from] expr::EvalError),
    #[error("multiplier set of the proximal problem is empty")]
    EmptyMultiplierSet,
    #[error("multiplier set is unbounded along the objective")]
    UnboundedMultipliers,
    #[error("{regime} regime unavailable: {reason}")]
    Precondition { regime: &'static str, reason: String },
    #[error("direction is not tangent to the lower constraints")]
    NotTangent,
    #[error("invalid direction: {0}")]
    BadDirection(String),
    #[error("set of critical directions is empty")]
    EmptyCriticalDirections,
}

/// First-order data of the lower level at `(x, y)` and its proximal point.
#[derive(Debug, Clone)]
pub(crate) struct Anchor {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub y: Vec<f64>,
    pub sol: InnerSolution,
    /// `grad_x f(x, w)`.
    pub fx: Vec<f64>,
    /// `grad_w f(x, w) + (w - y) / gamma`.
    pub phi_w: Vec<f64>,
    /// Full `(x, w)` gradients of the lower constraints at `(x, w)`.
    pub grad_g: Vec<Vec<f64>>,
    pub active: ActiveSet,
}

impl Anchor {
    pub fn new(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<Self, EnvelopeError> {
        let sol = inner::solve_inner(prob, x, y)?;
        Self::at(prob, x, y, sol)
    }

    pub fn at(prob: &BilevelProblem, x: &[f64], y: &[f64], sol: InnerSolution) -> Result<Self, EnvelopeError> {
        let n = prob.n;
        let p = EvalPoint::new(x.to_vec(), sol.w.clone());
        let gf = expr::gradient(&prob.lower_objective, &p)?;
        let mut phi_w = gf[n..].to_vec();
        for j in 0..prob.m {
            phi_w[j] += (sol.w[j] - y[j]) / prob.gamma;
        }
        let grad_g = model::jacobian(&prob.lower_constraints, &p)?;
        let active = sol.active.clone();
        Ok(Anchor {
            n,
            m: prob.m,
            gamma: prob.gamma,
            y: y.to_vec(),
            fx: gf[..n].to_vec(),
            phi_w,
            grad_g,
            active,
            sol,
        })
    }

    /// Anchor at a point where the proximal point is `y` itself, as at any
    /// feasible point of the envelope reformulation.
    pub fn at_feasible(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<Self, EnvelopeError> {
        let p = EvalPoint::new(x.to_vec(), y.to_vec());
        let g = model::values(&prob.lower_constraints, &p)?;
        let active = model::active_set_from_values(&g, tol::ACTIVE)?;
        let sol = InnerSolution {
            w: y.to_vec(),
            value: prob.lower_objective.eval(&p)?,
            lambda: vec![0.0; g.len()],
            kkt_residual: 0.0,
            active,
            iterations: 0,
            multiplier_set_empty: false,
        };
        Self::at(prob, x, y, sol)
    }

    pub fn p(&self) -> usize {
        self.grad_g.len()
    }

    /// `(y - w) / gamma`.
    pub fn grad_y(&self) -> Vec<f64> {
        (0..self.m).map(|j| (self.y[j] - self.sol.w[j]) / self.gamma).collect()
    }

    /// `Lambda(x, y, w)`.
    pub fn multipliers(&self) -> Polyhedron {
        let p = self.p();
        let mut poly = Polyhedron::nonnegative(p);
        for j in 0..self.m {
            let row: Vec<f64> = (0..p).map(|i| self.grad_g[i][self.n + j]).collect();
            poly.add_eq(row, -self.phi_w[j]);
        }
        for i in 0..p {
            if !self.active.contains(i) {
                poly.fix(i, 0.0);
            }
        }
        poly
    }

    /// `Lambda(x, y, w; u, d)`: multipliers vanishing on active constraints
    /// whose linearization is strictly negative along `(u, d)`. `None` when
    /// `(u, d)` leaves the linearized feasible set.
    pub fn directional_multipliers(&self, u: &[f64], d: &[f64]) -> Option<Polyhedron> {
        let mut dir = u.to_vec();
        dir.extend_from_slice(d);
        let scale = linalg::norm_inf(&dir);
        let mut poly = self.multipliers();
        for &i in &self.active.indices {
            let row = &self.grad_g[i];
            let s = linalg::dot(row, &dir);
            let t = tol::FEAS * (1.0 + linalg::norm_inf(row)) * scale;
            if s > t {
                return None;
            }
            if s < -t {
                poly.fix(i, 0.0);
            }
        }
        Some(poly)
    }

    /// Coefficients `c` with `grad_x L(lambda) u = fx.u + c.lambda`.
    pub fn x_coefficients(&self, u: &[f64]) -> Vec<f64> {
        self.grad_g.iter().map(|r| linalg::dot(&r[..self.n], u)).collect()
    }

    /// `(grad_x f + grad_x g^T lambda, (y - w)/gamma)`.
    pub fn subgradient(&self, lambda: &[f64]) -> Vec<f64> {
        let mut xi = self.fx.clone();
        for (i, l) in lambda.iter().enumerate() {
            if *l != 0.0 {
                linalg::axpy(*l, &self.grad_g[i][..self.n], &mut xi);
            }
        }
        xi.extend(self.grad_y());
        xi
    }

    /// MFCQ for `g(x, .) <= 0` at `w`.
    pub fn mfcq_w(&self) -> Result<bool, EnvelopeError> {
        let rows: Vec<Vec<f64>> = self.grad_g.iter().map(|r| r[self.n..].to_vec()).collect();
        Ok(mfcq_holds(&rows, &self.active)?)
    }

    /// MFCQ for the joint system `g(x, w) <= 0` at `(x, w)`.
    pub fn mfcq_joint(&self) -> Result<bool, EnvelopeError> {
        Ok(mfcq_holds(&self.grad_g, &self.active)?)
    }

    /// Min and max of `grad_x L(lambda) u` over `poly`, with the attaining
    /// multipliers.
    pub fn extremes(&self, poly: &Polyhedron, u: &[f64]) -> Result<Extremes, EnvelopeError> {
        let c = self.x_coefficients(u);
        let base = linalg::dot(&self.fx, u);
        let hi = lp::lp_optimize(&c, poly, Sense::Max)?;
        let lo = lp::lp_optimize(&c, poly, Sense::Min)?;
        for o in [&hi, &lo] {
            match o.status {
                LpStatus::Infeasible => return Err(EnvelopeError::EmptyMultiplierSet),
                LpStatus::Unbounded => return Err(EnvelopeError::UnboundedMultipliers),
                LpStatus::Optimal => {}
            }
        }
        Ok(Extremes {
            min: base + lo.value,
            max: base + hi.value,
            argmin: lo.witness,
            argmax: hi.witness,
        })
    }
}

pub(crate) struct Extremes {
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
}

/// No nonzero `lambda >= 0` supported on `active` with `sum lambda_i rows_i = 0`.
pub(crate) fn mfcq_holds(rows: &[Vec<f64>], active: &ActiveSet) -> Result<bool, LpError> {
    Ok(mfcq_cone(rows, active)?.only_zero)
}

pub(crate) fn mfcq_cone(rows: &[Vec<f64>], active: &ActiveSet) -> Result<lp::ConeVerdict, LpError> {
    let p = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    let mut poly = Polyhedron::nonnegative(p);
    for j in 0..dim {
        poly.add_eq((0..p).map(|i| rows[i][j]).collect(), 0.0);
    }
    for i in 0..p {
        if !active.contains(i) {
            poly.fix(i, 0.0);
        }
    }
    lp::cone_only_zero(&poly)
}

fn check_direction(prob: &BilevelProblem, d: &Direction) -> Result<(), EnvelopeError> {
    if d.u.len() != prob.n || d.v.len() != prob.m {
        return Err(EnvelopeError::BadDirection(format!(
            "expected |u| = {}, |v| = {}",
            prob.n, prob.m
        )));
    }
    if !d.is_finite() {
        return Err(EnvelopeError::BadDirection("non-finite entry".into()));
    }
    Ok(())
}

/// `grad_y v_gamma(x, y) = (y - w) / gamma`.
pub fn grad_y_envelope(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<Vec<f64>, EnvelopeError> {
    let sol = inner::solve_inner(prob, x, y)?;
    Ok((0..prob.m).map(|j| (y[j] - sol.w[j]) / prob.gamma).collect())
}

/// Envelope value `v_gamma(x, y)`.
pub fn envelope_value(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<f64, EnvelopeError> {
    Ok(inner::solve_inner(prob, x, y)?.value)
}

fn precondition(regime: Regime, reason: &str) -> EnvelopeError {
    EnvelopeError::Precondition {
        regime: regime.as_str(),
        reason: reason.into(),
    }
}

/// Directional derivative of `v_gamma` at `(x, y)` along `d` under `regime`.
///
/// The regime's hypotheses are checked where a sufficient condition is
/// machine-checkable and otherwise taken from `hyp`; the call refuses when
/// neither applies.
pub fn dir_derivative(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    regime: Regime,
    hyp: &Hypotheses,
) -> Result<DerivativeEstimate, EnvelopeError> {
    check_direction(prob, d)?;
    let a = Anchor::new(prob, x, y)?;
    dir_derivative_at(prob, &a, d, regime, hyp)
}

pub(crate) fn dir_derivative_at(
    prob: &BilevelProblem,
    a: &Anchor,
    d: &Direction,
    regime: Regime,
    hyp: &Hypotheses,
) -> Result<DerivativeEstimate, EnvelopeError> {
    let mut notes = Vec::new();
    let affine = prob.lower_constraints_affine();
    match regime {
        Regime::WeaklyConvex => {
            if prob.f_convexity != ObjectiveConvexity::JointlyWeaklyConvex {
                return Err(precondition(regime, "f is not declared jointly weakly convex"));
            }
            if prob.g_convexity != ConstraintConvexity::JointlyQuasiconvex && !affine {
                return Err(precondition(regime, "g is not declared jointly quasiconvex"));
            }
            if !(hyp.guignard || affine || a.mfcq_joint()?) {
                return Err(precondition(
                    regime,
                    "Guignard CQ neither asserted nor implied by affine g or joint MFCQ",
                ));
            }
        }
        Regime::Dini => {
            if !a.mfcq_w()? {
                if !hyp.foscms {
                    return Err(precondition(regime, "MFCQ fails at w and FOSCMS is not asserted"));
                }
                let gxu: f64 = a
                    .active
                    .indices
                    .iter()
                    .map(|&i| linalg::dot(&a.grad_g[i][..a.n], &d.u).abs())
                    .fold(0.0, f64::max);
                if gxu <= tol::CERT {
                    notes.push("unchecked hypothesis: FOSCMS variant with grad_x g u = 0".into());
                } else {
                    notes.push("FOSCMS asserted; MFCQ fails at w".into());
                }
            }
        }
        Regime::Rcr => {
            if !(hyp.rcr || affine) {
                return Err(precondition(regime, "RCR regularity neither asserted nor implied by affine g"));
            }
            if !(hyp.rs || a.mfcq_w()?) {
                return Err(precondition(regime, "RS neither asserted nor implied by MFCQ"));
            }
        }
    }
    if a.sol.multiplier_set_empty {
        return Err(EnvelopeError::EmptyMultiplierSet);
    }
    let lam = a.multipliers();
    let yv = linalg::dot(&d.v, &a.grad_y());
    let ext = a.extremes(&lam, &d.u)?;
    let (lower, upper, witnesses, kind) = match regime {
        Regime::WeaklyConvex => {
            // Support function of the subdifferential; the directional
            // multiplier set, when usable, must attain the same maximum.
            if let Some(dl) = a.directional_multipliers(&d.u, &d.v) {
                if let Ok(de) = a.extremes(&dl, &d.u) {
                    if (de.max - ext.max).abs() > tol::CERT * (1.0 + ext.max.abs()) {
                        notes.push(format!(
                            "directional multiplier set gives {} instead of {}",
                            de.max + yv,
                            ext.max + yv
                        ));
                    }
                }
            } else {
                notes.push("direction not tangent at w; full multiplier set used".into());
            }
            (ext.max + yv, ext.max + yv, vec![ext.argmax], EstimateKind::ExactFormula)
        }
        Regime::Rcr => (ext.max + yv, ext.max + yv, vec![ext.argmax], EstimateKind::ExactFormula),
        Regime::Dini => {
            let exact = ext.max - ext.min <= tol::CERT * (1.0 + ext.max.abs());
            if exact {
                (ext.max + yv, ext.max + yv, vec![ext.argmax], EstimateKind::ExactFormula)
            } else {
                (
                    ext.min + yv,
                    ext.max + yv,
                    vec![ext.argmin, ext.argmax],
                    EstimateKind::Bounds,
                )
            }
        }
    };
    Ok(DerivativeEstimate {
        kind,
        lower,
        upper,
        estimate: 0.5 * (lower + upper),
        regime: Some(regime),
        witnesses,
        quotients: Vec::new(),
        notes,
    })
}

pub const DEFAULT_FD_STEPS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// One-sided difference quotients of `v_gamma` along `d`.
///
/// Reports the range of the last three quotients and a Richardson
/// extrapolation from the last two steps.
pub fn fd_dir_derivative(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    steps: &[f64],
) -> Result<DerivativeEstimate, EnvelopeError> {
    check_direction(prob, d)?;
    if steps.is_empty() || steps.iter().any(|t| !(*t > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EnvelopeError::BadDirection("steps must be positive and decreasing".into()));
    }
    let fd = |lower: f64, upper: f64, estimate: f64, quotients: Vec<(f64, f64)>| DerivativeEstimate {
        kind: EstimateKind::FiniteDifference,
        lower,
        upper,
        estimate,
        regime: None,
        witnesses: Vec::new(),
        quotients,
        notes: Vec::new(),
    };
    if d.is_zero() {
        return Ok(fd(0.0, 0.0, 0.0, steps.iter().map(|t| (*t, 0.0)).collect()));
    }
    let opts = InnerOptions::probe();
    let base = inner::solve_inner_with(prob, x, y, &opts)?;
    let mut quotients = Vec::with_capacity(steps.len());
    for &t in steps {
        let xt: Vec<f64> = x.iter().zip(&d.u).map(|(a, b)| a + t * b).collect();
        let yt: Vec<f64> = y.iter().zip(&d.v).map(|(a, b)| a + t * b).collect();
        let warm = InnerOptions {
            start: Some(base.w.clone()),
            ..opts.clone()
        };
        let s = inner::solve_inner_with(prob, &xt, &yt, &warm)?;
        quotients.push((t, (s.value - base.value) / t));
    }
    let tail = &quotients[quotients.len().saturating_sub(3)..];
    let lower = tail.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let upper = tail.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let estimate = if quotients.len() >= 2 {
        let (t1, q1) = quotients[quotients.len() - 2];
        let (t2, q2) = quotients[quotients.len() - 1];
        (t1 * q2 - t2 * q1) / (t1 - t2)
    } else {
        quotients[0].1
    };
    Ok(fd(lower, upper, estimate, quotients))
}

/// Which estimate of the directional subdifferential to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffRule {
    /// Union over `Lambda(x,y,w;u,v)`; exact under weak convexity and Guignard CQ.
    Guignard,
    /// Union of `W(u,d)` over the critical directions of `u` and unit critical
    /// directions of `0`; an upper estimate under MSCQ and RS.
    CriticalUnion,
    /// `W(u,d)` for a single RCR-critical `d`; an upper estimate under RCR and RS.
    Rcr,
}

impl SubdiffRule {
    pub fn as_str(self) -> &'static str {
        match self {
            SubdiffRule::Guignard => "guignard",
            SubdiffRule::CriticalUnion => "critical-union",
            SubdiffRule::Rcr => "rcr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "guignard" => Some(SubdiffRule::Guignard),
            "critical-union" => Some(SubdiffRule::CriticalUnion),
            "rcr" => Some(SubdiffRule::Rcr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdiffEstimate {
    /// Points `(grad_x f + grad_x g^T lambda, (y - w)/gamma)` over the vertices
    /// of the multiplier sets used.
    pub points: Vec<Vec<f64>>,
    pub rule: SubdiffRule,
    /// True for the exact rule; upper estimates otherwise.
    pub is_exact: bool,
    /// The estimate is the convex hull of `points`.
    pub is_convex_hull: bool,
    /// Some multiplier set used was unbounded.
    pub unbounded: bool,
    /// Images `(grad_x g^T r, 0)` of extreme recession rays `r` of unbounded
    /// multiplier sets.
    pub rays: Vec<Vec<f64>>,
    /// Directions `d` in the w-space used by the union rules.
    pub directions: Vec<Vec<f64>>,
}

const MAX_DIRECTIONS: usize = 32;

/// Estimate of the directional subdifferential of `v_gamma` at `(x, y)`.
pub fn subdiff_estimate(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    rule: SubdiffRule,
    hyp: &Hypotheses,
) -> Result<SubdiffEstimate, EnvelopeError> {
    check_direction(prob, d)?;
    let a = Anchor::new(prob, x, y)?;
    subdiff_estimate_at(prob, &a, d, rule, hyp)
}

pub(crate) fn subdiff_estimate_at(
    prob: &BilevelProblem,
    a: &Anchor,
    d: &Direction,
    rule: SubdiffRule,
    hyp: &Hypotheses,
) -> Result<SubdiffEstimate, EnvelopeError> {
    let affine = prob.lower_constraints_affine();
    let mut out = SubdiffEstimate {
        points: Vec::new(),
        rule,
        is_exact: rule == SubdiffRule::Guignard,
        is_convex_hull: true,
        unbounded: false,
        rays: Vec::new(),
        directions: Vec::new(),
    };
    match rule {
        SubdiffRule::Guignard => {
            if prob.f_convexity != ObjectiveConvexity::JointlyWeaklyConvex
                || prob.g_convexity != ConstraintConvexity::JointlyQuasiconvex && !affine
            {
                return Err(precondition(Regime::WeaklyConvex, "joint convexity flags not declared"));
            }
            if !(hyp.guignard || affine || a.mfcq_joint()?) {
                return Err(precondition(Regime::WeaklyConvex, "Guignard CQ not available"));
            }
            let poly = a.directional_multipliers(&d.u, &d.v).ok_or(EnvelopeError::NotTangent)?;
            add_points(a, &poly, &mut out)?;
        }
        SubdiffRule::CriticalUnion => {
            let mfcq = a.mfcq_w()?;
            if !(hyp.mscq && hyp.rs || mfcq) {
                return Err(precondition(Regime::Dini, "MSCQ and RS neither asserted nor implied by MFCQ"));
            }
            let lam = a.multipliers();
            let ext_u = a.extremes(&lam, &d.u)?;
            let mut dirs = critical_directions(a, &d.u, ext_u.min, ext_u.max)?;
            if !hyp.inner_calm {
                let zero = vec![0.0; a.n];
                for dz in critical_directions(a, &zero, 0.0, 0.0)? {
                    let nrm = linalg::norm2(&dz);
                    if nrm > tol::DEDUP {
                        dirs.push(dz.iter().map(|c| c / nrm).collect());
                    }
                }
            }
            dirs.truncate(MAX_DIRECTIONS);
            if dirs.is_empty() {
                return Err(EnvelopeError::EmptyCriticalDirections);
            }
            for dw in &dirs {
                if let Some(poly) = a.directional_multipliers(&d.u, dw) {
                    add_points(a, &poly, &mut out)?;
                }
            }
            out.is_convex_hull = false;
            out.directions = dirs;
        }
        SubdiffRule::Rcr => {
            if !(hyp.rcr || affine) {
                return Err(precondition(Regime::Rcr, "RCR regularity not available"));
            }
            if !(hyp.rs || a.mfcq_w()?) {
                return Err(precondition(Regime::Rcr, "RS not available"));
            }
            let lam = a.multipliers();
            let ext = a.extremes(&lam, &d.u)?;
            let dirs = critical_directions(a, &d.u, ext.max, ext.max)?;
            if dirs.is_empty() {
                return Err(EnvelopeError::EmptyCriticalDirections);
            }
            let mut best: Option<(SubdiffEstimate, Vec<f64>)> = None;
            for dw in dirs.iter().take(MAX_DIRECTIONS) {
                if let Some(poly) = a.directional_multipliers(&d.u, dw) {
                    let mut trial = out.clone();
                    add_points(a, &poly, &mut trial)?;
                    if !trial.points.is_empty()
                        && best.as_ref().map_or(true, |(b, _)| trial.points.len() < b.points.len())
                    {
                        best = Some((trial, dw.clone()));
                    }
                }
            }
            let (b, dw) = best.ok_or(EnvelopeError::EmptyCriticalDirections)?;
            out = b;
            out.directions = vec![dw];
        }
    }
    if out.points.is_empty() {
        return Err(EnvelopeError::EmptyMultiplierSet);
    }
    Ok(out)
}

fn add_points(a: &Anchor, poly: &Polyhedron, out: &mut SubdiffEstimate) -> Result<(), EnvelopeError> {
    for lam in lp::vertices(poly)? {
        let xi = a.subgradient(&lam);
        if !out
            .points
            .iter()
            .any(|q| q.iter().zip(&xi).all(|(s, t)| (s - t).abs() <= tol::DEDUP))
        {
            out.points.push(xi);
        }
    }
    if poly.num_vars > 0 {
        let ones = vec![1.0; poly.num_vars];
        if lp::lp_optimize(&ones, poly, Sense::Max)?.status == LpStatus::Unbounded {
            out.unbounded = true;
            let mut rec = poly.clone();
            rec.eq_rhs.iter_mut().for_each(|b| *b = 0.0);
            rec.ineq_rhs.iter_mut().for_each(|b| *b = 0.0);
            rec.add_eq(ones, 1.0);
            for r in lp::vertices(&rec)? {
                let mut img = vec![0.0; a.n];
                for (i, l) in r.iter().enumerate() {
                    linalg::axpy(*l, &a.grad_g[i][..a.n], &mut img);
                }
                img.extend(core::iter::repeat(0.0).take(a.m));
                if !out
                    .rays
                    .iter()
                    .any(|q| q.iter().zip(&img).all(|(s, t)| (s - t).abs() <= tol::DEDUP))
                {
                    out.rays.push(img);
                }
            }
        }
    }
    Ok(())
}

/// Vertices of `{ d : |d_j| <= 1, lo <= fx.u + phi_w.d <= hi, grad g_i (u, d) <= 0 on active i }`.
fn critical_directions(a: &Anchor, u: &[f64], lo: f64, hi: f64) -> Result<Vec<Vec<f64>>, EnvelopeError> {
    let m = a.m;
    let base = linalg::dot(&a.fx, u);
    let slack = tol::CERT * (1.0 + lo.abs().max(hi.abs()));
    let mut poly = Polyhedron::free(m);
    poly.add_ineq(a.phi_w.clone(), hi - base + slack);
    poly.add_ineq(a.phi_w.iter().map(|c| -c).collect(), -(lo - base) + slack);
    for &i in &a.active.indices {
        let row = &a.grad_g[i];
        let ux = linalg::dot(&row[..a.n], u);
        poly.add_ineq(row[a.n..].to_vec(), -ux);
    }
    for j in 0..m {
        let mut r = vec![0.0; m];
        r[j] = 1.0;
        poly.add_ineq(r.clone(), 1.0);
        r[j] = -1.0;
        poly.add_ineq(r, 1.0);
    }
    Ok(lp::vertices(&poly)?)
}

/// Sampling plan for [`weak_convexity_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeakConvexityPlan {
    /// Box in `(x, y)` from which pairs are drawn.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
    /// Tests this modulus instead of the one derived from the problem.
    pub rho_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakConvexityReport {
    /// Modulus of `f` used: the declared `rho_f` or the sampled joint modulus,
    /// whichever is larger.
    pub rho_joint: f64,
    /// Modulus tested for `v_gamma`.
    pub rho_v: f64,
    pub pairs_tested: usize,
    pub violations: usize,
    /// Largest `v(mid) - bound` seen.
    pub worst_excess: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub skipped: usize,
}

/// Midpoint test of `rho_v`-weak convexity of `v_gamma` over random pairs.
///
/// Without an override, `rho_v = rho/(1 - gamma rho) + 1e-9` where `rho` is the
/// larger of `rho_f` and the negated smallest eigenvalue of the full Hessian
/// of `f` over the sampled points.
pub fn weak_convexity_check(
    prob: &BilevelProblem,
    plan: &WeakConvexityPlan,
) -> Result<WeakConvexityReport, EnvelopeError> {
    if prob.f_convexity != ObjectiveConvexity::JointlyWeaklyConvex
        || prob.g_convexity != ConstraintConvexity::JointlyQuasiconvex && !prob.lower_constraints_affine()
    {
        return Err(precondition(Regime::WeaklyConvex, "joint convexity flags not declared"));
    }
    let dim = prob.n + prob.m;
    if plan.lower.len() != dim || plan.upper.len() != dim {
        return Err(model::ModelError::Dimension(format!("sampling box must have dimension {dim}")).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|k| {
                if plan.upper[k] > plan.lower[k] {
                    rng.random_range(plan.lower[k]..plan.upper[k])
                } else {
                    plan.lower[k]
                }
            })
            .collect()
    };
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..plan.pairs).map(|_| (draw(&mut rng), draw(&mut rng))).collect();

    let mut rho_joint = prob.rho_f;
    for (z1, z2) in &pairs {
        for z in [z1, z2] {
            if let Ok(h) = expr::hessian(&prob.lower_objective, &EvalPoint::from_concat(z, prob.n)) {
                rho_joint = rho_joint.max(-linalg::symmetric_eigenvalues(&h)[0]);
            }
        }
    }
    let rho_v = match plan.rho_override {
        Some(r) => r,
        None => {
            if prob.gamma * rho_joint >= 1.0 {
                return Err(precondition(
                    Regime::WeaklyConvex,
                    &format!("gamma * joint modulus = {} >= 1", prob.gamma * rho_joint),
                ));
            }
            rho_joint / (1.0 - prob.gamma * rho_joint) + 1e-9
        }
    };

    let value = |z: &[f64]| -> Result<f64, InnerError> {
        Ok(inner::solve_inner(prob, &z[..prob.n], &z[prob.n..])?.value)
    };
    let mut report = WeakConvexityReport {
        rho_joint,
        rho_v,
        pairs_tested: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_pair: None,
        skipped: 0,
    };
    for (z1, z2) in pairs {
        let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
        let (v1, v2, vm) = match (value(&z1), value(&z2), value(&mid)) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (Err(InnerError::Infeasible(_)), _, _)
            | (_, Err(InnerError::Infeasible(_)), _)
            | (_, _, Err(InnerError::Infeasible(_))) => {
                report.skipped += 1;
                continue;
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e.into()),
        };
        report.pairs_tested += 1;
        let diff = linalg::sub(&z1, &z2);
        let bound = 0.5 * v1 + 0.5 * v2 + rho_v / 8.0 * linalg::dot(&diff, &diff);
        let excess = vm - bound;
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_pair = Some((z1.clone(), z2.clone()));
        }
        if excess > 1e-9 * (1.0 + vm.abs()) {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{GammaBound, ProblemSpec};
    use alloc::string::ToString;

    pub(crate) fn worked(gamma: f64) -> BilevelProblem {
        let spec = ProblemSpec {
            n: 1,
            m: 1,
            gamma: 0.2,
            rho_f: 2.0,
            f_convexity: ObjectiveConvexity::JointlyWeaklyConvex,
            g_convexity: ConstraintConvexity::JointlyQuasiconvex,
            upper_objective: "(x1-y1)^2".to_string(),
            upper_constraints: vec![],
            lower_objective: "-(x1-y1)^2".to_string(),
            lower_constraints: vec!["y1-x1-1".to_string(), "x1-y1-1".to_string()],
        };
        BilevelProblem::from_spec(&spec)
            .unwrap()
            .with_gamma(gamma, GammaBound::StrongConvexity)
            .unwrap()
    }

    fn toy() -> BilevelProblem {
        let spec = ProblemSpec {
            n: 1,
            m: 1,
            gamma: 0.5,
            rho_f: 0.0,
            f_convexity: ObjectiveConvexity::JointlyWeaklyConvex,
            g_convexity: ConstraintConvexity::JointlyQuasiconvex,
            upper_objective: "y1".to_string(),
            upper_constraints: vec![],
            lower_objective: "0.5*y1^2".to_string(),
            lower_constraints: vec![],
        };
        BilevelProblem::from_spec(&spec).unwrap()
    }

    fn dir(u: f64, v: f64) -> Direction {
        Direction::new(vec![u], vec![v])
    }

    #[test]
    fn gradient_in_y() {
        assert_eq!(grad_y_envelope(&worked(0.2), &[0.0], &[-1.0]).unwrap()[0], 0.0);
        let g = grad_y_envelope(&toy(), &[0.0], &[1.0]).unwrap()[0];
        assert!((g - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn worked_directional_derivative() {
        let prob = worked(0.2);
        let h = Hypotheses::default();
        for regime in [Regime::WeaklyConvex, Regime::Dini, Regime::Rcr] {
            for d in [dir(1.0, 0.0), dir(1.0, 1.0), dir(0.0, 1.0), dir(-1.0, 0.5)] {
                let e = dir_derivative(&prob, &[0.0], &[-1.0], &d, regime, &h).unwrap();
                assert_eq!(e.kind, EstimateKind::ExactFormula);
                assert!(e.estimate.abs() <= 1e-8, "{regime:?} {d:?} {e:?}");
            }
        }
        let e = dir_derivative(&prob, &[0.0], &[-1.0], &dir(1.0, 0.0), Regime::Rcr, &h).unwrap();
        assert!((e.witnesses[0][1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn toy_derivative_is_y_part() {
        let prob = toy();
        let e = dir_derivative(&prob, &[0.3], &[1.0], &dir(2.0, 1.5), Regime::Dini, &Hypotheses::default()).unwrap();
        assert!((e.estimate - 1.5 * 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn finite_differences() {
        let prob = worked(0.2);
        let e = fd_dir_derivative(&prob, &[0.0], &[-1.0], &dir(1.0, 1.0), &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(e.estimate.abs() <= 1e-3 && e.upper.abs() <= 1e-3, "{e:?}");
        let t = fd_dir_derivative(&toy(), &[0.0], &[1.0], &dir(0.0, 1.0), &DEFAULT_FD_STEPS).unwrap();
        assert!((t.estimate - 2.0 / 3.0).abs() <= 1e-4, "{t:?}");
        let z = fd_dir_derivative(&toy(), &[0.0], &[1.0], &dir(0.0, 0.0), &DEFAULT_FD_STEPS).unwrap();
        assert_eq!((z.lower, z.upper, z.estimate), (0.0, 0.0, 0.0));
    }

    #[test]
    fn precondition_refusals() {
        let mut prob = worked(0.2);
        prob.f_convexity = ObjectiveConvexity::None;
        let r = dir_derivative(&prob, &[0.0], &[-1.0], &dir(1.0, 0.0), Regime::WeaklyConvex, &Hypotheses::default());
        assert!(matches!(r, Err(EnvelopeError::Precondition { .. })));
    }

    #[test]
    fn subdifferential_estimates() {
        let prob = worked(0.2);
        let h = Hypotheses::default();
        for rule in [SubdiffRule::Guignard, SubdiffRule::CriticalUnion, SubdiffRule::Rcr] {
            let s = subdiff_estimate(&prob, &[0.0], &[-1.0], &dir(1.0, 1.0), rule, &h).unwrap();
            assert_eq!(s.points.len(), 1, "{rule:?}");
            assert!(s.points[0].iter().all(|c| c.abs() < 1e-9));
        }
        let s = subdiff_estimate(&toy(), &[0.0], &[1.0], &dir(1.0, 0.0), SubdiffRule::Guignard, &h).unwrap();
        assert_eq!(s.points.len(), 1);
        assert!(s.points[0][0] == 0.0 && (s.points[0][1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weak_convexity_midpoint() {
        let prob = worked(0.2);
        let plan = WeakConvexityPlan {
            lower: vec![-1.0, -2.0],
            upper: vec![1.0, 0.0],
            pairs: 60,
            seed: 7,
            rho_override: None,
        };
        let r = weak_convexity_check(&prob, &plan).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert!((r.rho_joint - 4.0).abs() < 1e-9);
        let bad = WeakConvexityPlan {
            rho_override: Some(0.0),
            ..plan
        };
        assert!(weak_convexity_check(&prob, &bad).unwrap().violations > 0);
    }
}
