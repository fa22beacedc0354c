//! Bilevel problem data, the gamma regime, sample-based validation and active
//! sets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{self, parse_expr, EvalError, EvalPoint, Expr, ParseError};
use crate::linalg::{self, Matrix};
use crate::tol;

/// Declared generalized-convexity regime of the lower objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveConvexity {
    JointlyWeaklyConvex,
    YWeaklyConvex,
    None,
}

/// Declared generalized-convexity regime of the lower constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintConvexity {
    JointlyQuasiconvex,
    YQuasiconvex,
    None,
}

impl ObjectiveConvexity {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveConvexity::JointlyWeaklyConvex => "jointly-weakly-convex",
            ObjectiveConvexity::YWeaklyConvex => "y-weakly-convex",
            ObjectiveConvexity::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jointly-weakly-convex" => Some(ObjectiveConvexity::JointlyWeaklyConvex),
            "y-weakly-convex" => Some(ObjectiveConvexity::YWeaklyConvex),
            "none" => Some(ObjectiveConvexity::None),
            _ => None,
        }
    }
}

impl ConstraintConvexity {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintConvexity::JointlyQuasiconvex => "jointly-quasiconvex",
            ConstraintConvexity::YQuasiconvex => "y-quasiconvex",
            ConstraintConvexity::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jointly-quasiconvex" => Some(ConstraintConvexity::JointlyQuasiconvex),
            "y-quasiconvex" => Some(ConstraintConvexity::YQuasiconvex),
            "none" => Some(ConstraintConvexity::None),
            _ => None,
        }
    }
}

/// Which upper bound on gamma is enforced.
///
/// `Conservative` is `gamma < 1/(2 rho_f)`. `StrongConvexity` only asks that
/// the proximal objective stay strongly convex, `gamma * rho_f < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaBound {
    Conservative,
    StrongConvexity,
}

impl GammaBound {
    fn admits(self, gamma: f64, rho_f: f64) -> bool {
        match self {
            GammaBound::Conservative => 2.0 * gamma * rho_f < 1.0,
            GammaBound::StrongConvexity => gamma * rho_f < 1.0,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            GammaBound::Conservative => "gamma < 1/(2 rho_f)",
            GammaBound::StrongConvexity => "gamma < 1/rho_f",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("cannot parse {what}: {source}")]
    Parse { what: String, source: ParseError },
    #[error("gamma must be positive (got {0})")]
    GammaNonPositive(f64),
    #[error("rho_f must be nonnegative and finite (got {0})")]
    RhoInvalid(f64),
    #[error("gamma = {gamma} violates {bound} with rho_f = {rho_f}")]
    GammaOutOfRange {
        gamma: f64,
        rho_f: f64,
        bound: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("point is infeasible: constraints {violated:?} exceed tolerance (values {values:?})")]
    Infeasible {
        /// 0-based indices.
        violated: Vec<usize>,
        values: Vec<f64>,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Textual problem description, as read from a problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub rho_f: f64,
    pub f_convexity: ObjectiveConvexity,
    pub g_convexity: ConstraintConvexity,
    pub upper_objective: String,
    pub upper_constraints: Vec<String>,
    pub lower_objective: String,
    pub lower_constraints: Vec<String>,
}

/// Parsed and validated bilevel program
/// `min F(x,y) s.t. G(x,y) <= 0, y in argmin { f(x,.) : g(x,.) <= 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilevelProblem {
    pub n: usize,
    pub m: usize,
    pub upper_objective: Expr,
    pub upper_constraints: Vec<Expr>,
    pub lower_objective: Expr,
    /// Never empty: an unconstrained lower level holds the constant `-1`.
    pub lower_constraints: Vec<Expr>,
    pub gamma: f64,
    pub rho_f: f64,
    pub f_convexity: ObjectiveConvexity,
    pub g_convexity: ConstraintConvexity,
}

impl BilevelProblem {
    /// Builds a problem under the conservative gamma bound.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        upper_objective: Expr,
        upper_constraints: Vec<Expr>,
        lower_objective: Expr,
        lower_constraints: Vec<Expr>,
        gamma: f64,
        rho_f: f64,
    ) -> Result<Self, ModelError> {
        let lower_constraints = if lower_constraints.is_empty() {
            vec![Expr::Const(-1.0)]
        } else {
            lower_constraints
        };
        let prob = BilevelProblem {
            n,
            m,
            upper_objective,
            upper_constraints,
            lower_objective,
            lower_constraints,
            gamma,
            rho_f,
            f_convexity: ObjectiveConvexity::None,
            g_convexity: ConstraintConvexity::None,
        };
        prob.check(GammaBound::Conservative)?;
        Ok(prob)
    }

    pub fn with_flags(mut self, f: ObjectiveConvexity, g: ConstraintConvexity) -> Self {
        self.f_convexity = f;
        self.g_convexity = g;
        self
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self, ModelError> {
        Self::from_spec_with(spec, GammaBound::Conservative)
    }

    pub fn from_spec_with(spec: &ProblemSpec, bound: GammaBound) -> Result<Self, ModelError> {
        let (n, m) = (spec.n, spec.m);
        let parse = |what: String, text: &str| {
            parse_expr(text, n, m).map_err(|source| ModelError::Parse { what, source })
        };
        let upper_objective = parse("upper objective".into(), &spec.upper_objective)?;
        let upper_constraints = spec
            .upper_constraints
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("upper constraint {}", i + 1), s))
            .collect::<Result<Vec<_>, _>>()?;
        let lower_objective = parse("lower objective".into(), &spec.lower_objective)?;
        let mut lower_constraints = spec
            .lower_constraints
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("lower constraint {}", i + 1), s))
            .collect::<Result<Vec<_>, _>>()?;
        if lower_constraints.is_empty() {
            lower_constraints.push(Expr::Const(-1.0));
        }
        let prob = BilevelProblem {
            n,
            m,
            upper_objective,
            upper_constraints,
            lower_objective,
            lower_constraints,
            gamma: spec.gamma,
            rho_f: spec.rho_f,
            f_convexity: spec.f_convexity,
            g_convexity: spec.g_convexity,
        };
        prob.check(bound)?;
        Ok(prob)
    }

    /// Textual form; `from_spec(to_spec())` reproduces the same trees.
    pub fn to_spec(&self) -> ProblemSpec {
        let show = |e: &Expr| format!("{e}");
        ProblemSpec {
            n: self.n,
            m: self.m,
            gamma: self.gamma,
            rho_f: self.rho_f,
            f_convexity: self.f_convexity,
            g_convexity: self.g_convexity,
            upper_objective: show(&self.upper_objective),
            upper_constraints: self.upper_constraints.iter().map(show).collect(),
            lower_objective: show(&self.lower_objective),
            lower_constraints: self.lower_constraints.iter().map(show).collect(),
        }
    }

    /// Same problem with another gamma, checked against `bound`.
    pub fn with_gamma(&self, gamma: f64, bound: GammaBound) -> Result<Self, ModelError> {
        let mut p = self.clone();
        p.gamma = gamma;
        p.check(bound)?;
        Ok(p)
    }

    fn check(&self, bound: GammaBound) -> Result<(), ModelError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(ModelError::GammaNonPositive(self.gamma));
        }
        if !(self.rho_f >= 0.0) || !self.rho_f.is_finite() {
            return Err(ModelError::RhoInvalid(self.rho_f));
        }
        if self.rho_f > 0.0 && !bound.admits(self.gamma, self.rho_f) {
            return Err(ModelError::GammaOutOfRange {
                gamma: self.gamma,
                rho_f: self.rho_f,
                bound: bound.describe(),
            });
        }
        if self.m == 0 {
            return Err(ModelError::Dimension("m must be at least 1".into()));
        }
        let all = core::iter::once(&self.upper_objective)
            .chain(&self.upper_constraints)
            .chain(core::iter::once(&self.lower_objective))
            .chain(&self.lower_constraints);
        for e in all {
            let (xi, yi) = e.max_indices();
            if xi > self.n || yi > self.m {
                return Err(ModelError::Dimension(format!(
                    "`{e}` references x{xi}/y{yi} beyond n = {}, m = {}",
                    self.n, self.m
                )));
            }
        }
        Ok(())
    }

    /// Number of lower-level constraints.
    pub fn p(&self) -> usize {
        self.lower_constraints.len()
    }

    /// Number of upper-level constraints.
    pub fn q(&self) -> usize {
        self.upper_constraints.len()
    }

    pub fn point(&self, x: &[f64], y: &[f64]) -> Result<EvalPoint, ModelError> {
        if x.len() != self.n || y.len() != self.m {
            return Err(ModelError::Dimension(format!(
                "point has |x| = {}, |y| = {}; expected {} and {}",
                x.len(),
                y.len(),
                self.n,
                self.m
            )));
        }
        Ok(EvalPoint::new(x.to_vec(), y.to_vec()))
    }

    /// True when every lower constraint is structurally affine.
    pub fn lower_constraints_affine(&self) -> bool {
        self.lower_constraints.iter().all(Expr::is_affine)
    }
}

impl fmt::Display for BilevelProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, m = {}, gamma = {}, rho_f = {}", self.n, self.m, self.gamma, self.rho_f)?;
        writeln!(f, "F = {}", self.upper_objective)?;
        for (i, g) in self.upper_constraints.iter().enumerate() {
            writeln!(f, "G{} = {}", i + 1, g)?;
        }
        writeln!(f, "f = {}", self.lower_objective)?;
        for (i, g) in self.lower_constraints.iter().enumerate() {
            writeln!(f, "g{} = {}", i + 1, g)?;
        }
        Ok(())
    }
}

/// Values of a list of expressions.
pub fn values(exprs: &[Expr], p: &EvalPoint) -> Result<Vec<f64>, EvalError> {
    exprs.iter().map(|e| e.eval(p)).collect()
}

/// Full `(x, y)` gradients of a list of expressions, one row each.
pub fn jacobian(exprs: &[Expr], p: &EvalPoint) -> Result<Vec<Vec<f64>>, EvalError> {
    exprs.iter().map(|e| expr::gradient(e, p)).collect()
}

/// Indices (0-based) of constraints within `tol` of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub tolerance: f64,
}

impl ActiveSet {
    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices printed 1-based, e.g. `{2}`.
    pub fn one_based(&self) -> String {
        let parts: Vec<String> = self.indices.iter().map(|i| format!("{}", i + 1)).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// Active set of `constraints <= 0` at `p`; errors when any value exceeds `tol`.
pub fn active_set(constraints: &[Expr], p: &EvalPoint, tol: f64) -> Result<ActiveSet, ModelError> {
    let vals = values(constraints, p)?;
    active_set_from_values(&vals, tol)
}

pub(crate) fn active_set_from_values(vals: &[f64], tol: f64) -> Result<ActiveSet, ModelError> {
    let violated: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > tol).collect();
    if !violated.is_empty() {
        return Err(ModelError::Infeasible {
            violated,
            values: vals.to_vec(),
        });
    }
    Ok(ActiveSet {
        indices: (0..vals.len()).filter(|&i| vals[i].abs() <= tol).collect(),
        tolerance: tol,
    })
}

/// Regular grid over a box in `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_axis: usize,
}

impl SampleGrid {
    pub fn uniform(dim: usize, lo: f64, hi: f64, points_per_axis: usize) -> Self {
        SampleGrid {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
            points_per_axis,
        }
    }

    /// All grid points in lexicographic order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let dim = self.lower.len();
        let k = self.points_per_axis.max(1);
        let coord = |axis: usize, i: usize| {
            if k == 1 {
                0.5 * (self.lower[axis] + self.upper[axis])
            } else {
                self.lower[axis] + (self.upper[axis] - self.lower[axis]) * i as f64 / (k - 1) as f64
            }
        };
        let total = k.pow(dim as u32);
        (0..total)
            .map(|mut idx| {
                let mut z = vec![0.0; dim];
                for axis in (0..dim).rev() {
                    z[axis] = coord(axis, idx % k);
                    idx /= k;
                }
                z
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub gamma_conservative: bool,
    pub gamma_strongly_convex: bool,
    pub rho_consistent: bool,
    /// Smallest eigenvalue of the y-block of the lower Hessian over the grid.
    pub min_eig_yy: f64,
    /// Smallest eigenvalue of the full lower Hessian over the grid.
    pub min_eig_joint: f64,
    pub worst_point: Option<Vec<f64>>,
    pub grid_points: usize,
    pub domain_failures: usize,
    pub dimension_ok: bool,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.gamma_conservative && self.rho_consistent && self.dimension_ok
    }
}

/// Checks the gamma regime and samples the lower Hessian to test the declared
/// `rho_f` (`min eig of the y-block >= -rho_f - 1e-8`).
pub fn validate(prob: &BilevelProblem, grid: &SampleGrid) -> ValidationReport {
    let mut issues = Vec::new();
    let gamma_conservative = prob.rho_f == 0.0 || 2.0 * prob.gamma * prob.rho_f < 1.0;
    let gamma_strongly_convex = prob.rho_f == 0.0 || prob.gamma * prob.rho_f < 1.0;
    if !gamma_conservative {
        issues.push(format!(
            "gamma = {} is not below 1/(2 rho_f) = {}",
            prob.gamma,
            0.5 / prob.rho_f
        ));
    }
    let dimension_ok = grid.lower.len() == prob.n + prob.m && grid.upper.len() == prob.n + prob.m;
    if !dimension_ok {
        issues.push(format!(
            "grid dimension {} does not match n + m = {}",
            grid.lower.len(),
            prob.n + prob.m
        ));
    }
    let mut min_eig_yy = f64::INFINITY;
    let mut min_eig_joint = f64::INFINITY;
    let mut worst_point = None;
    let mut domain_failures = 0;
    let mut grid_points = 0;
    if dimension_ok {
        for z in grid.points() {
            grid_points += 1;
            let p = EvalPoint::from_concat(&z, prob.n);
            let h = match expr::hessian(&prob.lower_objective, &p) {
                Ok(h) => h,
                Err(_) => {
                    domain_failures += 1;
                    continue;
                }
            };
            let joint = linalg::symmetric_eigenvalues(&h)[0];
            min_eig_joint = min_eig_joint.min(joint);
            let yy = y_block(&h, prob.n, prob.m);
            let e = linalg::symmetric_eigenvalues(&yy)[0];
            if e < min_eig_yy {
                min_eig_yy = e;
                worst_point = Some(z);
            }
        }
    }
    if domain_failures > 0 {
        issues.push(format!(
            "lower objective not twice differentiable at {domain_failures} grid points"
        ));
    }
    let rho_consistent = min_eig_yy >= -prob.rho_f - tol::CERT;
    if !rho_consistent {
        issues.push(format!(
            "declared rho_f = {} but the y-Hessian reaches eigenvalue {}",
            prob.rho_f, min_eig_yy
        ));
    }
    ValidationReport {
        gamma_conservative,
        gamma_strongly_convex,
        rho_consistent,
        min_eig_yy,
        min_eig_joint,
        worst_point,
        grid_points,
        domain_failures,
        dimension_ok,
        issues,
    }
}

/// Lower-right `m x m` block of an `(n+m)`-square matrix.
pub(crate) fn y_block(h: &Matrix, n: usize, m: usize) -> Matrix {
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(i, j)] = h[(n + i, n + j)];
        }
    }
    out
}
