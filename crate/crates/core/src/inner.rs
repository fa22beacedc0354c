//! The proximal inner problem
//! `min_w f(x,w) + |w - y|^2 / (2 gamma)  s.t.  g(x,w) <= 0`.
//!
//! Solved by an augmented Lagrangian outer loop around a damped Newton inner
//! loop, followed by a Newton polish of the KKT system on the active set and a
//! nonnegative least-squares refit of the multipliers.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{self, EvalError, EvalPoint, Expr};
use crate::linalg::{self, Matrix};
use crate::lp::Polyhedron;
use crate::model::{self, ActiveSet, BilevelProblem, ModelError};
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOptions {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_start: f64,
    pub penalty_factor: f64,
    pub penalty_max: f64,
    /// Starting point; `y` when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            kkt_tol: tol::INNER_KKT,
            feas_tol: tol::INNER_KKT,
            max_outer: 200,
            max_inner: 500,
            penalty_start: 10.0,
            penalty_factor: 10.0,
            penalty_max: 1e8,
            start: None,
        }
    }
}

impl InnerOptions {
    /// Tightened tolerances used at finite-difference probe points.
    pub fn probe() -> Self {
        InnerOptions {
            kkt_tol: tol::PROBE_KKT,
            feas_tol: tol::PROBE_KKT,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// The proximal point.
    pub w: Vec<f64>,
    /// The envelope value.
    pub value: f64,
    pub lambda: Vec<f64>,
    pub kkt_residual: f64,
    pub active: ActiveSet,
    pub iterations: usize,
    /// No multiplier satisfies the KKT system at `w` to `tol::CERT`.
    pub multiplier_set_empty: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InnerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("gamma * rho_f = {0} >= 1: the proximal problem is not strongly convex")]
    NotStronglyConvex(f64),
    #[error("lower level appears infeasible near y (violation {0:e})")]
    Infeasible(f64),
    #[error("no convergence after {iterations} iterations (KKT residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("iterates diverged")]
    Diverged,
}

/// Value, `w`-gradient and `w`-Hessian of `e` at `(x, w)`.
fn local(e: &Expr, x: &[f64], w: &[f64], with_hessian: bool) -> Result<(f64, Vec<f64>, Option<Matrix>), EvalError> {
    let p = EvalPoint::new(x.to_vec(), w.to_vec());
    let (v, g) = expr::value_and_gradient(e, &p)?;
    let n = x.len();
    let gw = g[n..].to_vec();
    let h = if with_hessian {
        Some(model::y_block(&expr::hessian(e, &p)?, n, w.len()))
    } else {
        None
    };
    Ok((v, gw, h))
}

/// `w`-parts of the lower data at `(x, w)`.
struct Local {
    phi: f64,
    grad_phi: Vec<f64>,
    hess_phi: Option<Matrix>,
    g: Vec<f64>,
    grad_g: Vec<Vec<f64>>,
    hess_g: Vec<Option<Matrix>>,
}

struct Inner<'a> {
    prob: &'a BilevelProblem,
    x: &'a [f64],
    y: &'a [f64],
}

impl Inner<'_> {
    fn eval(&self, w: &[f64], with_hessian: bool) -> Result<Local, EvalError> {
        let inv = 1.0 / self.prob.gamma;
        let (f, gf, hf) = local(&self.prob.lower_objective, self.x, w, with_hessian)?;
        let d = linalg::sub(w, self.y);
        let phi = f + 0.5 * inv * linalg::dot(&d, &d);
        let mut grad_phi = gf;
        linalg::axpy(inv, &d, &mut grad_phi);
        let hess_phi = hf.map(|mut h| {
            for i in 0..w.len() {
                h[(i, i)] += inv;
            }
            h
        });
        let mut g = Vec::new();
        let mut grad_g = Vec::new();
        let mut hess_g = Vec::new();
        for c in &self.prob.lower_constraints {
            let (v, gr, h) = local(c, self.x, w, with_hessian)?;
            g.push(v);
            grad_g.push(gr);
            hess_g.push(h);
        }
        Ok(Local {
            phi,
            grad_phi,
            hess_phi,
            g,
            grad_g,
            hess_g,
        })
    }

    fn phi(&self, w: &[f64]) -> Result<f64, EvalError> {
        let f = expr::Expr::eval(&self.prob.lower_objective, &EvalPoint::new(self.x.to_vec(), w.to_vec()))?;
        let d = linalg::sub(w, self.y);
        Ok(f + 0.5 * linalg::dot(&d, &d) / self.prob.gamma)
    }

    /// Augmented Lagrangian value; domain errors count as `+inf`.
    fn al_value(&self, w: &[f64], mu: &[f64], c: f64) -> f64 {
        let p = EvalPoint::new(self.x.to_vec(), w.to_vec());
        let phi = match self.phi(w) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let mut acc = phi;
        for (i, e) in self.prob.lower_constraints.iter().enumerate() {
            let gi = match e.eval(&p) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            let s = (mu[i] + c * gi).max(0.0);
            acc += (s * s - mu[i] * mu[i]) / (2.0 * c);
        }
        if acc.is_finite() {
            acc
        } else {
            f64::INFINITY
        }
    }

    fn al_derivatives(&self, w: &[f64], mu: &[f64], c: f64) -> Result<(Vec<f64>, Matrix), EvalError> {
        let l = self.eval(w, true)?;
        let m = w.len();
        let mut grad = l.grad_phi.clone();
        let mut hess = l.hess_phi.unwrap();
        for i in 0..l.g.len() {
            let s = mu[i] + c * l.g[i];
            if s > 0.0 {
                linalg::axpy(s, &l.grad_g[i], &mut grad);
                let hg = l.hess_g[i].as_ref().unwrap();
                for a in 0..m {
                    for b in 0..m {
                        hess[(a, b)] += s * hg[(a, b)] + c * l.grad_g[i][a] * l.grad_g[i][b];
                    }
                }
            }
        }
        Ok((grad, hess))
    }

    /// Damped Newton on the augmented Lagrangian. Returns inner iterations used.
    fn minimize_al(&self, w: &mut Vec<f64>, mu: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<usize, InnerError> {
        let mut it = 0;
        while it < max_iter {
            it += 1;
            let (grad, hess) = self.al_derivatives(w, mu, c)?;
            let gnorm = linalg::norm_inf(&grad);
            if gnorm <= tol {
                break;
            }
            let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
            let mut dir = match linalg::cholesky(&hess) {
                Some(l) => linalg::cholesky_solve(&l, &neg),
                None => neg.clone(),
            };
            let mut slope = linalg::dot(&grad, &dir);
            if !(slope < 0.0) || dir.iter().any(|v| !v.is_finite()) {
                dir = neg;
                slope = -linalg::dot(&grad, &grad);
            }
            let f0 = self.al_value(w, mu, c);
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-20 {
                let trial: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
                let ft = self.al_value(&trial, mu, c);
                if ft <= f0 + 1e-4 * step * slope || (ft - f0).abs() <= 1e-15 * (1.0 + f0.abs()) && step == 1.0 {
                    *w = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if linalg::norm_inf(w) > 1e12 {
                return Err(InnerError::Diverged);
            }
            if step * linalg::norm_inf(&dir) <= 1e-16 * (1.0 + linalg::norm_inf(w)) {
                break;
            }
        }
        Ok(it)
    }

    /// Newton on `grad phi + sum_A lambda_i grad g_i = 0, g_A = 0`.
    fn polish(&self, w: &[f64], lam: &[f64], act: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let m = w.len();
        let k = act.len();
        let mut w = w.to_vec();
        let mut la: Vec<f64> = act.iter().map(|&i| lam[i]).collect();
        for _ in 0..20 {
            let l = self.eval(&w, true).ok()?;
            let mut r = l.grad_phi.clone();
            for (a, &i) in act.iter().enumerate() {
                linalg::axpy(la[a], &l.grad_g[i], &mut r);
            }
            let mut full = r.clone();
            full.extend(act.iter().map(|&i| l.g[i]));
            if linalg::norm_inf(&full) <= 1e-15 * (1.0 + linalg::norm_inf(&l.grad_phi)) {
                break;
            }
            let mut kkt = Matrix::zeros(m + k, m + k);
            let mut h = l.hess_phi.unwrap();
            for (a, &i) in act.iter().enumerate() {
                let hg = l.hess_g[i].as_ref().unwrap();
                for p in 0..m {
                    for q in 0..m {
                        h[(p, q)] += la[a] * hg[(p, q)];
                    }
                }
            }
            for p in 0..m {
                for q in 0..m {
                    kkt[(p, q)] = h[(p, q)];
                }
            }
            for (a, &i) in act.iter().enumerate() {
                for p in 0..m {
                    kkt[(p, m + a)] = l.grad_g[i][p];
                    kkt[(m + a, p)] = l.grad_g[i][p];
                }
            }
            let rhs: Vec<f64> = full.iter().map(|v| -v).collect();
            let step = linalg::solve(&kkt, &rhs)?;
            for p in 0..m {
                w[p] += step[p];
            }
            for a in 0..k {
                la[a] += step[m + a];
            }
            if linalg::norm_inf(&step) <= 1e-16 * (1.0 + linalg::norm_inf(&w)) {
                break;
            }
        }
        if la.iter().any(|v| *v < -tol::INNER_KKT) {
            return None;
        }
        let mut out = vec![0.0; lam.len()];
        for (a, &i) in act.iter().enumerate() {
            out[i] = la[a].max(0.0);
        }
        Some((w, out))
    }

    /// Multipliers by NNLS over the active set and the resulting residuals.
    fn assess(&self, w: &[f64]) -> Result<Assessment, EvalError> {
        let l = self.eval(w, false)?;
        let p = l.g.len();
        let act: Vec<usize> = (0..p).filter(|&i| l.g[i].abs() <= tol::ACTIVE).collect();
        let cols: Vec<Vec<f64>> = act.iter().map(|&i| l.grad_g[i].clone()).collect();
        let b: Vec<f64> = l.grad_phi.iter().map(|v| -v).collect();
        let sol = linalg::nnls(&cols, &b);
        let mut lambda = vec![0.0; p];
        for (a, &i) in act.iter().enumerate() {
            lambda[i] = sol[a];
        }
        let mut r = l.grad_phi.clone();
        for i in 0..p {
            linalg::axpy(lambda[i], &l.grad_g[i], &mut r);
        }
        let stationarity = linalg::norm_inf(&r);
        let feasibility = l.g.iter().fold(0.0f64, |s, v| s.max(*v));
        let complementarity = (0..p).fold(0.0f64, |s, i| s.max((lambda[i] * l.g[i]).abs()));
        Ok(Assessment {
            phi: l.phi,
            lambda,
            stationarity,
            feasibility,
            complementarity,
            g: l.g,
        })
    }
}

struct Assessment {
    phi: f64,
    lambda: Vec<f64>,
    stationarity: f64,
    feasibility: f64,
    complementarity: f64,
    g: Vec<f64>,
}

impl Assessment {
    fn kkt(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

/// Solves the proximal problem with default options.
pub fn solve_inner(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> Result<InnerSolution, InnerError> {
    solve_inner_with(prob, x, y, &InnerOptions::default())
}

/// Solves the proximal problem starting from `w0`.
pub fn solve_inner_from(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    w0: &[f64],
) -> Result<InnerSolution, InnerError> {
    let opts = InnerOptions {
        start: Some(w0.to_vec()),
        ..InnerOptions::default()
    };
    solve_inner_with(prob, x, y, &opts)
}

pub fn solve_inner_with(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    opts: &InnerOptions,
) -> Result<InnerSolution, InnerError> {
    prob.point(x, y)?;
    let modulus = prob.gamma * prob.rho_f;
    if modulus >= 1.0 {
        return Err(InnerError::NotStronglyConvex(modulus));
    }
    let inner = Inner { prob, x, y };
    let p = prob.p();
    let mut w = match &opts.start {
        Some(s) if s.len() == prob.m => s.clone(),
        Some(_) => return Err(ModelError::Dimension("start point has wrong length".into()).into()),
        None => y.to_vec(),
    };
    inner.eval(&w, false)?;
    let mut mu = vec![0.0; p];
    let mut c = opts.penalty_start;
    let mut iterations = 0;
    let mut at_cap = 0;
    let mut best_violation = f64::INFINITY;
    let mut last: Option<Assessment> = None;
    let mut prev_phi = f64::INFINITY;
    // Raised past `penalty_max` only when the multipliers keep growing with a
    // feasible iterate, the signature of an empty multiplier set.
    let mut cap = opts.penalty_max;

    for _outer in 0..opts.max_outer {
        iterations += inner.minimize_al(&mut w, &mu, c, 0.1 * opts.kkt_tol, opts.max_inner)?;
        let l = inner.eval(&w, false)?;
        for i in 0..p {
            mu[i] = (mu[i] + c * l.g[i]).max(0.0);
        }
        let violation = l.g.iter().fold(0.0f64, |s, v| s.max(*v));

        // Polish on the constraints the AL treats as binding.
        let act: Vec<usize> = (0..p)
            .filter(|&i| mu[i] > 0.0 || l.g[i].abs() <= tol::ACTIVE)
            .filter(|&i| l.g[i] > -1e-6)
            .collect();
        let mut candidate = w.clone();
        if violation <= 1e-6 {
            if let Some((wp, _)) = inner.polish(&w, &mu, &act) {
                if let Ok(a) = inner.assess(&wp) {
                    if a.feasibility <= opts.feas_tol {
                        candidate = wp;
                    }
                }
            }
        }
        let a = inner.assess(&candidate)?;
        if a.feasibility <= opts.feas_tol && a.kkt() <= opts.kkt_tol {
            return Ok(finish(candidate, a, iterations));
        }
        let settled = (a.phi - prev_phi).abs() <= 1e-10 * (1.0 + a.phi.abs());
        if a.feasibility <= opts.feas_tol && cap > opts.penalty_max && (settled || c >= 1e16) {
            return Ok(finish(candidate, a, iterations));
        }
        prev_phi = a.phi;
        last = Some(a);

        if c >= cap {
            at_cap += 1;
            if violation > 1e-6 && violation >= 0.5 * best_violation && at_cap >= 5 {
                return Err(InnerError::Infeasible(violation));
            }
            if at_cap >= 5 && violation <= 1e-6 {
                cap = (cap * 10.0).min(1e16);
            }
        }
        best_violation = best_violation.min(violation);
        c = (c * opts.penalty_factor).min(cap);
    }
    let residual = last.map_or(f64::INFINITY, |a| a.kkt());
    Err(InnerError::MaxIterations {
        iterations,
        residual,
    })
}

fn finish(w: Vec<f64>, a: Assessment, iterations: usize) -> InnerSolution {
    let active = ActiveSet {
        indices: (0..a.g.len()).filter(|&i| a.g[i].abs() <= tol::ACTIVE).collect(),
        tolerance: tol::ACTIVE,
    };
    InnerSolution {
        multiplier_set_empty: a.stationarity > tol::CERT,
        kkt_residual: a.kkt(),
        value: a.phi,
        lambda: a.lambda,
        active,
        iterations,
        w,
    }
}

/// `Lambda(x, y, w)`: multipliers of the proximal problem at `w`.
pub fn inner_multiplier_polyhedron(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    w: &[f64],
) -> Result<Polyhedron, InnerError> {
    prob.point(x, y)?;
    prob.point(x, w)?;
    let inner = Inner { prob, x, y };
    let l = inner.eval(w, false)?;
    let active = model::active_set_from_values(&l.g, tol::ACTIVE)?;
    let p = l.g.len();
    let mut poly = Polyhedron::nonnegative(p);
    for j in 0..prob.m {
        let row: Vec<f64> = (0..p).map(|i| l.grad_g[i][j]).collect();
        poly.add_eq(row, -l.grad_phi[j]);
    }
    for i in 0..p {
        if !active.contains(i) {
            poly.fix(i, 0.0);
        }
    }
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{lp_feasible, vertices, LpStatus};
    use crate::model::ProblemSpec;
    use crate::model::{ConstraintConvexity, ObjectiveConvexity};
    use alloc::string::ToString;

    fn worked(gamma: f64) -> BilevelProblem {
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
            .with_gamma(gamma, model::GammaBound::StrongConvexity)
            .unwrap()
    }

    fn toy(m: usize, gamma: f64) -> BilevelProblem {
        let mut f = alloc::string::String::from("0");
        for j in 1..=m {
            f.push_str(&alloc::format!(" + 0.5*y{j}^2"));
        }
        let spec = ProblemSpec {
            n: 1,
            m,
            gamma,
            rho_f: 0.0,
            f_convexity: ObjectiveConvexity::JointlyWeaklyConvex,
            g_convexity: ConstraintConvexity::JointlyQuasiconvex,
            upper_objective: "y1".to_string(),
            upper_constraints: vec![],
            lower_objective: f,
            lower_constraints: vec![],
        };
        BilevelProblem::from_spec(&spec).unwrap()
    }

    #[test]
    fn worked_example_at_solution() {
        for gamma in [0.1, 0.2, 0.4] {
            let s = solve_inner(&worked(gamma), &[0.0], &[-1.0]).unwrap();
            assert!((s.w[0] + 1.0).abs() <= 1e-10, "{s:?}");
            assert!((s.value + 1.0).abs() <= 1e-10);
            assert_eq!(s.active.indices, vec![1]);
            assert!((s.lambda[1] - 2.0).abs() <= 1e-8 && s.lambda[0] == 0.0);
            assert!(!s.multiplier_set_empty);
        }
    }

    #[test]
    fn worked_example_interior() {
        let s = solve_inner(&worked(0.2), &[0.0], &[0.0]).unwrap();
        assert!(s.w[0].abs() <= 1e-10 && s.value.abs() <= 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn quadratic_toy_closed_form() {
        let s = solve_inner(&toy(1, 0.5), &[0.0], &[1.0]).unwrap();
        assert!((s.w[0] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((s.value - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn start_independence() {
        let prob = worked(0.2);
        let a = solve_inner(&prob, &[0.3], &[0.5]).unwrap();
        let b = solve_inner_from(&prob, &[0.3], &[0.5], &[-0.6]).unwrap();
        assert!((a.w[0] - b.w[0]).abs() <= 1e-9);
    }

    #[test]
    fn refuses_nonconvex_regime() {
        let prob = worked(0.2);
        let mut bad = prob.clone();
        bad.gamma = 0.5;
        assert!(matches!(
            solve_inner(&bad, &[0.0], &[0.0]),
            Err(InnerError::NotStronglyConvex(_))
        ));
    }

    #[test]
    fn detects_infeasible_lower_level() {
        let spec = ProblemSpec {
            n: 1,
            m: 1,
            gamma: 0.5,
            rho_f: 0.0,
            f_convexity: ObjectiveConvexity::None,
            g_convexity: ConstraintConvexity::None,
            upper_objective: "y1".to_string(),
            upper_constraints: vec![],
            lower_objective: "y1^2".to_string(),
            lower_constraints: vec!["y1^2 + 1".to_string()],
        };
        let prob = BilevelProblem::from_spec(&spec).unwrap();
        assert!(matches!(
            solve_inner(&prob, &[0.0], &[0.0]),
            Err(InnerError::Infeasible(_))
        ));
    }

    #[test]
    fn multiplier_set_empty_flag() {
        // Feasible set {0} given by y^2 <= 0: no multiplier exists at w = 0.
        let spec = ProblemSpec {
            n: 1,
            m: 1,
            gamma: 0.5,
            rho_f: 0.0,
            f_convexity: ObjectiveConvexity::None,
            g_convexity: ConstraintConvexity::None,
            upper_objective: "y1".to_string(),
            upper_constraints: vec![],
            lower_objective: "y1".to_string(),
            lower_constraints: vec!["y1^2".to_string()],
        };
        let prob = BilevelProblem::from_spec(&spec).unwrap();
        let s = solve_inner(&prob, &[0.0], &[1.0]).unwrap();
        assert!(s.w[0].abs() <= 1e-4, "{s:?}");
        assert!(s.multiplier_set_empty);
    }

    #[test]
    fn multiplier_polyhedra() {
        let prob = worked(0.2);
        let poly = inner_multiplier_polyhedron(&prob, &[0.0], &[-1.0], &[-1.0]).unwrap();
        assert_eq!(vertices(&poly).unwrap(), vec![vec![0.0, 2.0]]);

        let t = toy(1, 0.5);
        let poly = inner_multiplier_polyhedron(&t, &[0.0], &[1.0], &[2.0 / 3.0]).unwrap();
        assert_eq!(vertices(&poly).unwrap(), vec![vec![0.0]]);
        let off = inner_multiplier_polyhedron(&t, &[0.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(lp_feasible(&off).unwrap().status, LpStatus::Infeasible);
    }
}
