//! LP searches for the stationarity systems
//!
//! `0 = grad F + grad g^T (lambda_g - alpha lambda_bar) + grad G^T lambda_G`
//!
//! with `lambda_g ⊥ g`, `lambda_G ⊥ G`, `lambda_bar in Lambda(x, y)` (sKKT),
//! and additionally `lambda_g ⊥ grad g d`, `lambda_G ⊥ grad G d`,
//! `lambda_bar in Lambda(x, y; d)` for a critical direction `d` (wcKKT).
//!
//! The product `alpha lambda_bar` is replaced by `mu >= 0` with the
//! homogenized membership rows `alpha grad_y f + grad_y g^T mu = 0`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_direction, critical_cone_at, require_feasible, row_tol, CertifyError, PointData};
use crate::envelope::{Anchor, Direction, Hypotheses};
use crate::linalg;
use crate::lp::{self, LpStatus, Polyhedron, Sense};
use crate::model::BilevelProblem;
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaritySystem {
    /// Nondirectional system.
    Skkt,
    /// Directional system at a critical direction.
    Wckkt,
}

impl StationaritySystem {
    pub fn as_str(self) -> &'static str {
        match self {
            StationaritySystem::Skkt => "skkt",
            StationaritySystem::Wckkt => "wckkt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "skkt" => Some(StationaritySystem::Skkt),
            "wckkt" => Some(StationaritySystem::Wckkt),
            _ => None,
        }
    }
}

/// How `alpha` was treated in the LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `alpha` free, `mu = alpha lambda_bar`.
    Joint,
    /// `alpha = 1`.
    Normal,
    /// `alpha = 0`, `mu = 0`, `lambda_bar` any vertex of the multiplier set.
    Abnormal,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Joint => "joint",
            Branch::Normal => "normal",
            Branch::Abnormal => "abnormal",
        }
    }
}

/// Multipliers `(mu_G, mu_g, mu_e, mu_lambda)` of the S-stationarity system.
#[derive(Debug, Clone, PartialEq)]
pub struct SMultipliers {
    pub mu_upper: Vec<f64>,
    pub mu_g: Vec<f64>,
    pub mu_e: Vec<f64>,
    pub mu_lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityCertificate {
    pub system: StationaritySystem,
    pub branch: Branch,
    pub alpha: f64,
    pub lambda_g: Vec<f64>,
    pub lambda_upper: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub direction: Option<Direction>,
    /// Max-norm of the stationarity equation.
    pub residual: f64,
    /// Largest violation over every row: equation, membership, signs,
    /// complementarity and orthogonality.
    pub max_violation: f64,
    /// `(lambda_G, lambda_g - alpha lambda_bar, 0, 0)`.
    pub induced: SMultipliers,
}

impl StationarityCertificate {
    pub fn norm1(&self) -> f64 {
        self.alpha + linalg::norm1(&self.lambda_g) + linalg::norm1(&self.lambda_upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutcome {
    pub branch: Branch,
    pub certificate: Option<StationarityCertificate>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaritySearch {
    pub system: StationaritySystem,
    pub branches: Vec<BranchOutcome>,
    pub best: Option<StationarityCertificate>,
    /// Rows the direction adds to the nondirectional system.
    pub directional_rows: Vec<String>,
}

/// Best certificate for `system`, or `None` when no branch finds one.
pub fn verify_stationarity(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: Option<&Direction>,
    system: StationaritySystem,
    hyp: &Hypotheses,
) -> Result<Option<StationarityCertificate>, CertifyError> {
    Ok(search_stationarity(prob, x, y, d, system, hyp)?.best)
}

/// Runs every branch and reports each outcome.
pub fn search_stationarity(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: Option<&Direction>,
    system: StationaritySystem,
    hyp: &Hypotheses,
) -> Result<StationaritySearch, CertifyError> {
    require_feasible(prob, x, y)?;
    let pd = PointData::new(prob, x, y)?;
    let dir = match system {
        StationaritySystem::Skkt => None,
        StationaritySystem::Wckkt => {
            let d = d.ok_or_else(|| CertifyError::NotCritical("no direction given".into()))?;
            check_direction(prob, d)?;
            let a = Anchor::at_feasible(prob, x, y)?;
            let cc = critical_cone_at(prob, &pd, &a, d, hyp)?;
            if !cc.member {
                let failing: Vec<String> = cc.failing().map(|r| format!("{} = {:e}", r.label, r.value)).collect();
                return Err(CertifyError::NotCritical(failing.join(", ")));
            }
            Some(d.clone())
        }
    };
    let lay = Layout::new(prob);
    let (zeros, directional_rows) = fixed_zeros(&pd, &lay, dir.as_ref());
    let mut base = Polyhedron::nonnegative(lay.total());
    let dim = prob.n + prob.m;
    for k in 0..dim {
        let mut row = vec![0.0; lay.total()];
        for i in 0..lay.p {
            row[lay.lg(i)] = pd.grad_lower[i][k];
            row[lay.mu(i)] = -pd.grad_lower[i][k];
        }
        for l in 0..lay.q {
            row[lay.lu(l)] = pd.grad_upper[l][k];
        }
        base.add_eq(row, -pd.grad_upper_obj[k]);
    }
    for j in 0..prob.m {
        let mut row = vec![0.0; lay.total()];
        row[0] = pd.grad_f[prob.n + j];
        for i in 0..lay.p {
            row[lay.mu(i)] = pd.grad_lower[i][prob.n + j];
        }
        base.add_eq(row, 0.0);
    }
    for &z in &zeros {
        base.fix(z, 0.0);
    }

    let mut branches = Vec::new();
    for branch in [Branch::Joint, Branch::Normal, Branch::Abnormal] {
        let mut poly = base.clone();
        match branch {
            Branch::Joint => {}
            Branch::Normal => {
                poly.fix(0, 1.0);
            }
            Branch::Abnormal => {
                poly.fix(0, 0.0);
                for i in 0..lay.p {
                    poly.fix(lay.mu(i), 0.0);
                }
            }
        }
        let outcome = match select(&poly, &lay)? {
            None => BranchOutcome {
                branch,
                certificate: None,
                note: Some("infeasible".into()),
            },
            Some(z) => {
                let alpha = z[0];
                let lambda_bar = if branch == Branch::Abnormal || alpha <= tol::FEAS {
                    if branch == Branch::Joint && (0..lay.p).any(|i| z[lay.mu(i)] > tol::FEAS) {
                        branches.push(BranchOutcome {
                            branch,
                            certificate: None,
                            note: Some("alpha = 0 with mu in the recession cone of the multiplier set".into()),
                        });
                        continue;
                    }
                    match some_multiplier(&pd, &lay, &zeros, prob)? {
                        Some(l) => l,
                        None => {
                            branches.push(BranchOutcome {
                                branch,
                                certificate: None,
                                note: Some("lower multiplier set is empty".into()),
                            });
                            continue;
                        }
                    }
                } else {
                    (0..lay.p).map(|i| z[lay.mu(i)] / alpha).collect()
                };
                let alpha = if branch == Branch::Abnormal || alpha <= tol::FEAS { 0.0 } else { alpha };
                let mut cert = StationarityCertificate {
                    system,
                    branch,
                    alpha,
                    lambda_g: (0..lay.p).map(|i| z[lay.lg(i)]).collect(),
                    lambda_upper: (0..lay.q).map(|l| z[lay.lu(l)]).collect(),
                    lambda_bar,
                    direction: dir.clone(),
                    residual: 0.0,
                    max_violation: 0.0,
                    induced: SMultipliers {
                        mu_upper: Vec::new(),
                        mu_g: Vec::new(),
                        mu_e: vec![0.0; prob.m],
                        mu_lambda: vec![0.0; lay.p],
                    },
                };
                cert.induced.mu_upper = cert.lambda_upper.clone();
                cert.induced.mu_g = (0..lay.p).map(|i| cert.lambda_g[i] - cert.alpha * cert.lambda_bar[i]).collect();
                let (res, viol) = violations(&pd, prob, &cert);
                cert.residual = res;
                cert.max_violation = viol;
                if viol <= tol::CERT {
                    BranchOutcome {
                        branch,
                        certificate: Some(cert),
                        note: None,
                    }
                } else {
                    BranchOutcome {
                        branch,
                        certificate: None,
                        note: Some(format!("unverified: violation {:e}", viol)),
                    }
                }
            }
        };
        branches.push(outcome);
    }
    let best = branches
        .iter()
        .filter_map(|b| b.certificate.as_ref())
        .fold(None::<&StationarityCertificate>, |acc, c| match acc {
            Some(b) if b.norm1() < c.norm1() - tol::FEAS => Some(b),
            Some(b) if (b.norm1() - c.norm1()).abs() <= tol::FEAS && b.alpha >= c.alpha => Some(b),
            _ => Some(c),
        })
        .cloned();
    Ok(StationaritySearch {
        system,
        branches,
        best,
        directional_rows,
    })
}

/// Variable layout `(alpha, lambda_g, lambda_G, mu)`.
struct Layout {
    p: usize,
    q: usize,
}

impl Layout {
    fn new(prob: &BilevelProblem) -> Self {
        Layout { p: prob.p(), q: prob.q() }
    }
    fn total(&self) -> usize {
        1 + 2 * self.p + self.q
    }
    fn lg(&self, i: usize) -> usize {
        1 + i
    }
    fn lu(&self, l: usize) -> usize {
        1 + self.p + l
    }
    fn mu(&self, i: usize) -> usize {
        1 + self.p + self.q + i
    }
}

/// Variables fixed to zero by complementarity and, for a direction, by
/// orthogonality.
fn fixed_zeros(pd: &PointData, lay: &Layout, d: Option<&Direction>) -> (Vec<usize>, Vec<String>) {
    let mut zeros = Vec::new();
    let mut rows = Vec::new();
    for i in 0..lay.p {
        if !pd.lower_active.contains(i) {
            zeros.push(lay.lg(i));
            zeros.push(lay.mu(i));
        }
    }
    for l in 0..lay.q {
        if !pd.upper_active.contains(l) {
            zeros.push(lay.lu(l));
        }
    }
    if let Some(d) = d {
        let dz = d.concat();
        for &i in &pd.lower_active.indices {
            let s = linalg::dot(&pd.grad_lower[i], &dz);
            if s.abs() > row_tol(&pd.grad_lower[i], &dz) {
                zeros.push(lay.lg(i));
                zeros.push(lay.mu(i));
                rows.push(format!("lambda_g{} = 0, lambda_bar{} = 0 (grad g{} . d = {:e})", i + 1, i + 1, i + 1, s));
            }
        }
        for &l in &pd.upper_active.indices {
            let s = linalg::dot(&pd.grad_upper[l], &dz);
            if s.abs() > row_tol(&pd.grad_upper[l], &dz) {
                zeros.push(lay.lu(l));
                rows.push(format!("lambda_G{} = 0 (grad G{} . d = {:e})", l + 1, l + 1, s));
            }
        }
    }
    zeros.sort_unstable();
    zeros.dedup();
    (zeros, rows)
}

/// Minimizes `alpha + |lambda_g|_1 + |lambda_G|_1`, then maximizes `alpha`
/// among near-minimizers.
fn select(poly: &Polyhedron, lay: &Layout) -> Result<Option<Vec<f64>>, CertifyError> {
    let mut c = vec![0.0; lay.total()];
    for v in c.iter_mut().take(1 + lay.p + lay.q) {
        *v = 1.0;
    }
    let first = lp::lp_optimize(&c, poly, Sense::Min)?;
    if first.status != LpStatus::Optimal {
        return Ok(None);
    }
    let mut tie = poly.clone();
    tie.add_ineq(c, first.value * (1.0 + 1e-9) + 1e-12);
    let mut a = vec![0.0; lay.total()];
    a[0] = 1.0;
    let second = lp::lp_optimize(&a, &tie, Sense::Max)?;
    Ok(Some(if second.status == LpStatus::Optimal {
        second.witness
    } else {
        first.witness
    }))
}

/// A vertex of the (directional) lower multiplier set.
fn some_multiplier(
    pd: &PointData,
    lay: &Layout,
    zeros: &[usize],
    prob: &BilevelProblem,
) -> Result<Option<Vec<f64>>, CertifyError> {
    let mut poly = Polyhedron::nonnegative(lay.p);
    for j in 0..prob.m {
        let row: Vec<f64> = (0..lay.p).map(|i| pd.grad_lower[i][prob.n + j]).collect();
        poly.add_eq(row, -pd.grad_f[prob.n + j]);
    }
    for i in 0..lay.p {
        if zeros.contains(&lay.mu(i)) {
            poly.fix(i, 0.0);
        }
    }
    let out = lp::lp_optimize(&vec![1.0; lay.p], &poly, Sense::Min)?;
    Ok((out.status == LpStatus::Optimal).then_some(out.witness))
}

/// Re-verifies a certificate from scratch; returns `(residual, max_violation)`.
pub fn verify_certificate(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    cert: &StationarityCertificate,
) -> Result<(f64, f64), CertifyError> {
    let pd = PointData::new(prob, x, y)?;
    Ok(violations(&pd, prob, cert))
}

fn violations(pd: &PointData, prob: &BilevelProblem, c: &StationarityCertificate) -> (f64, f64) {
    let (n, m) = (prob.n, prob.m);
    let mut eq = pd.grad_upper_obj.clone();
    for (i, row) in pd.grad_lower.iter().enumerate() {
        linalg::axpy(c.lambda_g[i] - c.alpha * c.lambda_bar[i], row, &mut eq);
    }
    for (l, row) in pd.grad_upper.iter().enumerate() {
        linalg::axpy(c.lambda_upper[l], row, &mut eq);
    }
    let residual = linalg::norm_inf(&eq);
    let mut memb = pd.grad_f[n..n + m].to_vec();
    for (i, row) in pd.grad_lower.iter().enumerate() {
        linalg::axpy(c.lambda_bar[i], &row[n..], &mut memb);
    }
    let mut viol = residual.max(linalg::norm_inf(&memb)).max(-c.alpha);
    for (i, gi) in pd.lower.iter().enumerate() {
        viol = viol
            .max(-c.lambda_g[i])
            .max(-c.lambda_bar[i])
            .max((c.lambda_g[i] * gi).abs())
            .max((c.lambda_bar[i] * gi).abs());
    }
    for (l, gl) in pd.upper.iter().enumerate() {
        viol = viol.max(-c.lambda_upper[l]).max((c.lambda_upper[l] * gl).abs());
    }
    if let Some(d) = &c.direction {
        let dz = d.concat();
        for (i, row) in pd.grad_lower.iter().enumerate() {
            let s = linalg::dot(row, &dz);
            viol = viol.max((c.lambda_g[i] * s).abs()).max((c.lambda_bar[i] * s).abs());
        }
        for (l, row) in pd.grad_upper.iter().enumerate() {
            viol = viol.max((c.lambda_upper[l] * linalg::dot(row, &dz)).abs());
        }
    }
    (residual, viol)
}
