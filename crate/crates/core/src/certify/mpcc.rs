//! S-stationarity of the complementarity reformulation
//!
//! `min F  s.t.  G <= 0,  l(x, y, lambda) = grad_y f + grad_y g^T lambda = 0,
//!  0 <= lambda ⊥ -g >= 0`
//!
//! and its comparison with the envelope stationarity systems.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::stationarity::{search_stationarity, SMultipliers, StationarityCertificate, StationaritySystem};
use super::{lower_multiplier_set, require_feasible, CertifyError, PointData};
use crate::envelope::{Direction, Hypotheses};
use crate::expr;
use crate::linalg::{self, Matrix};
use crate::lp::{self, LpStatus, Polyhedron};
use crate::model::BilevelProblem;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct SStationarityReport {
    pub stationary: bool,
    pub multipliers: Option<SMultipliers>,
    /// Violation of the system by `multipliers`.
    pub residual: f64,
    /// Biactive indices `I_0`: `g_i = 0` and `lambda_bar_i = 0`.
    pub biactive: Vec<usize>,
}

/// Data of the S-stationarity system at `(x, y, lambda_bar)`.
struct SSystem {
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    grad_upper_obj: Vec<f64>,
    grad_upper: Vec<Vec<f64>>,
    upper_active: Vec<bool>,
    grad_lower: Vec<Vec<f64>>,
    lower_active: Vec<bool>,
    /// `grad_{x,y} l_j`, one row per `j`.
    grad_l: Vec<Vec<f64>>,
    positive: Vec<bool>,
    biactive: Vec<usize>,
}

impl SSystem {
    fn new(prob: &BilevelProblem, x: &[f64], y: &[f64], lambda_bar: &[f64]) -> Result<Self, CertifyError> {
        let (n, m, p) = (prob.n, prob.m, prob.p());
        if lambda_bar.len() != p {
            return Err(CertifyError::InfeasibleTriple(format!(
                "lambda has length {}, expected {}",
                lambda_bar.len(),
                p
            )));
        }
        let pd = PointData::new(prob, x, y).map_err(|e| CertifyError::InfeasibleTriple(format!("{}", e)))?;
        let scale = 1.0 + linalg::norm_inf(&pd.grad_f) + linalg::norm_inf(lambda_bar);
        let mut memb = pd.grad_f[n..].to_vec();
        for (i, row) in pd.grad_lower.iter().enumerate() {
            linalg::axpy(lambda_bar[i], &row[n..], &mut memb);
        }
        if linalg::norm_inf(&memb) > tol::CERT * scale {
            return Err(CertifyError::InfeasibleTriple(format!(
                "grad_y f + grad_y g^T lambda = {:?}",
                memb
            )));
        }
        for i in 0..p {
            if lambda_bar[i] < -tol::ACTIVE {
                return Err(CertifyError::InfeasibleTriple(format!("lambda{} < 0", i + 1)));
            }
            if (lambda_bar[i] * pd.lower[i]).abs() > tol::ACTIVE * scale {
                return Err(CertifyError::InfeasibleTriple(format!(
                    "lambda{} g{} = {:e}",
                    i + 1,
                    i + 1,
                    lambda_bar[i] * pd.lower[i]
                )));
            }
        }
        let pt = prob.point(x, y)?;
        let mut hess = expr::hessian(&prob.lower_objective, &pt)?;
        for (i, g) in prob.lower_constraints.iter().enumerate() {
            if lambda_bar[i] != 0.0 {
                add_scaled(&mut hess, lambda_bar[i], &expr::hessian(g, &pt)?);
            }
        }
        let grad_l = (0..m).map(|j| hess.row(n + j).to_vec()).collect();
        let lower_active: Vec<bool> = (0..p).map(|i| pd.lower_active.contains(i)).collect();
        let positive: Vec<bool> = lambda_bar.iter().map(|l| *l > tol::ACTIVE).collect();
        let biactive = (0..p).filter(|&i| lower_active[i] && !positive[i]).collect();
        Ok(SSystem {
            n,
            m,
            p,
            q: prob.q(),
            grad_upper_obj: pd.grad_upper_obj,
            upper_active: (0..prob.q()).map(|l| pd.upper_active.contains(l)).collect(),
            grad_upper: pd.grad_upper,
            grad_lower: pd.grad_lower,
            lower_active,
            grad_l,
            positive,
            biactive,
        })
    }

    /// Variables `(mu_G, mu_g, mu_e, mu_lambda)`.
    fn total(&self) -> usize {
        self.q + 2 * self.p + self.m
    }

    fn polyhedron(&self) -> Polyhedron {
        let (q, p, m) = (self.q, self.p, self.m);
        let (og, oe, ol) = (q, q + p, q + p + m);
        let mut poly = Polyhedron::free(self.total());
        for l in 0..q {
            poly.nonneg[l] = true;
            if !self.upper_active[l] {
                poly.fix(l, 0.0);
            }
        }
        for &i in &self.biactive {
            poly.nonneg[og + i] = true;
            poly.nonneg[ol + i] = true;
        }
        for i in 0..p {
            if !self.lower_active[i] {
                poly.fix(og + i, 0.0);
            }
            if self.positive[i] {
                poly.fix(ol + i, 0.0);
            }
        }
        for k in 0..self.n + m {
            let mut row = vec![0.0; self.total()];
            for l in 0..q {
                row[l] = self.grad_upper[l][k];
            }
            for i in 0..p {
                row[og + i] = self.grad_lower[i][k];
            }
            for j in 0..m {
                row[oe + j] = self.grad_l[j][k];
            }
            poly.add_eq(row, -self.grad_upper_obj[k]);
        }
        for i in 0..p {
            let mut row = vec![0.0; self.total()];
            for j in 0..m {
                row[oe + j] = self.grad_lower[i][self.n + j];
            }
            row[ol + i] = -1.0;
            poly.add_eq(row, 0.0);
        }
        poly
    }

    fn pack(&self, mu: &SMultipliers) -> Option<Vec<f64>> {
        if mu.mu_upper.len() != self.q || mu.mu_g.len() != self.p || mu.mu_e.len() != self.m || mu.mu_lambda.len() != self.p {
            return None;
        }
        let mut z = mu.mu_upper.clone();
        z.extend_from_slice(&mu.mu_g);
        z.extend_from_slice(&mu.mu_e);
        z.extend_from_slice(&mu.mu_lambda);
        Some(z)
    }

    fn unpack(&self, z: &[f64]) -> SMultipliers {
        let (q, p, m) = (self.q, self.p, self.m);
        SMultipliers {
            mu_upper: z[..q].to_vec(),
            mu_g: z[q..q + p].to_vec(),
            mu_e: z[q + p..q + p + m].to_vec(),
            mu_lambda: z[q + p + m..].to_vec(),
        }
    }
}

fn add_scaled(a: &mut Matrix, s: f64, b: &Matrix) {
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            a[(i, j)] += s * b[(i, j)];
        }
    }
}

/// Solves the S-stationarity LP at `(x, y, lambda_bar)`.
pub fn verify_s_stationarity(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    lambda_bar: &[f64],
) -> Result<SStationarityReport, CertifyError> {
    let sys = SSystem::new(prob, x, y, lambda_bar)?;
    let poly = sys.polyhedron();
    let out = lp::lp_feasible(&poly)?;
    if out.status != LpStatus::Optimal {
        return Ok(SStationarityReport {
            stationary: false,
            multipliers: None,
            residual: f64::INFINITY,
            biactive: sys.biactive,
        });
    }
    let residual = poly.max_violation(&out.witness);
    Ok(SStationarityReport {
        stationary: residual <= tol::CERT,
        multipliers: Some(sys.unpack(&out.witness)),
        residual,
        biactive: sys.biactive,
    })
}

/// Violation of the S-stationarity system by given multipliers.
pub fn s_multiplier_violation(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    lambda_bar: &[f64],
    mu: &SMultipliers,
) -> Result<f64, CertifyError> {
    let sys = SSystem::new(prob, x, y, lambda_bar)?;
    Ok(sys.pack(mu).map_or(f64::INFINITY, |z| sys.polyhedron().max_violation(&z)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpccComparison {
    pub skkt: Option<StationarityCertificate>,
    pub wckkt: Option<StationarityCertificate>,
    /// Violation of the S-stationarity system by the multipliers induced
    /// from the sKKT certificate.
    pub induced_violation: Option<f64>,
    pub induced_s_stationary: Option<bool>,
    /// S-stationarity at each vertex of the lower multiplier set.
    pub vertex_checks: Vec<(Vec<f64>, bool)>,
    /// No sKKT certificate, yet S-stationarity holds for some multiplier.
    pub gap: bool,
    /// Rows the direction adds to the nondirectional system.
    pub directional_rows: Vec<String>,
    /// No active constraint at either level.
    pub degenerate: bool,
    pub notes: Vec<String>,
}

pub fn compare_with_mpcc(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: Option<&Direction>,
    hyp: &Hypotheses,
) -> Result<MpccComparison, CertifyError> {
    require_feasible(prob, x, y)?;
    let pd = PointData::new(prob, x, y)?;
    let skkt = search_stationarity(prob, x, y, None, StationaritySystem::Skkt, hyp)?.best;
    let mut notes = Vec::new();
    let (wckkt, directional_rows) = match d {
        Some(d) => match search_stationarity(prob, x, y, Some(d), StationaritySystem::Wckkt, hyp) {
            Ok(s) => (s.best, s.directional_rows),
            Err(CertifyError::NotCritical(why)) => {
                notes.push(format!("direction not critical: {}", why));
                (None, Vec::new())
            }
            Err(e) => return Err(e),
        },
        None => (None, Vec::new()),
    };
    let (induced_violation, induced_s_stationary) = match &skkt {
        Some(c) => {
            let v = s_multiplier_violation(prob, x, y, &c.lambda_bar, &c.induced)?;
            let lp_ok = verify_s_stationarity(prob, x, y, &c.lambda_bar)?.stationary;
            (Some(v), Some(v <= tol::CERT && lp_ok))
        }
        None => (None, None),
    };
    let mut vertex_checks = Vec::new();
    for lam in lower_multiplier_set(prob, x, y, None)?.vertices()? {
        let ok = verify_s_stationarity(prob, x, y, &lam)?.stationary;
        vertex_checks.push((lam, ok));
    }
    let gap = skkt.is_none() && vertex_checks.iter().any(|(_, ok)| *ok);
    Ok(MpccComparison {
        skkt,
        wckkt,
        induced_violation,
        induced_s_stationary,
        vertex_checks,
        gap,
        directional_rows,
        degenerate: pd.upper_active.is_empty() && pd.lower_active.is_empty(),
        notes,
    })
}
