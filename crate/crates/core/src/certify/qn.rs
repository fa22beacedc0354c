//! Directional quasi-normality of the envelope reformulation.
//!
//! Step one is exact: the homogeneous cone of abnormal multipliers
//! `(alpha, nu_g, nu_G)` with
//! `0 in alpha grad f - alpha D + grad g^T nu_g + grad G^T nu_G`, where `D`
//! replaces the directional subdifferential of `v_gamma` by a polyhedral
//! estimate. Step two samples points `(x, y) + t (u', v')` with `(u', v')`
//! near `d` and tests whether the sign conditions of some extreme multiplier
//! can be realized.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_direction, derivative_bounds, require_feasible, row_tol, CertifyError, CqCheck, CqReport, CqVerdict,
    PointData, SamplingEvidence,
};
use crate::envelope::{self, Anchor, Direction, Hypotheses, Regime, SubdiffRule};
use crate::expr::EvalPoint;
use crate::inner;
use crate::linalg;
use crate::lp::{self, Polyhedron, Sense};
use crate::model::BilevelProblem;
use crate::tol;

/// Constraint values above this count as violated in sampling.
pub const POSITIVE_CONSTRAINT: f64 = 1e-12;
/// `f - v_gamma` above this counts as positive in sampling.
pub const POSITIVE_GAP: f64 = 1e-10;

/// Replacement for the directional subdifferential of `v_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnVariant {
    /// Union over critical directions, under MSCQ and RS.
    CriticalUnion,
    /// `Lambda(x, y; u, v)`, under joint weak convexity and Guignard CQ.
    Directional,
    /// `Lambda(x, y; u, d)` for one RCR-critical `d`, under RCR and RS.
    Rcr,
}

impl QnVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            QnVariant::CriticalUnion => "i",
            QnVariant::Directional => "ii",
            QnVariant::Rcr => "iii",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "i" | "critical-union" => Some(QnVariant::CriticalUnion),
            "ii" | "directional" => Some(QnVariant::Directional),
            "iii" | "rcr" => Some(QnVariant::Rcr),
            _ => None,
        }
    }

    fn rule(self) -> SubdiffRule {
        match self {
            QnVariant::CriticalUnion => SubdiffRule::CriticalUnion,
            QnVariant::Directional => SubdiffRule::Guignard,
            QnVariant::Rcr => SubdiffRule::Rcr,
        }
    }

    fn regime(self) -> Regime {
        match self {
            QnVariant::CriticalUnion => Regime::Dini,
            QnVariant::Directional => Regime::WeaklyConvex,
            QnVariant::Rcr => Regime::Rcr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    /// Decreasing step lengths `t_k`.
    pub steps: Vec<f64>,
    pub per_step: usize,
    /// Perturbation radius, relative to `max(|d|, 1)`, at the first step;
    /// it shrinks like `sqrt(t_k / t_0)`.
    pub half_angle: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            steps: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            per_step: 16,
            half_angle: 0.1,
            seed: 0x5eed,
        }
    }
}

/// Variable layout `(alpha, nu_g, nu_G, theta, eta)`.
struct Layout {
    p: usize,
    q: usize,
    k: usize,
    j: usize,
}

impl Layout {
    fn total(&self) -> usize {
        1 + self.p + self.q + self.k + self.j
    }
    fn targets(&self) -> usize {
        1 + self.p + self.q
    }
}

pub fn check_quasi_normality(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    variant: QnVariant,
    hyp: &Hypotheses,
    plan: &SamplingPlan,
) -> Result<CqReport, CertifyError> {
    check_direction(prob, d)?;
    if plan.steps.is_empty() || plan.steps.iter().any(|t| !(*t > 0.0)) || plan.steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CertifyError::BadDirection("sampling steps must be positive and decreasing".into()));
    }
    require_feasible(prob, x, y)?;
    let pd = PointData::new(prob, x, y)?;
    let a = Anchor::at_feasible(prob, x, y)?;
    let est = envelope::subdiff_estimate_at(prob, &a, d, variant.rule(), hyp)?;
    let mut notes = Vec::new();
    if est.unbounded {
        notes.push(format!("unbounded multiplier set: {} horizon rays included", est.rays.len()));
    }
    let lay = Layout {
        p: prob.p(),
        q: prob.q(),
        k: est.points.len(),
        j: est.rays.len(),
    };
    let dim = prob.n + prob.m;
    let dz = d.concat();
    let mut cone = Polyhedron::nonnegative(lay.total());
    for c in 0..dim {
        let mut row = vec![0.0; lay.total()];
        row[0] = pd.grad_f[c];
        for i in 0..lay.p {
            row[1 + i] = pd.grad_lower[i][c];
        }
        for l in 0..lay.q {
            row[1 + lay.p + l] = pd.grad_upper[l][c];
        }
        for (k, xi) in est.points.iter().enumerate() {
            row[lay.targets() + k] = -xi[c];
        }
        for (j, r) in est.rays.iter().enumerate() {
            row[lay.targets() + lay.k + j] = -r[c];
        }
        cone.add_eq(row, 0.0);
    }
    let mut sum = vec![0.0; lay.total()];
    sum[0] = -1.0;
    for k in 0..lay.k {
        sum[lay.targets() + k] = 1.0;
    }
    cone.add_eq(sum, 0.0);
    for i in 0..lay.p {
        let row = &pd.grad_lower[i];
        if !pd.lower_active.contains(i) || linalg::dot(row, &dz).abs() > row_tol(row, &dz) {
            cone.fix(1 + i, 0.0);
        }
    }
    for l in 0..lay.q {
        let row = &pd.grad_upper[l];
        if !pd.upper_active.contains(l) || linalg::dot(row, &dz).abs() > row_tol(row, &dz) {
            cone.fix(1 + lay.p + l, 0.0);
        }
    }
    match derivative_bounds(prob, &a, d, hyp, Some(variant.regime())) {
        Ok(der) => {
            let fd = linalg::dot(&pd.grad_f, &dz);
            let t = tol::CERT * (1.0 + fd.abs() + der.lower.abs().max(der.upper.abs()));
            if fd - der.upper > t || der.lower - fd > t {
                cone.fix(0, 0.0);
                notes.push(format!(
                    "alpha = 0: grad f . d - v' lies in [{:e}, {:e}]",
                    fd - der.upper,
                    fd - der.lower
                ));
            }
        }
        Err(CertifyError::RegimeUnavailable(why)) => {
            notes.push(format!("alpha left free: {}", why));
        }
        Err(e) => return Err(e),
    }

    let mut labels = vec![String::from("alpha")];
    labels.extend((1..=lay.p).map(|i| format!("nu_g{}", i)));
    labels.extend((1..=lay.q).map(|l| format!("nu_G{}", l)));
    let targets: Vec<usize> = (0..lay.targets()).collect();
    let verdict = lp::cone_only_zero_on(&cone, &targets)?;
    let marginal = verdict.marginal;
    if verdict.only_zero {
        return Ok(CqReport {
            check: CqCheck::QuasiNormalityDirection,
            verdict: CqVerdict::Holds,
            labels,
            lp_witnesses: Vec::new(),
            sampling_evidence: Vec::new(),
            marginal,
            notes,
        });
    }

    let rays = extreme_rays(&cone, &lay, verdict.witness.as_deref(), &mut notes)?;
    let witness_tol = tol::FEAS * cone.scale().max(1.0) * 10.0;
    let rays: Vec<Vec<f64>> = rays.into_iter().filter(|r| cone.max_violation(r) <= witness_tol).collect();
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for r in &rays {
        let s: Vec<usize> = (0..lay.targets()).filter(|&i| r[i] > tol::FEAS).collect();
        if !s.is_empty() && !supports.contains(&s) {
            supports.push(s);
        }
    }
    let mut evidence = Vec::new();
    let mut realized = false;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    for s in &supports {
        let (ok, ev) = sample_support(prob, x, y, d, s, &labels, &lay, plan, &mut rng)?;
        evidence.extend(ev);
        if ok {
            realized = true;
            notes.push(format!("sign conditions realized for support {{{}}}", names(s, &labels).join(", ")));
        }
    }
    Ok(CqReport {
        check: CqCheck::QuasiNormalityDirection,
        verdict: if realized {
            CqVerdict::Fails
        } else {
            CqVerdict::CertificateModuloSampling
        },
        labels,
        lp_witnesses: rays.iter().map(|r| r[..lay.targets()].to_vec()).collect(),
        sampling_evidence: evidence,
        marginal,
        notes,
    })
}

fn names(s: &[usize], labels: &[String]) -> Vec<String> {
    s.iter().map(|&i| labels[i].clone()).collect()
}

/// Elements of the cone normalized by the sum of target coordinates: all
/// vertices when the dimension allows, else one maximizer per target.
fn extreme_rays(
    cone: &Polyhedron,
    lay: &Layout,
    witness: Option<&[f64]>,
    notes: &mut Vec<String>,
) -> Result<Vec<Vec<f64>>, CertifyError> {
    let mut slice = cone.clone();
    let mut norm = vec![0.0; lay.total()];
    for v in norm.iter_mut().take(lay.targets()) {
        *v = 1.0;
    }
    slice.add_eq(norm, 1.0);
    if lay.total() <= lp::VERTEX_VAR_LIMIT {
        return Ok(lp::vertices(&slice)?);
    }
    notes.push("cone too large for vertex enumeration: per-coordinate witnesses sampled".into());
    let mut out: Vec<Vec<f64>> = witness.into_iter().map(<[f64]>::to_vec).collect();
    for i in 0..lay.targets() {
        let mut c = vec![0.0; lay.total()];
        c[i] = 1.0;
        let o = lp::lp_optimize(&c, &slice, Sense::Max)?;
        if o.status == lp::LpStatus::Optimal && o.value > tol::FEAS {
            out.push(o.witness);
        }
    }
    Ok(out)
}

/// Probes every level of `plan` for a point where all functions attached to
/// `support` are positive.
#[allow(clippy::too_many_arguments)]
fn sample_support(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    d: &Direction,
    support: &[usize],
    labels: &[String],
    lay: &Layout,
    plan: &SamplingPlan,
    rng: &mut ChaCha8Rng,
) -> Result<(bool, Vec<SamplingEvidence>), CertifyError> {
    let n = prob.n;
    let dz = d.concat();
    let radius = plan.half_angle * linalg::norm2(&dz).max(1.0);
    let t0 = plan.steps[0];
    let mut evidence = Vec::new();
    let mut all = true;
    for &t in &plan.steps {
        let h = radius * libm::sqrt(t / t0);
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for probe in 0..plan.per_step.max(1) {
            let mut dir = dz.clone();
            if probe > 0 {
                let mut z: Vec<f64> = (0..dz.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let nz = linalg::norm2(&z).max(1e-300);
                let r = h * rng.random_range(0.0..1.0);
                z.iter_mut().for_each(|c| *c *= r / nz);
                for (a, b) in dir.iter_mut().zip(&z) {
                    *a += b;
                }
            }
            let xs: Vec<f64> = (0..n).map(|i| x[i] + t * dir[i]).collect();
            let ys: Vec<f64> = (0..prob.m).map(|j| y[j] + t * dir[n + j]).collect();
            let Some(vals) = support_values(prob, &xs, &ys, support, lay)? else {
                continue;
            };
            let margin = support
                .iter()
                .zip(&vals)
                .map(|(&i, v)| v - if i == 0 { POSITIVE_GAP } else { POSITIVE_CONSTRAINT })
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().map_or(true, |b| margin > b.0) {
                best = Some((margin, dir, vals));
            }
        }
        let ok = best.as_ref().is_some_and(|b| b.0 > 0.0);
        all &= ok;
        let (direction, values) = best.map(|b| (b.1, b.2)).unwrap_or_default();
        evidence.push(SamplingEvidence {
            support: names(support, labels),
            t,
            direction,
            values,
            realized: ok,
        });
    }
    Ok((all, evidence))
}

/// Values `f - v_gamma`, `g_i`, `G_l` attached to the support coordinates;
/// `None` when the point cannot be evaluated.
fn support_values(
    prob: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    support: &[usize],
    lay: &Layout,
) -> Result<Option<Vec<f64>>, CertifyError> {
    let pt = EvalPoint::new(x.to_vec(), y.to_vec());
    let mut out = Vec::with_capacity(support.len());
    for &i in support {
        let v = if i == 0 {
            let Ok(f) = prob.lower_objective.eval(&pt) else {
                return Ok(None);
            };
            match inner::solve_inner(prob, x, y) {
                Ok(s) => f - s.value,
                Err(_) => return Ok(None),
            }
        } else if i <= lay.p {
            match prob.lower_constraints[i - 1].eval(&pt) {
                Ok(v) => v,
                Err(_) => return Ok(None),
            }
        } else {
            match prob.upper_constraints[i - 1 - lay.p].eval(&pt) {
                Ok(v) => v,
                Err(_) => return Ok(None),
            }
        };
        out.push(v);
    }
    Ok(Some(out))
}
