//! The embedded worked example: `F = (x-y)^2`, `f = -(x-y)^2`,
//! `g = (y-x-1, x-y-1)`, analysed at `(x, y) = (0, -1)`.

use bec_core::{
    certify, check_quasi_normality, dir_derivative, expr, fd_dir_derivative, in_critical_cone,
    lower_multiplier_set, solve_inner, verify_certificate, verify_stationarity, BilevelProblem, CqVerdict,
    Direction, EvalPoint, GammaBound, Hypotheses, QnVariant, Regime, SamplingPlan, StationaritySystem,
    DEFAULT_FD_STEPS,
};

use crate::blp;
use crate::commands::{Failure, FD_AGREEMENT};
use crate::fixtures;
use crate::report::{num, vector};

pub const GRID_RESOLUTION: f64 = 1e-4;
pub const GRID_TOLERANCE: f64 = 1e-3;
pub const VALUE_TOLERANCE: f64 = 1e-8;
pub const VERTEX_TOLERANCE: f64 = 1e-7;
/// Abscissae at which the lower-level solution set is sampled.
pub const ORACLE_XS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
pub const ENVELOPE_GAMMAS: [f64; 3] = [0.1, 0.2, 0.4];

#[derive(Debug, Clone, PartialEq)]
pub struct Example1Options {
    pub gamma: f64,
    /// Swaps in wrong expected values to exercise the mismatch path.
    pub corrupt: bool,
}

impl Default for Example1Options {
    fn default() -> Self {
        Example1Options {
            gamma: 0.2,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub expected: String,
    pub observed: String,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example1Run {
    pub digest: String,
    pub checks: Vec<Check>,
}

impl Example1Run {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Values the example states.
#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    /// `S(x) = {x + o : o in offsets}`.
    pub solution_offsets: [f64; 2],
    pub value: f64,
    pub grad_upper: [f64; 2],
    pub grad_lower: [f64; 2],
    pub grad_g: [[f64; 2]; 2],
    pub multipliers: Vec<[f64; 2]>,
    pub derivative: f64,
    pub alpha: f64,
}

impl Expected {
    pub fn stated() -> Self {
        Expected {
            solution_offsets: [-1.0, 1.0],
            value: -1.0,
            grad_upper: [2.0, -2.0],
            grad_lower: [-2.0, 2.0],
            grad_g: [[-1.0, 1.0], [1.0, -1.0]],
            multipliers: vec![[0.0, 2.0]],
            derivative: 0.0,
            alpha: 1.0,
        }
    }

    fn corrupted() -> Self {
        Expected {
            value: -0.5,
            multipliers: vec![[0.0, 3.0]],
            ..Self::stated()
        }
    }
}

pub fn problem(gamma: f64) -> Result<BilevelProblem, Failure> {
    let base = blp::load_problem(fixtures::EX51)?;
    base.with_gamma(gamma, GammaBound::StrongConvexity)
        .map_err(|e| Failure::input(e.to_string()))
}

/// Grid minimisers of `f(x, .)` over the feasible part of `[x-3, x+3]`,
/// merged into clusters; returns the minimum and the cluster midpoints.
pub fn grid_oracle(prob: &BilevelProblem, x: f64, resolution: f64, merge: f64) -> Result<(f64, Vec<f64>), Failure> {
    let steps = (6.0 / resolution).round() as usize;
    let mut pts = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let w = x - 3.0 + k as f64 * resolution;
        let p = EvalPoint::new(vec![x], vec![w]);
        let feasible = prob
            .lower_constraints
            .iter()
            .map(|g| g.eval(&p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::input(e.to_string()))?
            .iter()
            .all(|v| *v <= 0.0);
        if feasible {
            let f = prob.lower_objective.eval(&p).map_err(|e| Failure::input(e.to_string()))?;
            pts.push((w, f));
        }
    }
    let best = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for (w, f) in pts {
        if f > best + merge {
            continue;
        }
        match clusters.last_mut() {
            Some(c) if w - c.1 <= 2.0 * resolution => c.1 = w,
            _ => clusters.push((w, w)),
        }
    }
    Ok((best, clusters.iter().map(|c| 0.5 * (c.0 + c.1)).collect()))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

pub fn run(opts: &Example1Options) -> Result<Example1Run, Failure> {
    let exp = if opts.corrupt { Expected::corrupted() } else { Expected::stated() };
    let prob = problem(opts.gamma)?;
    let digest = blp::digest(&prob);
    let (x, y) = ([0.0], [-1.0]);
    let h = Hypotheses::default();
    let mut checks = Vec::new();

    // 1. S(x) and 2. v(x) from the grid oracle.
    let mut sets_ok = true;
    let mut values_ok = true;
    let mut observed_sets = Vec::new();
    let mut observed_values = Vec::new();
    for &xv in &ORACLE_XS {
        let (v, mins) = grid_oracle(&prob, xv, GRID_RESOLUTION, GRID_TOLERANCE)?;
        let want: Vec<f64> = exp.solution_offsets.iter().map(|o| xv + o).collect();
        sets_ok &= close(&mins, &want, GRID_TOLERANCE);
        values_ok &= (v - exp.value).abs() <= GRID_TOLERANCE;
        observed_sets.push(format!("x={}:{{{}}}", num(xv), vector(&mins)));
        observed_values.push(num(v));
    }
    checks.push(Check {
        name: "lower_solutions",
        passed: sets_ok,
        expected: format!("S(x)={{x{:+},x{:+}}}", exp.solution_offsets[0], exp.solution_offsets[1]),
        observed: observed_sets.join(" "),
        tolerance: GRID_TOLERANCE,
    });

    let mut gammas = ENVELOPE_GAMMAS.to_vec();
    if !gammas.contains(&opts.gamma) {
        gammas.push(opts.gamma);
    }
    let mut env_ok = true;
    let mut env_obs = Vec::new();
    for g in gammas {
        let pg = prob
            .with_gamma(g, GammaBound::StrongConvexity)
            .map_err(|e| Failure::input(e.to_string()))?;
        let s = solve_inner(&pg, &x, &y)?;
        env_ok &= (s.value - exp.value).abs() <= VALUE_TOLERANCE && (s.w[0] - y[0]).abs() <= VALUE_TOLERANCE;
        env_obs.push(format!("gamma={}:v={},S={}", num(g), num(s.value), num(s.w[0])));
    }
    checks.push(Check {
        name: "value_function",
        passed: values_ok && env_ok,
        expected: format!("v(x)={} (grid); v_gamma(0,-1)={} S_gamma(0,-1)=-1", num(exp.value), num(exp.value)),
        observed: format!("grid v: {} | {}", observed_values.join(","), env_obs.join(" ")),
        tolerance: VALUE_TOLERANCE,
    });

    // 3. Gradients at (0, -1), compared exactly.
    let p = EvalPoint::new(x.to_vec(), y.to_vec());
    let gf_up = expr::gradient(&prob.upper_objective, &p).map_err(|e| Failure::input(e.to_string()))?;
    let gf = expr::gradient(&prob.lower_objective, &p).map_err(|e| Failure::input(e.to_string()))?;
    let gg = prob
        .lower_constraints
        .iter()
        .map(|g| expr::gradient(g, &p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::input(e.to_string()))?;
    let grads_ok = gf_up == exp.grad_upper
        && gf == exp.grad_lower
        && gg.len() == 2
        && gg.iter().zip(&exp.grad_g).all(|(a, b)| a[..] == b[..]);
    checks.push(Check {
        name: "gradients",
        passed: grads_ok,
        expected: format!(
            "F={} f={} g1={} g2={}",
            vector(&exp.grad_upper),
            vector(&exp.grad_lower),
            vector(&exp.grad_g[0]),
            vector(&exp.grad_g[1])
        ),
        observed: format!(
            "F={} f={} g1={} g2={}",
            vector(&gf_up),
            vector(&gf),
            vector(gg.first().map_or(&[][..], |v| v)),
            vector(gg.get(1).map_or(&[][..], |v| v))
        ),
        tolerance: 0.0,
    });

    // 4. Lambda(0, -1).
    let lam = lower_multiplier_set(&prob, &x, &y, None)?;
    let verts = lam.vertices().map_err(|e| Failure::input(e.to_string()))?;
    let lam_ok = verts.len() == exp.multipliers.len()
        && exp
            .multipliers
            .iter()
            .all(|e| verts.iter().any(|v| close(v, e, VERTEX_TOLERANCE)));
    checks.push(Check {
        name: "multipliers",
        passed: lam_ok,
        expected: exp.multipliers.iter().map(|v| format!("({})", vector(v))).collect::<Vec<_>>().join(" "),
        observed: verts.iter().map(|v| format!("({})", vector(v))).collect::<Vec<_>>().join(" "),
        tolerance: VERTEX_TOLERANCE,
    });

    // 5. Critical cone.
    let mut cone_ok = true;
    let mut cone_obs = Vec::new();
    for (d, want) in [([1.0, 1.0], true), ([1.0, -1.0], false), ([-1.0, 1.0], false)] {
        let r = in_critical_cone(&prob, &x, &y, &Direction::new(vec![d[0]], vec![d[1]]), &h)?;
        cone_ok &= r.member == want;
        cone_obs.push(format!("({}):{}", vector(&d), r.member));
    }
    checks.push(Check {
        name: "critical_cone",
        passed: cone_ok,
        expected: "(1,1):true (1,-1):false (-1,1):false".into(),
        observed: cone_obs.join(" "),
        tolerance: bec_core::tol::CERT,
    });

    // 6. v'_gamma(0, -1; 1, 0).
    let d10 = Direction::new(vec![1.0], vec![0.0]);
    let est = dir_derivative(&prob, &x, &y, &d10, Regime::WeaklyConvex, &h)?;
    let fd = fd_dir_derivative(&prob, &x, &y, &d10, &DEFAULT_FD_STEPS)?;
    checks.push(Check {
        name: "directional_derivative",
        passed: (est.estimate - exp.derivative).abs() <= VALUE_TOLERANCE
            && (fd.estimate - exp.derivative).abs() <= FD_AGREEMENT,
        expected: format!("formula={} fd within {}", num(exp.derivative), num(FD_AGREEMENT)),
        observed: format!("formula={} ({}) fd={}", num(est.estimate), est.kind.as_str(), num(fd.estimate)),
        tolerance: VALUE_TOLERANCE,
    });

    // 7. Directional quasi-normality at d = (1, 1).
    let d11 = Direction::new(vec![1.0], vec![1.0]);
    let qn = check_quasi_normality(&prob, &x, &y, &d11, QnVariant::Directional, &h, &SamplingPlan::default())?;
    checks.push(Check {
        name: "quasi_normality",
        passed: matches!(qn.verdict, CqVerdict::CertificateModuloSampling | CqVerdict::Holds),
        expected: "certificate-modulo-sampling or holds".into(),
        observed: qn.verdict.as_str().into(),
        tolerance: bec_core::tol::FEAS,
    });

    // 8. sKKT certificate and the S-stationarity system it induces.
    let cert = verify_stationarity(&prob, &x, &y, None, StationaritySystem::Skkt, &h)?;
    let (passed, observed) = match &cert {
        Some(c) => {
            let (res, viol) = verify_certificate(&prob, &x, &y, c)?;
            let sv = certify::s_multiplier_violation(&prob, &x, &y, &c.lambda_bar, &c.induced)?;
            let ok = res <= VALUE_TOLERANCE
                && viol <= VALUE_TOLERANCE
                && sv <= VALUE_TOLERANCE
                && (c.alpha - exp.alpha).abs() <= VALUE_TOLERANCE
                && exp.multipliers.iter().any(|m| close(&c.lambda_bar, m, VERTEX_TOLERANCE));
            (
                ok,
                format!(
                    "alpha={} lambda_bar={} residual={} induced_violation={}",
                    num(c.alpha),
                    vector(&c.lambda_bar),
                    num(res.max(viol)),
                    num(sv)
                ),
            )
        }
        None => (false, "no certificate".into()),
    };
    checks.push(Check {
        name: "stationarity",
        passed,
        expected: format!(
            "alpha={} lambda_bar={} induced S-system feasible",
            num(exp.alpha),
            vector(&exp.multipliers[0])
        ),
        observed,
        tolerance: VALUE_TOLERANCE,
    });

    Ok(Example1Run { digest, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_oracle_finds_both_branches() {
        let prob = problem(0.2).unwrap();
        let (v, mins) = grid_oracle(&prob, 0.3, 1e-3, 1e-2).unwrap();
        assert!((v + 1.0).abs() < 1e-2);
        assert!(close(&mins, &[-0.7, 1.3], 1e-2), "{mins:?}");
    }

    #[test]
    fn corrupted_run_reports_mismatch() {
        let run = run(&Example1Options {
            gamma: 0.2,
            corrupt: true,
        })
        .unwrap();
        let failed: Vec<_> = run.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(failed, vec!["value_function", "multipliers", "stationarity"]);
    }
}
