//! Acceptance criteria AC1-AC7. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::Instant;

use bec::example1::{self, Example1Options};
use bec::fixtures;
use bec_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn load(text: &str) -> BilevelProblem {
    bec::load_problem(text).expect("fixture loads")
}

fn eval(e: &Expr, x: &[f64], y: &[f64]) -> f64 {
    e.eval(&EvalPoint::new(x.to_vec(), y.to_vec())).expect("evaluates")
}

fn lower_feasible(prob: &BilevelProblem, x: &[f64], y: &[f64]) -> bool {
    prob.lower_constraints.iter().all(|g| eval(g, x, y) <= 0.0)
}

/// Sampled `(x, y)` with `y` feasible for the lower level.
fn feasible_sample(name: &str, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    match name {
        "ex51" => {
            let x = rng.random_range(-1.0..1.0);
            (vec![x], vec![x + rng.random_range(-1.0..1.0)])
        }
        "polytope" => {
            let x: f64 = rng.random_range(-1.0..1.0);
            let (a, b): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let y1 = a * (1.0 + x);
            let y2 = b * (1.0 + x - y1) - (1.0 - b) * 2.0;
            (vec![x], vec![y1, y2])
        }
        "disc" => {
            let x: f64 = rng.random_range(-0.9..0.9);
            let r = (1.0 - x * x).sqrt();
            (vec![x], vec![r * rng.random_range(-1.0..1.0)])
        }
        _ => unreachable!(),
    }
}

fn ac1() -> Verdict {
    let start = Instant::now();
    let run = example1::run(&Example1Options::default()).map_err(|f| f.message)?;
    let elapsed = start.elapsed().as_secs_f64();
    let failed: Vec<_> = run.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let late = example1::run(&Example1Options {
        gamma: 0.49,
        corrupt: false,
    })
    .map_err(|f| f.message)?;
    let corrupt = example1::run(&Example1Options {
        gamma: 0.2,
        corrupt: true,
    })
    .map_err(|f| f.message)?;
    let msg = format!(
        "{}/{} checks at gamma=0.2 in {:.2}s; gamma=0.49 all pass: {}; corrupted fixture detected: {}",
        run.checks.len() - failed.len(),
        run.checks.len(),
        elapsed,
        late.all_passed(),
        !corrupt.all_passed()
    );
    if failed.is_empty() && run.checks.len() == 8 && elapsed < 10.0 && late.all_passed() && !corrupt.all_passed() {
        Ok(msg)
    } else {
        Err(format!("{msg}; failed {failed:?}"))
    }
}

fn ac2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let m = 1 + i % 3;
        let gamma = rng.random_range(0.001..0.999);
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let f = (1..=m).map(|j| format!("y{j}^2")).collect::<Vec<_>>().join("+");
        let spec = ProblemSpec {
            n: 1,
            m,
            gamma,
            rho_f: 0.0,
            f_convexity: ObjectiveConvexity::JointlyWeaklyConvex,
            g_convexity: ConstraintConvexity::JointlyQuasiconvex,
            upper_objective: "x1".into(),
            upper_constraints: vec![],
            lower_objective: format!("0.5*({f})"),
            lower_constraints: vec![],
        };
        let prob = BilevelProblem::from_spec(&spec).map_err(|e| e.to_string())?;
        let s = solve_inner(&prob, &[0.3], &y).map_err(|e| e.to_string())?;
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        let mut err = (s.value - norm2 / (2.0 * (1.0 + gamma))).abs();
        for (w, yj) in s.w.iter().zip(&y) {
            err = err.max((w - yj / (1.0 + gamma)).abs());
        }
        worst = worst.max(err);
    }
    let msg = format!("100 instances, m in 1..=3, max error {worst:.2e} (tolerance 1e-8)");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Grid minimum of `f(x, .) + |. - y|^2/(2 gamma)` over the feasible points
/// of the lattice `h Z^m` inside a box, and the largest slope to a feasible
/// neighbour of the grid minimiser. The lattice contains the coordinate
/// hyperplanes, so bound constraints such as `y1 >= 0` lie on grid lines.
fn grid_envelope(prob: &BilevelProblem, x: &[f64], y: &[f64], lo: &[f64], hi: &[f64], h: f64) -> (f64, f64, bool) {
    let m = prob.m;
    let first: Vec<i64> = lo.iter().map(|v| (v / h).floor() as i64).collect();
    let counts: Vec<usize> = (0..m).map(|j| ((hi[j] / h).ceil() as i64 - first[j]) as usize + 1).collect();
    let phi = |w: &[f64]| -> Option<f64> {
        if !lower_feasible(prob, x, w) {
            return None;
        }
        let d2: f64 = w.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(eval(&prob.lower_objective, x, w) + d2 / (2.0 * prob.gamma))
    };
    let point = |idx: &[usize]| -> Vec<f64> { (0..m).map(|j| (first[j] + idx[j] as i64) as f64 * h).collect() };
    let total: usize = counts.iter().product();
    let mut best = (f64::INFINITY, vec![0usize; m]);
    for flat in 0..total {
        let mut idx = vec![0; m];
        let mut r = flat;
        for j in 0..m {
            idx[j] = r % counts[j];
            r /= counts[j];
        }
        if let Some(v) = phi(&point(&idx)) {
            if v < best.0 {
                best = (v, idx);
            }
        }
    }
    let (vbest, idx) = best;
    let mut slope: f64 = 0.0;
    let mut on_edge = false;
    for j in 0..m {
        for step in [-1i64, 1] {
            let k = idx[j] as i64 + step;
            if k < 0 || k >= counts[j] as i64 {
                on_edge = true;
                continue;
            }
            let mut nb = idx.clone();
            nb[j] = k as usize;
            if let Some(v) = phi(&point(&nb)) {
                slope = slope.max((v - vbest).abs() / h);
            }
        }
    }
    (vbest, slope, on_edge)
}

fn ac3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut msgs = Vec::new();
    let mut ok = true;
    for (name, text) in [("ex51", fixtures::EX51), ("polytope", fixtures::POLYTOPE), ("disc", fixtures::DISC)] {
        let base = load(text);
        let (gmin, gmax) = if base.rho_f > 0.0 { (0.02, 0.49) } else { (0.05, 1.0) };
        let (mut above, mut order, mut grid_bad, mut grid_n, mut worst_ratio) = (0, 0, 0, 0, 0.0f64);
        for _ in 0..200 {
            let (x, y) = feasible_sample(name, &mut rng);
            let f = eval(&base.lower_objective, &x, &y);
            let v = solve_inner(&base, &x, &y).map_err(|e| format!("{name}: {e}"))?.value;
            if v > f + 1e-10 {
                above += 1;
            }
            let g1 = rng.random_range(gmin..gmax);
            let g2 = rng.random_range(g1..gmax);
            let p1 = base.with_gamma(g1, GammaBound::StrongConvexity).map_err(|e| e.to_string())?;
            let p2 = base.with_gamma(g2, GammaBound::StrongConvexity).map_err(|e| e.to_string())?;
            let v1 = solve_inner(&p1, &x, &y).map_err(|e| e.to_string())?.value;
            let v2 = solve_inner(&p2, &x, &y).map_err(|e| e.to_string())?.value;
            if v1 < v2 - 1e-10 {
                order += 1;
            }
            {
                let (lo, hi, h) = match name {
                    "ex51" => (vec![x[0] - 1.0], vec![x[0] + 1.0], 1e-4),
                    "disc" => {
                        let r = (1.0 - x[0] * x[0]).sqrt();
                        (vec![-r], vec![r], 1e-4)
                    }
                    _ => (vec![y[0] - 3.0, y[1] - 3.0], vec![y[0] + 3.0, y[1] + 3.0], 2e-2),
                };
                let (vg, slope, on_edge) = grid_envelope(&base, &x, &y, &lo, &hi, h);
                let tol = 2.0 * h * slope + 1e-10;
                let err = vg - v;
                grid_n += 1;
                worst_ratio = worst_ratio.max(err.abs() / tol);
                if on_edge && name == "polytope" || err < -1e-10 || err > tol {
                    grid_bad += 1;
                }
            }
        }
        msgs.push(format!(
            "{name}: v>f {above}/200, order {order}/200, grid {grid_bad}/{grid_n} (worst err/tol {worst_ratio:.2})"
        ));
        ok &= above == 0 && order == 0 && grid_bad == 0;
    }
    let msg = msgs.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn exact_derivative(prob: &BilevelProblem, x: &[f64], y: &[f64], d: &Direction) -> Option<DerivativeEstimate> {
    let h = Hypotheses::default();
    for r in [Regime::WeaklyConvex, Regime::Dini, Regime::Rcr] {
        if let Ok(e) = dir_derivative(prob, x, y, d, r, &h) {
            return Some(e);
        }
    }
    None
}

fn ac4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut msgs = Vec::new();
    let mut ok = true;
    for (name, text) in [("ex51", fixtures::EX51), ("polytope", fixtures::POLYTOPE), ("disc", fixtures::DISC)] {
        let prob = load(text);
        let dim = prob.n + prob.m;
        let (mut compared, mut bounds_only, mut bad_dir, mut bad_grad) = (0, 0, 0, 0);
        let (mut worst_dir, mut worst_grad) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let (x, y) = {
                let (x, y) = feasible_sample(name, &mut rng);
                let jitter: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
                (x, jitter)
            };
            let dz: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = Direction::from_concat(&dz, prob.n);
            match exact_derivative(&prob, &x, &y, &d) {
                Some(e) if e.kind == EstimateKind::ExactFormula => {
                    let fd = fd_dir_derivative(&prob, &x, &y, &d, &DEFAULT_FD_STEPS).map_err(|e| e.to_string())?;
                    let err = (fd.estimate - e.estimate).abs();
                    worst_dir = worst_dir.max(err);
                    compared += 1;
                    if err > 1e-4 {
                        bad_dir += 1;
                    }
                }
                _ => bounds_only += 1,
            }
            let g = grad_y_envelope(&prob, &x, &y).map_err(|e| e.to_string())?;
            let step = 1e-6;
            for j in 0..prob.m {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[j] += step;
                ym[j] -= step;
                let vp = envelope_value(&prob, &x, &yp).map_err(|e| e.to_string())?;
                let vm = envelope_value(&prob, &x, &ym).map_err(|e| e.to_string())?;
                let fd = (vp - vm) / (2.0 * step);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
                worst_grad = worst_grad.max(rel);
                if rel > 1e-5 {
                    bad_grad += 1;
                }
            }
        }
        msgs.push(format!(
            "{name}: {compared} exact vs FD, {bad_dir} off (max {worst_dir:.1e}), {bounds_only} bounds-only; gradient {bad_grad} off (max rel {worst_grad:.1e})"
        ));
        ok &= bad_dir == 0 && bad_grad == 0 && compared > 0;
    }
    let msg = msgs.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac5() -> Verdict {
    let prob = load(fixtures::EX51);
    let plan = WeakConvexityPlan {
        lower: vec![-1.0, -2.0],
        upper: vec![1.0, 0.0],
        pairs: 500,
        seed: 5,
        rho_override: None,
    };
    let derived = weak_convexity_check(&prob, &plan).map_err(|e| e.to_string())?;
    let zero = weak_convexity_check(
        &prob,
        &WeakConvexityPlan {
            rho_override: Some(0.0),
            ..plan.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let declared = prob.rho_f / (1.0 - prob.gamma * prob.rho_f);
    let y_only = weak_convexity_check(
        &prob,
        &WeakConvexityPlan {
            rho_override: Some(declared),
            ..plan
        },
    )
    .map_err(|e| e.to_string())?;
    let msg = format!(
        "joint modulus {:.3} -> rho_v {:.3}: {} violations / {} pairs; rho_v = 0: {} violations; \
         (info) rho_v from the y-modulus, {:.3}: {} violations",
        derived.rho_joint,
        derived.rho_v,
        derived.violations,
        derived.pairs_tested,
        zero.violations,
        declared,
        y_only.violations
    );
    if derived.violations == 0 && derived.pairs_tested == 500 && zero.violations >= 1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// A point of the lower-level solution map, reached by proximal iterations.
fn lower_solution(prob: &BilevelProblem, x: &[f64], y0: &[f64]) -> Option<Vec<f64>> {
    let mut y = y0.to_vec();
    for _ in 0..500 {
        let w = solve_inner(prob, x, &y).ok()?.w;
        let step = w.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = w;
        if step <= 1e-13 {
            break;
        }
    }
    Some(y)
}

fn ac6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = Hypotheses::default();
    let (mut instances, mut certs, mut bad, mut directional) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    for (name, text) in [("ex51", fixtures::EX51), ("polytope", fixtures::POLYTOPE), ("disc", fixtures::DISC)] {
        let base = bec::parse_spec(text).map_err(|e| e.to_string())?;
        for k in 0..40 {
            let c: Vec<i32> = (0..4).map(|_| rng.random_range(-2..=2)).collect();
            let upper = if k % 2 == 1 {
                // Combinations of the lower-level data tend to be stationary.
                let mut terms = vec![format!("{}*({})", c[0], base.lower_objective)];
                for (i, g) in base.lower_constraints.iter().enumerate() {
                    terms.push(format!("{}*({})", c[1 + i], g));
                }
                terms.join("+")
            } else if base.m == 1 {
                format!("{}*x1+{}*y1+{}*x1*y1+{}*(y1-x1)^2", c[0], c[1], c[2], c[3].abs())
            } else {
                format!("{}*x1+{}*y1+{}*y2+{}*x1*y2", c[0], c[1], c[2], c[3])
            };
            let prob = BilevelProblem::from_spec(&ProblemSpec {
                upper_objective: upper,
                ..base.clone()
            })
            .map_err(|e| e.to_string())?;
            let (x, y0) = feasible_sample(name, &mut rng);
            let y = match name {
                "ex51" => vec![x[0] + if y0[0] > x[0] { 1.0 } else { -1.0 }],
                _ => match lower_solution(&prob, &x, &y0) {
                    Some(y) => y,
                    None => continue,
                },
            };
            if !vp_feasibility(&prob, &x, &y).map_err(|e| e.to_string())?.is_feasible() {
                continue;
            }
            instances += 1;
            let dz: Vec<f64> = (0..prob.n + prob.m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = Direction::from_concat(&dz, prob.n);
            let critical = in_critical_cone(&prob, &x, &y, &d, &h).map(|r| r.member).unwrap_or(false);
            let dw = if critical {
                directional += 1;
                d
            } else {
                Direction::zero(prob.n, prob.m)
            };
            let found = [
                verify_stationarity(&prob, &x, &y, None, StationaritySystem::Skkt, &h),
                verify_stationarity(&prob, &x, &y, Some(&dw), StationaritySystem::Wckkt, &h),
            ];
            for cert in found {
                let Some(cert) = cert.map_err(|e| format!("{name}: {e}"))? else {
                    continue;
                };
                certs += 1;
                let (res, viol) = verify_certificate(&prob, &x, &y, &cert).map_err(|e| e.to_string())?;
                let sv = certify::s_multiplier_violation(&prob, &x, &y, &cert.lambda_bar, &cert.induced)
                    .map_err(|e| e.to_string())?;
                worst = worst.max(res).max(viol).max(sv);
                if res > 1e-8 || viol > 1e-8 || sv > 1e-8 {
                    bad += 1;
                }
            }
        }
    }
    let msg = format!(
        "{instances} feasible instances ({directional} with a random critical direction), {certs} certificates, \
         {bad} failing re-verification or induced S-system (worst {worst:.1e})"
    );
    if bad == 0 && certs > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_polytope(rng: &mut ChaCha8Rng) -> (Polyhedron, Vec<f64>) {
    let k = rng.random_range(2..=8);
    let mut p = Polyhedron::free(k);
    for j in 0..k {
        let mut r = vec![0.0; k];
        r[j] = 1.0;
        p.add_ineq(r.clone(), 3.0);
        r[j] = -1.0;
        p.add_ineq(r, 1.0);
    }
    let z0: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
    for _ in 0..rng.random_range(0..=5) {
        let r: Vec<f64> = (0..k).map(|_| rng.random_range(-2..=2) as f64).collect();
        let b = r.iter().zip(&z0).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(0.0..1.0);
        p.add_ineq(r, b);
    }
    let c = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    (p, c)
}

/// Unit vectors: equally spaced on the circle, a Fibonacci lattice on the
/// sphere.
fn rays(dim: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            if dim == 2 {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            } else {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let a = i as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
                vec![r * a.cos(), r * a.sin(), z]
            }
        })
        .collect()
}

/// Largest distance from a unit vector to the nearest sample; on the sphere
/// a probe estimate inflated by half.
fn covering_radius(dim: usize, rs: &[Vec<f64>]) -> f64 {
    if dim == 2 {
        return 2.0 * (std::f64::consts::PI / (2.0 * rs.len() as f64)).sin() + 1e-12;
    }
    let probes = rays(3, 20_011);
    probes
        .iter()
        .map(|p| {
            rs.iter()
                .map(|r| p.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .fold(0.0, f64::max)
        * 1.5
}

fn ac7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lp_bad = 0;
    for _ in 0..200 {
        let (p, c) = random_polytope(&mut rng);
        let out = lp_optimize(&c, &p, Sense::Max).map_err(|e| e.to_string())?;
        let verts = vertices(&p).map_err(|e| e.to_string())?;
        let best = verts
            .iter()
            .map(|v| c.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        if out.status != LpStatus::Optimal || (best - out.value).abs() > 1e-7 * (1.0 + best.abs()) {
            lp_bad += 1;
        }
    }

    let samples = [(2, rays(2, 4096)), (3, rays(3, 4096))];
    let radius = [covering_radius(2, &samples[0].1), covering_radius(3, &samples[1].1)];
    let (mut agree, mut disagree, mut ambiguous, mut trivial) = (0, 0, 0, 0);
    while agree + disagree < 100 {
        let di = rng.random_range(0..2);
        let dim = di + 2;
        let rows: Vec<Vec<f64>> = (0..rng.random_range(1..=5))
            .map(|_| {
                let r: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter().map(|v| v / n).collect()
            })
            .collect();
        // Largest normalized slack of the best sampled ray. Each slack is
        // 1-Lipschitz on the sphere, so a value above the covering radius
        // rules out every nonzero ray.
        let min_slack = samples[di]
            .1
            .iter()
            .map(|r| {
                rows.iter()
                    .map(|a| a.iter().zip(r).map(|(p, q)| p * q).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let oracle_trivial = if min_slack <= 0.0 {
            false
        } else if min_slack > radius[di] {
            true
        } else {
            ambiguous += 1;
            continue;
        };
        let mut p = Polyhedron::free(dim);
        for r in &rows {
            p.add_ineq(r.clone(), 0.0);
        }
        let v = cone_only_zero(&p).map_err(|e| e.to_string())?;
        if v.only_zero == oracle_trivial {
            agree += 1;
        } else {
            disagree += 1;
        }
        if oracle_trivial {
            trivial += 1;
        }
    }
    let msg = format!(
        "LP: {lp_bad}/200 mismatches vs vertex maximum; cones: {agree}/100 agree with 4096-ray sampling \
         ({trivial} trivial, {ambiguous} ambiguous draws resampled, covering radii {:.1e}/{:.1e})",
        radius[0], radius[1]
    );
    if lp_bad == 0 && disagree == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("{name} PASS {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("{name} FAIL {msg} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
