//! Dense linear programming over small polyhedra: a two-phase simplex with
//! Bland's rule, cone-triviality tests and vertex enumeration.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Matrix};
use crate::tol;

/// `{ z : A_eq z = b_eq, A_in z <= b_in, z_i >= 0 where nonneg[i] }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub num_vars: usize,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_rows: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub nonneg: Vec<bool>,
}

impl Polyhedron {
    /// All of `R^num_vars`.
    pub fn free(num_vars: usize) -> Self {
        Polyhedron {
            num_vars,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ineq_rows: Vec::new(),
            ineq_rhs: Vec::new(),
            nonneg: vec![false; num_vars],
        }
    }

    /// The nonnegative orthant.
    pub fn nonnegative(num_vars: usize) -> Self {
        let mut p = Self::free(num_vars);
        p.nonneg = vec![true; num_vars];
        p
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.num_vars, "row width");
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_ineq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.num_vars, "row width");
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
        self
    }

    /// Adds `z_i = value`.
    pub fn fix(&mut self, i: usize, value: f64) -> &mut Self {
        let mut row = vec![0.0; self.num_vars];
        row[i] = 1.0;
        self.add_eq(row, value)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.eq_rhs.iter().chain(&self.ineq_rhs).all(|b| *b == 0.0)
    }

    /// Largest violation of any constraint at `z` (0 when feasible).
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (r, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((linalg::dot(r, z) - b).abs());
        }
        for (r, b) in self.ineq_rows.iter().zip(&self.ineq_rhs) {
            worst = worst.max(linalg::dot(r, z) - b);
        }
        for (i, nn) in self.nonneg.iter().enumerate() {
            if *nn {
                worst = worst.max(-z[i]);
            }
        }
        worst
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.num_vars && self.max_violation(z) <= tol
    }

    /// Largest absolute coefficient or right-hand side (at least 1).
    pub fn scale(&self) -> f64 {
        self.eq_rows
            .iter()
            .chain(&self.ineq_rows)
            .flat_map(|r| r.iter())
            .chain(self.eq_rhs.iter())
            .chain(self.ineq_rhs.iter())
            .fold(1.0f64, |s, v| s.max(v.abs()))
    }

    /// Feasibility tolerance used to re-verify witnesses.
    pub fn feasibility_tolerance(&self) -> f64 {
        tol::FEAS * self.scale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of an LP solve. For `Optimal` the witness is a minimizer (or
/// maximizer); for `Unbounded` it is a recession direction along which the
/// objective improves without bound; for `Infeasible` it is empty and
/// `value` holds the phase-one infeasibility measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub value: f64,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("simplex did not terminate within {0} pivots")]
    NumericFailure(usize),
    #[error("polyhedron has {num_vars} variables; vertex enumeration is limited to {limit}")]
    DimensionGuard { num_vars: usize, limit: usize },
    #[error("vertex enumeration would visit {0} bases")]
    CombinationGuard(u64),
    #[error("cone test needs a homogeneous system")]
    NotHomogeneous,
    #[error("objective has length {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
}

/// Decides whether the polyhedron is nonempty.
pub fn lp_feasible(p: &Polyhedron) -> Result<LpOutcome, LpError> {
    lp_optimize(&vec![0.0; p.num_vars], p, Sense::Min)
}

/// Optimizes `c^T z` over `p`.
pub fn lp_optimize(c: &[f64], p: &Polyhedron, sense: Sense) -> Result<LpOutcome, LpError> {
    if c.len() != p.num_vars {
        return Err(LpError::Shape {
            got: c.len(),
            expected: p.num_vars,
        });
    }
    let std = StandardForm::build(p);
    let cost: Vec<f64> = match sense {
        Sense::Min => c.to_vec(),
        Sense::Max => c.iter().map(|v| -v).collect(),
    };
    let zcost = std.lift_cost(&cost);
    let res = simplex(&std.a, &std.b, &zcost, &std.initial_basis)?;
    Ok(match res {
        SimplexResult::Infeasible(measure) => LpOutcome {
            status: LpStatus::Infeasible,
            value: measure,
            witness: Vec::new(),
        },
        SimplexResult::Optimal(z) => {
            let x = std.project(&z);
            LpOutcome {
                status: LpStatus::Optimal,
                value: linalg::dot(c, &x),
                witness: x,
            }
        }
        SimplexResult::Unbounded(dz) => {
            let d = std.project(&dz);
            LpOutcome {
                status: LpStatus::Unbounded,
                value: match sense {
                    Sense::Min => f64::NEG_INFINITY,
                    Sense::Max => f64::INFINITY,
                },
                witness: d,
            }
        }
    })
}

/// `min c^T z, A z = b, z >= 0` derived from a [`Polyhedron`].
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Column of the positive part of each original variable, and of the
    /// negative part when the variable is free.
    pos: Vec<usize>,
    neg: Vec<Option<usize>>,
    ncols: usize,
    /// Per row, a slack column usable as the starting basis.
    initial_basis: Vec<Option<usize>>,
}

impl StandardForm {
    fn build(p: &Polyhedron) -> Self {
        let mut pos = Vec::with_capacity(p.num_vars);
        let mut neg = Vec::with_capacity(p.num_vars);
        let mut col = 0;
        for i in 0..p.num_vars {
            pos.push(col);
            col += 1;
            if p.nonneg[i] {
                neg.push(None);
            } else {
                neg.push(Some(col));
                col += 1;
            }
        }
        let nslack = p.ineq_rows.len();
        let ncols = col + nslack;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut initial_basis = Vec::new();
        let expand = |row: &[f64]| {
            let mut z = vec![0.0; ncols];
            for i in 0..p.num_vars {
                z[pos[i]] = row[i];
                if let Some(k) = neg[i] {
                    z[k] = -row[i];
                }
            }
            z
        };
        for (r, rhs) in p.eq_rows.iter().zip(&p.eq_rhs) {
            let mut z = expand(r);
            let mut rhs = *rhs;
            if rhs < 0.0 {
                z.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            a.push(z);
            b.push(rhs);
            initial_basis.push(None);
        }
        for (k, (r, rhs)) in p.ineq_rows.iter().zip(&p.ineq_rhs).enumerate() {
            let mut z = expand(r);
            z[col + k] = 1.0;
            let mut rhs = *rhs;
            if rhs < 0.0 {
                z.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
                initial_basis.push(None);
            } else {
                initial_basis.push(Some(col + k));
            }
            a.push(z);
            b.push(rhs);
        }
        StandardForm {
            a,
            b,
            pos,
            neg,
            ncols,
            initial_basis,
        }
    }

    fn lift_cost(&self, c: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.ncols];
        for i in 0..c.len() {
            z[self.pos[i]] = c[i];
            if let Some(k) = self.neg[i] {
                z[k] = -c[i];
            }
        }
        z
    }

    fn project(&self, z: &[f64]) -> Vec<f64> {
        (0..self.pos.len())
            .map(|i| z[self.pos[i]] - self.neg[i].map_or(0.0, |k| z[k]))
            .collect()
    }
}

enum SimplexResult {
    Optimal(Vec<f64>),
    Unbounded(Vec<f64>),
    Infeasible(f64),
}

const RC_TOL: f64 = 1e-11;

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Original row index of each tableau row.
    origin: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, s: usize) {
        let pv = self.rows[r][s];
        for v in self.rows[r].iter_mut() {
            *v /= pv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row, &prow, s);
            }
        }
        eliminate(&mut self.obj, &prow, s);
        self.basis[r] = s;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        let mut obj = vec![0.0; w + 1];
        obj[..w].copy_from_slice(&cost[..w]);
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    /// Runs primal simplex with Bland's rule over columns flagged in `allowed`.
    /// Returns the entering column on unboundedness.
    fn run(&mut self, allowed: &[bool], guard: usize, count: &mut usize) -> Result<Option<usize>, LpError> {
        loop {
            let s = match (0..self.width).find(|&j| allowed[j] && self.obj[j] < -RC_TOL) {
                Some(s) => s,
                None => return Ok(None),
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[s];
                if a > tol::PIVOT {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(Some(s)),
                Some((r, _)) => self.pivot(r, s),
            }
            *count += 1;
            if *count > guard {
                return Err(LpError::NumericFailure(*count));
            }
        }
    }

    fn basic_solution(&self, ncols: usize) -> Vec<f64> {
        let mut z = vec![0.0; ncols];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < ncols {
                z[j] = self.rows[i][self.width].max(0.0);
            }
        }
        z
    }
}

fn eliminate(row: &mut [f64], prow: &[f64], s: usize) {
    let f = row[s];
    if f != 0.0 {
        for (v, p) in row.iter_mut().zip(prow) {
            *v -= f * p;
            if v.abs() < 1e-15 {
                *v = 0.0;
            }
        }
        row[s] = 0.0;
    }
}

fn simplex(
    a: &[Vec<f64>],
    b: &[f64],
    cost: &[f64],
    initial_basis: &[Option<usize>],
) -> Result<SimplexResult, LpError> {
    let nrows = a.len();
    let ncols = cost.len();
    let nart = initial_basis.iter().filter(|s| s.is_none()).count();
    let width = ncols + nart;
    let mut rows = Vec::with_capacity(nrows);
    let mut basis = Vec::with_capacity(nrows);
    let mut art = ncols;
    for i in 0..nrows {
        let mut row = vec![0.0; width + 1];
        row[..ncols].copy_from_slice(&a[i]);
        row[width] = b[i];
        match initial_basis[i] {
            Some(j) => basis.push(j),
            None => {
                row[art] = 1.0;
                basis.push(art);
                art += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        origin: (0..nrows).collect(),
        width,
    };
    let guard = 200 * (width + nrows + 10);
    let mut count = 0;
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));

    if nart > 0 {
        let mut c1 = vec![0.0; width];
        for v in c1.iter_mut().skip(ncols) {
            *v = 1.0;
        }
        t.set_objective(&c1);
        let all = vec![true; width];
        t.run(&all, guard, &mut count)?;
        let measure = -t.obj[width];
        if measure > tol::FEAS * scale {
            return Ok(SimplexResult::Infeasible(measure));
        }
        // Drive artificials out of the basis; rows where that is impossible
        // are redundant.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= ncols {
                let col = (0..ncols).find(|&j| t.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        t.origin.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut c2 = vec![0.0; width];
    c2[..ncols].copy_from_slice(cost);
    t.set_objective(&c2);
    let mut allowed = vec![true; width];
    for v in allowed.iter_mut().skip(ncols) {
        *v = false;
    }
    if let Some(s) = t.run(&allowed, guard, &mut count)? {
        let mut d = vec![0.0; ncols];
        d[s] = 1.0;
        for (i, &j) in t.basis.iter().enumerate() {
            if j < ncols {
                d[j] = -t.rows[i][s];
            }
        }
        return Ok(SimplexResult::Unbounded(d));
    }
    Ok(SimplexResult::Optimal(refine(&t, a, b, ncols)))
}

/// Recomputes the basic variables from the original data to shed pivoting
/// error; keeps the tableau values when the basis matrix is singular.
fn refine(t: &Tableau, a: &[Vec<f64>], b: &[f64], ncols: usize) -> Vec<f64> {
    let z = t.basic_solution(ncols);
    let k = t.rows.len();
    if k == 0 || t.basis.iter().any(|&j| j >= ncols) {
        return z;
    }
    let mut bm = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for (r, &orig) in t.origin.iter().enumerate() {
        for (c, &j) in t.basis.iter().enumerate() {
            bm[(r, c)] = a[orig][j];
        }
        rhs[r] = b[orig];
    }
    match linalg::solve(&bm, &rhs) {
        Some(xb) if xb.iter().all(|v| *v >= -1e-9) => {
            let mut out = vec![0.0; ncols];
            for (c, &j) in t.basis.iter().enumerate() {
                out[j] = xb[c].max(0.0);
            }
            let resid = a
                .iter()
                .zip(b)
                .map(|(row, bi)| (linalg::dot(row, &out) - bi).abs())
                .fold(0.0f64, f64::max);
            let resid0 = a
                .iter()
                .zip(b)
                .map(|(row, bi)| (linalg::dot(row, &z) - bi).abs())
                .fold(0.0f64, f64::max);
            if resid <= resid0 {
                out
            } else {
                z
            }
        }
        _ => z,
    }
}

/// Outcome of a cone-triviality test.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeVerdict {
    pub only_zero: bool,
    /// Nonzero cone element with unit 1-norm over the tested coordinates.
    pub witness: Option<Vec<f64>>,
    /// Largest normalized coordinate found.
    pub max_value: f64,
    /// The decision was within `MARGINAL_FACTOR * FEAS` of the threshold.
    pub marginal: bool,
}

/// Tests whether the homogeneous polyhedral cone `p` is `{0}`.
pub fn cone_only_zero(p: &Polyhedron) -> Result<ConeVerdict, LpError> {
    let all: Vec<usize> = (0..p.num_vars).collect();
    cone_only_zero_on(p, &all)
}

/// Tests whether every element of the cone `p` vanishes on `targets`.
///
/// For each target coordinate (and its negation when unsigned) maximizes it
/// over `p` intersected with `sum of signed targets + sum |unsigned targets|
/// <= 1`.
pub fn cone_only_zero_on(p: &Polyhedron, targets: &[usize]) -> Result<ConeVerdict, LpError> {
    if !p.is_homogeneous() {
        return Err(LpError::NotHomogeneous);
    }
    let free_targets: Vec<usize> = targets.iter().copied().filter(|&i| !p.nonneg[i]).collect();
    let nv = p.num_vars + free_targets.len();
    let pad = |row: &[f64]| {
        let mut r = row.to_vec();
        r.resize(nv, 0.0);
        r
    };
    let mut aug = Polyhedron::free(nv);
    aug.nonneg[..p.num_vars].copy_from_slice(&p.nonneg);
    for (r, b) in p.eq_rows.iter().zip(&p.eq_rhs) {
        aug.add_eq(pad(r), *b);
    }
    for (r, b) in p.ineq_rows.iter().zip(&p.ineq_rhs) {
        aug.add_ineq(pad(r), *b);
    }
    let mut norm = vec![0.0; nv];
    for &i in targets {
        if p.nonneg[i] {
            norm[i] = 1.0;
        }
    }
    for (k, &i) in free_targets.iter().enumerate() {
        let t = p.num_vars + k;
        aug.nonneg[t] = true;
        norm[t] = 1.0;
        let mut r = vec![0.0; nv];
        r[i] = 1.0;
        r[t] = -1.0;
        aug.add_ineq(r.clone(), 0.0);
        r[i] = -1.0;
        aug.add_ineq(r, 0.0);
    }
    aug.add_ineq(norm, 1.0);

    let mut best = 0.0f64;
    let mut best_z: Option<Vec<f64>> = None;
    for &i in targets {
        let signs: &[f64] = if p.nonneg[i] { &[1.0] } else { &[1.0, -1.0] };
        for &s in signs {
            let mut c = vec![0.0; nv];
            c[i] = s;
            let out = lp_optimize(&c, &aug, Sense::Max)?;
            if out.status == LpStatus::Optimal && out.value > best {
                best = out.value;
                best_z = Some(out.witness[..p.num_vars].to_vec());
            }
        }
    }
    let only_zero = best <= tol::FEAS;
    let marginal = best > 1e-12 && best <= tol::MARGINAL_FACTOR * tol::FEAS;
    let witness = if only_zero {
        None
    } else {
        best_z.map(|z| {
            let s: f64 = targets.iter().map(|&i| z[i].abs()).sum();
            z.iter().map(|v| v / s).collect()
        })
    };
    Ok(ConeVerdict {
        only_zero,
        witness,
        max_value: best,
        marginal,
    })
}

pub const VERTEX_VAR_LIMIT: usize = 12;
const VERTEX_BASIS_LIMIT: u64 = 5_000_000;

/// All basic feasible solutions of `p`, deduplicated at `tol::DEDUP`.
pub fn vertices(p: &Polyhedron) -> Result<Vec<Vec<f64>>, LpError> {
    let n = p.num_vars;
    if n > VERTEX_VAR_LIMIT {
        return Err(LpError::DimensionGuard {
            num_vars: n,
            limit: VERTEX_VAR_LIMIT,
        });
    }
    // Independent subset of the equality rows.
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    for (r, b) in p.eq_rows.iter().zip(&p.eq_rhs) {
        let mut trial: Vec<Vec<f64>> = eq.iter().map(|(r, _)| r.clone()).collect();
        trial.push(r.clone());
        if linalg::rank(&trial, n) == trial.len() {
            eq.push((r.clone(), *b));
        }
    }
    let mut cand: Vec<(Vec<f64>, f64)> = p
        .ineq_rows
        .iter()
        .cloned()
        .zip(p.ineq_rhs.iter().copied())
        .collect();
    for i in 0..n {
        if p.nonneg[i] {
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            cand.push((r, 0.0));
        }
    }
    let k = n - eq.len();
    if k > cand.len() {
        return Ok(Vec::new());
    }
    let total = binomial(cand.len() as u64, k as u64);
    if total > VERTEX_BASIS_LIMIT {
        return Err(LpError::CombinationGuard(total));
    }
    let feas_tol = p.feasibility_tolerance();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut m = Matrix::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for (r, (row, b)) in eq.iter().chain(idx.iter().map(|&i| &cand[i])).enumerate() {
            for c in 0..n {
                m[(r, c)] = row[c];
            }
            rhs[r] = *b;
        }
        let sol = if n == 0 { Some(Vec::new()) } else { linalg::solve(&m, &rhs) };
        if let Some(mut z) = sol {
            z.iter_mut().for_each(|v| *v += 0.0);
            if p.contains(&z, feas_tol)
                && !out
                    .iter()
                    .any(|v| v.iter().zip(&z).all(|(a, b)| (a - b).abs() <= tol::DEDUP))
            {
                out.push(z);
            }
        }
        if !next_combination(&mut idx, cand.len()) {
            break;
        }
    }
    Ok(out)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_lambda() -> Polyhedron {
        // -(2) + (-1) * lambda2 ... written as stationarity 2 - lambda2 = 0,
        // lambda1 = 0 (g1 inactive).
        let mut p = Polyhedron::nonnegative(2);
        p.add_eq(vec![0.0, -1.0], -2.0);
        p.fix(0, 0.0);
        p
    }

    #[test]
    fn worked_multiplier_set() {
        let p = worked_lambda();
        let f = lp_feasible(&p).unwrap();
        assert_eq!(f.status, LpStatus::Optimal);
        assert_eq!(f.witness, vec![0.0, 2.0]);
        assert_eq!(vertices(&p).unwrap(), vec![vec![0.0, 2.0]]);
        let z = lp_optimize(&[0.0, 0.0], &p, Sense::Max).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn infeasible_and_trivial() {
        let mut p = Polyhedron::nonnegative(1);
        p.add_eq(vec![1.0], -1.0);
        assert_eq!(lp_feasible(&p).unwrap().status, LpStatus::Infeasible);
        assert!(vertices(&p).unwrap().is_empty());
        let e = lp_feasible(&Polyhedron::free(1)).unwrap();
        assert_eq!(e.status, LpStatus::Optimal);
        assert_eq!(e.witness, vec![0.0]);
    }

    #[test]
    fn simplex_max_and_unbounded() {
        let mut p = Polyhedron::nonnegative(2);
        p.add_eq(vec![1.0, 1.0], 1.0);
        let o = lp_optimize(&[1.0, 0.0], &p, Sense::Max).unwrap();
        assert_eq!(o.status, LpStatus::Optimal);
        assert!((o.value - 1.0).abs() < 1e-12);
        let vs = vertices(&p).unwrap();
        assert_eq!(vs.len(), 2);
        assert!(vs.contains(&vec![1.0, 0.0]) && vs.contains(&vec![0.0, 1.0]));

        let q = Polyhedron::nonnegative(1);
        let u = lp_optimize(&[1.0], &q, Sense::Max).unwrap();
        assert_eq!(u.status, LpStatus::Unbounded);
        assert!(u.witness[0] > 0.0);
    }

    #[test]
    fn free_variables_and_negative_rhs() {
        // min x s.t. x >= -3 (as -x <= 3), x free.
        let mut p = Polyhedron::free(1);
        p.add_ineq(vec![-1.0], 3.0);
        let o = lp_optimize(&[1.0], &p, Sense::Min).unwrap();
        assert!((o.value + 3.0).abs() < 1e-12);
        // x + y <= -1, x,y >= -5 free otherwise; min -x.
        let mut q = Polyhedron::free(2);
        q.add_ineq(vec![1.0, 1.0], -1.0);
        q.add_ineq(vec![-1.0, 0.0], 5.0);
        q.add_ineq(vec![0.0, -1.0], 5.0);
        let o = lp_optimize(&[1.0, 0.0], &q, Sense::Max).unwrap();
        assert!((o.value - 4.0).abs() < 1e-12, "{o:?}");
    }

    #[test]
    fn cone_examples() {
        let mut both = Polyhedron::nonnegative(1);
        both.add_ineq(vec![1.0], 0.0);
        assert!(cone_only_zero(&both).unwrap().only_zero);

        let mut diag = Polyhedron::nonnegative(2);
        diag.add_eq(vec![1.0, -1.0], 0.0);
        let v = cone_only_zero(&diag).unwrap();
        assert!(!v.only_zero);
        let w = v.witness.unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);

        // -2 alpha + nu = 0 with alpha, nu >= 0.
        let mut ray = Polyhedron::nonnegative(2);
        ray.add_eq(vec![-2.0, 1.0], 0.0);
        let w = cone_only_zero(&ray).unwrap().witness.unwrap();
        assert!((w[1] - 2.0 * w[0]).abs() < 1e-12);

        // Free line: z1 - z2 = 0 with z free.
        let mut line = Polyhedron::free(2);
        line.add_eq(vec![1.0, -1.0], 0.0);
        assert!(!cone_only_zero(&line).unwrap().only_zero);

        let mut inhom = Polyhedron::free(1);
        inhom.add_eq(vec![1.0], 1.0);
        assert_eq!(cone_only_zero(&inhom), Err(LpError::NotHomogeneous));
    }

    #[test]
    fn degenerate_redundant_rows() {
        let mut p = Polyhedron::nonnegative(3);
        p.add_eq(vec![1.0, 1.0, 0.0], 1.0);
        p.add_eq(vec![2.0, 2.0, 0.0], 2.0);
        p.add_eq(vec![0.0, 0.0, 1.0], 0.0);
        let o = lp_optimize(&[1.0, 2.0, 0.0], &p, Sense::Max).unwrap();
        assert!((o.value - 2.0).abs() < 1e-12);
        assert_eq!(vertices(&p).unwrap().len(), 2);
    }

    #[test]
    fn vertex_guard() {
        let p = Polyhedron::nonnegative(13);
        assert!(matches!(vertices(&p), Err(LpError::DimensionGuard { .. })));
    }
}
