//! Small dense linear algebra used by the inner solver, the LP kernel and the
//! reporting code. Sizes are tiny (tens of rows), so everything is row-major
//! `Vec<f64>` with partial pivoting.

use alloc::vec;
use alloc::vec::Vec;

use crate::tol;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix rows");
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below the relative threshold.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= tol::PIVOT * scale {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.data.swap(k * n + j, piv * n + j);
            }
            rhs.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                let v = m[(k, j)];
                m[(i, j)] -= f * v;
            }
            rhs[i] -= f * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[(k, j)] * x[j]).sum();
        x[k] = (rhs[k] - s) / m[(k, k)];
    }
    Some(x)
}

/// Cholesky factor `L` with `a = L L^T`, or `None` if `a` is not numerically
/// positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[(i, k)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[(k, i)] * z[k];
        }
        z[i] /= l[(i, i)];
    }
    z
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Rank of the matrix formed by `rows`, by Gaussian elimination with full
/// pivoting and a relative threshold.
pub fn rank(rows: &[Vec<f64>], cols: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, x| s.max(x.abs()))
        .max(1.0);
    let mut r = 0;
    let mut used_col = vec![false; cols];
    while r < m.len() {
        let mut best = (0, 0, 0.0);
        for (i, row) in m.iter().enumerate().skip(r) {
            for (j, v) in row.iter().enumerate() {
                if !used_col[j] && v.abs() > best.2 {
                    best = (i, j, v.abs());
                }
            }
        }
        if best.2 <= 1e-10 * scale {
            break;
        }
        m.swap(r, best.0);
        let pc = best.1;
        used_col[pc] = true;
        let prow = m[r].clone();
        for row in m.iter_mut().skip(r + 1) {
            let f = row[pc] / prow[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(&prow) {
                    *x -= f * p;
                }
            }
        }
        r += 1;
    }
    r
}

/// Non-negative least squares `min ||A x - b||, x >= 0` (Lawson-Hanson).
/// `a` is given column-wise: `cols[j]` is column `j` of `A`.
pub fn nnls(cols: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let mut x = vec![0.0; k];
    if k == 0 {
        return x;
    }
    let mut passive = vec![false; k];
    let residual = |x: &[f64]| -> Vec<f64> {
        let mut r = b.to_vec();
        for (j, c) in cols.iter().enumerate() {
            axpy(-x[j], c, &mut r);
        }
        r
    };
    let solve_passive = |passive: &[bool]| -> Vec<f64> {
        let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
        let mut z = vec![0.0; k];
        if idx.is_empty() {
            return z;
        }
        // Normal equations with a tiny ridge for rank-deficient columns.
        let mut ata = Matrix::zeros(idx.len(), idx.len());
        let mut atb = vec![0.0; idx.len()];
        for (a, &ja) in idx.iter().enumerate() {
            atb[a] = dot(&cols[ja], b);
            for (c, &jc) in idx.iter().enumerate() {
                ata[(a, c)] = dot(&cols[ja], &cols[jc]);
            }
        }
        let ridge = 1e-14 * (0..idx.len()).fold(1.0f64, |s, i| s.max(ata[(i, i)]));
        for i in 0..idx.len() {
            ata[(i, i)] += ridge;
        }
        let sol = solve(&ata, &atb).unwrap_or_else(|| vec![0.0; idx.len()]);
        for (a, &ja) in idx.iter().enumerate() {
            z[ja] = sol[a];
        }
        z
    };
    for _outer in 0..(3 * k + 10) {
        let r = residual(&x);
        let w: Vec<f64> = cols.iter().map(|c| dot(c, &r)).collect();
        let cand = (0..k)
            .filter(|&j| !passive[j] && w[j] > 1e-13)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = cand else { break };
        passive[t] = true;
        for _inner in 0..(3 * k + 10) {
            let z = solve_passive(&passive);
            if (0..k).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = 1.0f64;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    let denom = x[j] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for j in 0..k {
                x[j] += alpha * (z[j] - x[j]);
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_is_detected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(solve(&a, &[1.0, 2.0]).is_none());
        assert_eq!(rank(&a.to_rows(), 2), 1);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&a).is_none());
        let b = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky(&b).unwrap();
        let x = cholesky_solve(&l, &[2.0, 1.0]);
        let back = b.mul_vec(&x);
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = Matrix::from_rows(&[vec![-2.0, 2.0], vec![2.0, -2.0]]);
        let ev = symmetric_eigenvalues(&a);
        assert!((ev[0] + 4.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
    }

    #[test]
    fn nnls_clips_negative_direction() {
        // columns e1, -e1 ; target (1, 0) -> x = (1, 0)
        let x = nnls(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &[1.0, 0.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        let y = nnls(&[vec![1.0, 0.0]], &[-1.0, 0.0]);
        assert_eq!(y, vec![0.0]);
    }
}
