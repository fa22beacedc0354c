//! Forward-mode automatic differentiation over dual and hyper-dual numbers.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use super::{EvalError, EvalPoint, Expr};
use crate::linalg::Matrix;

/// Number type an [`Expr`] can be evaluated over.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, k: i32) -> Self;
    fn is_finite(&self) -> bool;
    /// Whether the type carries derivative parts (non-smooth points of
    /// `sqrt` are rejected for these).
    fn has_derivatives(&self) -> bool;
}

fn ipow(v: f64, k: i32) -> f64 {
    if k < 0 {
        return 1.0 / ipow(v, -k);
    }
    let mut base = v;
    let mut e = k as u32;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// `(v^k, d/dv, d2/dv2)` without forming `0 * inf`.
fn pow_parts(v: f64, k: i32) -> (f64, f64, f64) {
    let f0 = ipow(v, k);
    let f1 = if k == 0 { 0.0 } else { k as f64 * ipow(v, k - 1) };
    let f2 = if k == 0 || k == 1 {
        0.0
    } else {
        (k as f64) * (k as f64 - 1.0) * ipow(v, k - 2)
    };
    (f0, f1, f2)
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn powi(self, k: i32) -> Self {
        ipow(self, k)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn has_derivatives(&self) -> bool {
        false
    }
}

/// First-order dual number `v + d*eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }

    fn chain(self, f0: f64, f1: f64) -> Self {
        Dual::new(f0, f1 * self.d)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, (self.d - q * o.d) / o.v)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Self {
        Dual::new(c, 0.0)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(libm::sin(self.v), libm::cos(self.v))
    }
    fn cos(self) -> Self {
        self.chain(libm::cos(self.v), -libm::sin(self.v))
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.v);
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(libm::log(self.v), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.v);
        self.chain(s, 0.5 / s)
    }
    fn powi(self, k: i32) -> Self {
        let (f0, f1, _) = pow_parts(self.v, k);
        self.chain(f0, f1)
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d.is_finite()
    }
    fn has_derivatives(&self) -> bool {
        true
    }
}

/// Hyper-dual number `v + e1*eps1 + e2*eps2 + e12*eps1*eps2`; `e12` carries
/// an exact mixed second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual {
    pub v: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn new(v: f64, e1: f64, e2: f64, e12: f64) -> Self {
        HyperDual { v, e1, e2, e12 }
    }

    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        HyperDual::new(
            f0,
            f1 * self.e1,
            f1 * self.e2,
            f1 * self.e12 + f2 * self.e1 * self.e2,
        )
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for HyperDual {
    type Output = HyperDual;
    fn add(self, o: HyperDual) -> HyperDual {
        HyperDual::new(
            self.v + o.v,
            self.e1 + o.e1,
            self.e2 + o.e2,
            self.e12 + o.e12,
        )
    }
}

impl Sub for HyperDual {
    type Output = HyperDual;
    fn sub(self, o: HyperDual) -> HyperDual {
        self + (-o)
    }
}

impl Mul for HyperDual {
    type Output = HyperDual;
    fn mul(self, o: HyperDual) -> HyperDual {
        HyperDual::new(
            self.v * o.v,
            self.v * o.e1 + self.e1 * o.v,
            self.v * o.e2 + self.e2 * o.v,
            self.v * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.v,
        )
    }
}

impl Div for HyperDual {
    type Output = HyperDual;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: HyperDual) -> HyperDual {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = HyperDual;
    fn neg(self) -> HyperDual {
        HyperDual::new(-self.v, -self.e1, -self.e2, -self.e12)
    }
}

impl Scalar for HyperDual {
    fn constant(c: f64) -> Self {
        HyperDual::new(c, 0.0, 0.0, 0.0)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.v);
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(libm::log(self.v), r, -r * r)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.v);
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn powi(self, k: i32) -> Self {
        let (f0, f1, f2) = pow_parts(self.v, k);
        self.chain(f0, f1, f2)
    }
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.e1.is_finite() && self.e2.is_finite() && self.e12.is_finite()
    }
    fn has_derivatives(&self) -> bool {
        true
    }
}

/// Value and gradient with respect to the concatenated `(x, y)`.
pub fn value_and_gradient(e: &Expr, p: &EvalPoint) -> Result<(f64, Vec<f64>), EvalError> {
    let dim = p.dim();
    if dim == 0 {
        return Ok((e.eval(p)?, Vec::new()));
    }
    let mut grad = vec![0.0; dim];
    let mut value = 0.0;
    for (j, g) in grad.iter_mut().enumerate() {
        let out = e.eval_generic(&|kind, idx| {
            let d = if p.flat_index(kind, idx) == j { 1.0 } else { 0.0 };
            Dual::new(p.coord(kind, idx), d)
        })?;
        value = out.v;
        *g = out.d;
    }
    Ok((value, grad))
}

/// Gradient with respect to the concatenated `(x, y)`.
pub fn gradient(e: &Expr, p: &EvalPoint) -> Result<Vec<f64>, EvalError> {
    value_and_gradient(e, p).map(|(_, g)| g)
}

/// Hessian with respect to the concatenated `(x, y)`. Only the upper
/// triangle is computed; the result is exactly symmetric.
pub fn hessian(e: &Expr, p: &EvalPoint) -> Result<Matrix, EvalError> {
    let dim = p.dim();
    let mut h = Matrix::zeros(dim, dim);
    if dim == 0 {
        e.eval(p)?;
        return Ok(h);
    }
    for i in 0..dim {
        for j in i..dim {
            let out = e.eval_generic(&|kind, idx| {
                let k = p.flat_index(kind, idx);
                HyperDual::new(
                    p.coord(kind, idx),
                    if k == i { 1.0 } else { 0.0 },
                    if k == j { 1.0 } else { 0.0 },
                    0.0,
                )
            })?;
            h[(i, j)] = out.e12;
            h[(j, i)] = out.e12;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn pt(x: &[f64], y: &[f64]) -> EvalPoint {
        EvalPoint::new(x.to_vec(), y.to_vec())
    }

    #[test]
    fn worked_example_derivatives() {
        let f = parse_expr("-(x1-y1)^2", 1, 1).unwrap();
        let p = pt(&[0.0], &[-1.0]);
        let (v, g) = value_and_gradient(&f, &p).unwrap();
        assert_eq!(v, -1.0);
        assert_eq!(g, vec![-2.0, 2.0]);
        let h = hessian(&f, &p).unwrap();
        assert_eq!(h.to_rows(), vec![vec![-2.0, 2.0], vec![2.0, -2.0]]);
    }

    #[test]
    fn transcendental_second_derivatives() {
        let e = parse_expr("sin(x1)*exp(y1) + log(y1 + 2) + sqrt(x1 + 3) / y1^3", 1, 1).unwrap();
        let (x, y) = (0.3, 0.7);
        let h = hessian(&e, &pt(&[x], &[y])).unwrap();
        let s3 = libm::sqrt(x + 3.0);
        let hxx = -libm::sin(x) * libm::exp(y) - 0.25 / (s3 * (x + 3.0)) / (y * y * y);
        let hxy = libm::cos(x) * libm::exp(y) + 0.5 / s3 * (-3.0 / (y * y * y * y));
        let hyy =
            libm::sin(x) * libm::exp(y) - 1.0 / ((y + 2.0) * (y + 2.0)) + s3 * 12.0 / (y * y * y * y * y);
        assert!((h[(0, 0)] - hxx).abs() < 1e-12);
        assert!((h[(0, 1)] - hxy).abs() < 1e-12);
        assert!((h[(1, 1)] - hyy).abs() < 1e-11);
    }

    #[test]
    fn powers_at_zero_are_finite() {
        let e = parse_expr("y1^1 + y1^2 + y1^0", 0, 1).unwrap();
        let h = hessian(&e, &pt(&[], &[0.0])).unwrap();
        assert_eq!(h[(0, 0)], 2.0);
        assert_eq!(gradient(&e, &pt(&[], &[0.0])).unwrap(), vec![1.0]);
    }

    #[test]
    fn sqrt_at_zero_has_no_derivative() {
        let e = parse_expr("sqrt(y1)", 0, 1).unwrap();
        assert!(gradient(&e, &pt(&[], &[0.0])).is_err());
    }
}
