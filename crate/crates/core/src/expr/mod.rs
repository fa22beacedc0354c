//! Symbolic problem data: expression trees over `x1..xn, y1..ym`, a parser
//! for the textual grammar, and exact first/second derivatives by
//! forward-mode automatic differentiation.

mod ad;
mod parse;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use ad::{gradient, hessian, value_and_gradient, Dual, HyperDual, Scalar};
pub use parse::{parse_expr, ParseError};

/// Which block of the decision vector a variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

/// Immutable expression tree. Variable indices are 1-based, as in the
/// textual form.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarKind, usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn x(index: usize) -> Expr {
        Expr::Var(VarKind::X, index)
    }

    pub fn y(index: usize) -> Expr {
        Expr::Var(VarKind::Y, index)
    }

    /// Negation; folds into literal constants so that printing and parsing
    /// agree on the tree shape.
    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
        }
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        match op {
            UnaryOp::Neg => Expr::neg(e),
            _ => Expr::Unary(op, Box::new(e)),
        }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn powi(e: Expr, k: i32) -> Expr {
        Expr::PowI(Box::new(e), k)
    }

    /// Largest `x` and `y` indices referenced (0 when none).
    pub fn max_indices(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::Var(VarKind::X, i) => (*i, 0),
            Expr::Var(VarKind::Y, i) => (0, *i),
            Expr::Unary(_, a) | Expr::PowI(a, _) => a.max_indices(),
            Expr::Binary(_, a, b) => {
                let (ax, ay) = a.max_indices();
                let (bx, by) = b.max_indices();
                (ax.max(bx), ay.max(by))
            }
        }
    }

    /// True when the tree contains no variables.
    pub fn is_constant(&self) -> bool {
        self.max_indices() == (0, 0)
    }

    /// Structural affinity test: sums, differences, negations, products with
    /// a constant factor, and division by a constant, over variables and
    /// constants. Used as a machine-checkable sufficient condition for
    /// constraint qualifications of linear systems.
    pub fn is_affine(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(..) => true,
            Expr::Unary(UnaryOp::Neg, a) => a.is_affine(),
            Expr::Unary(..) => self.is_constant(),
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, a, b) => a.is_affine() && b.is_affine(),
            Expr::Binary(BinaryOp::Mul, a, b) => {
                (a.is_constant() && b.is_affine()) || (b.is_constant() && a.is_affine())
            }
            Expr::Binary(BinaryOp::Div, a, b) => b.is_constant() && a.is_affine(),
            Expr::PowI(a, k) => self.is_constant() || (*k == 1 && a.is_affine()) || *k == 0,
        }
    }

    /// Plain `f64` evaluation.
    pub fn eval(&self, p: &EvalPoint) -> Result<f64, EvalError> {
        self.eval_generic(&|kind, idx| f64::constant(p.coord(kind, idx)))
    }

    /// Evaluates the tree over any [`Scalar`] type. `leaf` supplies the value
    /// of each variable.
    pub fn eval_generic<T: Scalar>(
        &self,
        leaf: &dyn Fn(VarKind, usize) -> T,
    ) -> Result<T, EvalError> {
        let out = match self {
            Expr::Const(c) => T::constant(*c),
            Expr::Var(kind, i) => leaf(*kind, *i),
            Expr::Unary(op, a) => {
                let v = a.eval_generic(leaf)?;
                match op {
                    UnaryOp::Neg => -v,
                    UnaryOp::Sin => v.sin(),
                    UnaryOp::Cos => v.cos(),
                    UnaryOp::Exp => v.exp(),
                    UnaryOp::Log => {
                        if v.value() <= 0.0 {
                            return Err(self.domain_error("log of a nonpositive argument"));
                        }
                        v.ln()
                    }
                    UnaryOp::Sqrt => {
                        if v.value() < 0.0 {
                            return Err(self.domain_error("sqrt of a negative argument"));
                        }
                        if v.value() == 0.0 && v.has_derivatives() {
                            return Err(self.domain_error("sqrt is not differentiable at 0"));
                        }
                        v.sqrt()
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let va = a.eval_generic(leaf)?;
                let vb = b.eval_generic(leaf)?;
                match op {
                    BinaryOp::Add => va + vb,
                    BinaryOp::Sub => va - vb,
                    BinaryOp::Mul => va * vb,
                    BinaryOp::Div => {
                        if vb.value() == 0.0 {
                            return Err(self.domain_error("division by zero"));
                        }
                        va / vb
                    }
                }
            }
            Expr::PowI(a, k) => {
                let v = a.eval_generic(leaf)?;
                if *k < 0 && v.value() == 0.0 {
                    return Err(self.domain_error("negative power of zero"));
                }
                v.powi(*k)
            }
        };
        if !out.is_finite() {
            return Err(self.domain_error("non-finite result"));
        }
        Ok(out)
    }

    fn domain_error(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            reason,
            subexpression: alloc::format!("{self}"),
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised form; re-parses to the identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(VarKind::X, i) => write!(f, "x{i}"),
            Expr::Var(VarKind::Y, i) => write!(f, "y{i}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "-({a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::PowI(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

/// Evaluation point `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        EvalPoint { x, y }
    }

    /// Splits a concatenated `(x, y)` vector.
    pub fn from_concat(z: &[f64], n: usize) -> Self {
        EvalPoint {
            x: z[..n].to_vec(),
            y: z[n..].to_vec(),
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.y);
        z
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.y.len()
    }

    /// 1-based coordinate lookup.
    pub fn coord(&self, kind: VarKind, index: usize) -> f64 {
        match kind {
            VarKind::X => self.x[index - 1],
            VarKind::Y => self.y[index - 1],
        }
    }

    /// Position of a variable in the concatenated `(x, y)` vector.
    pub fn flat_index(&self, kind: VarKind, index: usize) -> usize {
        match kind {
            VarKind::X => index - 1,
            VarKind::Y => self.x.len() + index - 1,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error ({reason}) in `{subexpression}`")]
    Domain {
        reason: &'static str,
        subexpression: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pt(x: f64, y: f64) -> EvalPoint {
        EvalPoint::new(vec![x], vec![y])
    }

    #[test]
    fn lower_objective_of_worked_example() {
        let f = parse_expr("-(x1-y1)^2", 1, 1).unwrap();
        assert_eq!(f.eval(&pt(0.0, -1.0)).unwrap(), -1.0);
    }

    #[test]
    fn constants_and_bilinear() {
        let c = parse_expr("7", 1, 1).unwrap();
        assert_eq!(c.eval(&pt(3.0, 4.0)).unwrap(), 7.0);
        let b = parse_expr("x1*y1", 1, 1).unwrap();
        assert_eq!(b.eval(&pt(2.0, 3.0)).unwrap(), 6.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse_expr("1 + log(x1 - 1)", 1, 1).unwrap();
        match e.eval(&pt(0.5, 0.0)) {
            Err(EvalError::Domain { subexpression, .. }) => {
                assert!(subexpression.starts_with("log("), "{subexpression}")
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        let s = parse_expr("sqrt(y1)", 1, 1).unwrap();
        assert!(s.eval(&pt(0.0, -1.0)).is_err());
        assert_eq!(s.eval(&pt(0.0, 0.0)).unwrap(), 0.0);
        let d = parse_expr("1/(x1-y1)", 1, 1).unwrap();
        assert!(d.eval(&pt(1.0, 1.0)).is_err());
    }

    #[test]
    fn affine_detection() {
        let yes = ["x1 - y1 - 1", "2*(y1+x1)/4", "-y1", "3"];
        let no = ["x1*y1", "y1^2", "sin(y1)", "1/y1"];
        for s in yes {
            assert!(parse_expr(s, 1, 1).unwrap().is_affine(), "{s}");
        }
        for s in no {
            assert!(!parse_expr(s, 1, 1).unwrap().is_affine(), "{s}");
        }
    }
}
