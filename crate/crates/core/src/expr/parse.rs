//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' ['-'] integer)?
//! atom   := number | 'x' INT | 'y' INT | '(' expr ')' | func '(' expr ')'
//! func   := sin | cos | exp | log | sqrt
//! ```
//!
//! Unary minus binds looser than `^`, so `-(x1-y1)^2` is `-((x1-y1)^2)`.

use alloc::string::{String, ToString};

use super::{BinaryOp, Expr, UnaryOp, VarKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { offset: usize, name: String },
    #[error("variable `{name}` at byte {offset} is out of range (n = {n}, m = {m})")]
    IndexOutOfRange {
        offset: usize,
        name: String,
        n: usize,
        m: usize,
    },
}

/// Parses `text` into an [`Expr`] over `x1..xn, y1..ym`.
pub fn parse_expr(text: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        n,
        m,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&alloc::format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::neg(self.factor()?));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(Expr::powi(base, k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(ParseError::Syntax {
                offset: start,
                message: "exponent must be an integer literal".to_string(),
            });
        }
        let lexeme = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        lexeme.parse::<i32>().map_err(|_| ParseError::Syntax {
            offset: start,
            message: "exponent out of range".to_string(),
        })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".to_string(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(ParseError::Syntax {
                    offset: save,
                    message: "malformed exponent".to_string(),
                });
            }
        }
        let lexeme = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = lexeme.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: "malformed number".to_string(),
        })?;
        if !v.is_finite() {
            return Err(ParseError::Syntax {
                offset: start,
                message: "number out of range".to_string(),
            });
        }
        Ok(Expr::Const(v))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let func = match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        };
        if let Some(op) = func {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::unary(op, arg));
        }
        let (kind, rest) = match name.as_bytes()[0] {
            b'x' => (VarKind::X, &name[1..]),
            b'y' => (VarKind::Y, &name[1..]),
            _ => {
                return Err(ParseError::UnknownVariable {
                    offset: start,
                    name: name.to_string(),
                })
            }
        };
        let index: usize = match rest.parse() {
            Ok(i) if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) => i,
            _ => {
                return Err(ParseError::UnknownVariable {
                    offset: start,
                    name: name.to_string(),
                })
            }
        };
        let limit = match kind {
            VarKind::X => self.n,
            VarKind::Y => self.m,
        };
        if index == 0 || index > limit {
            return Err(ParseError::IndexOutOfRange {
                offset: start,
                name: name.to_string(),
                n: self.n,
                m: self.m,
            });
        }
        Ok(Expr::Var(kind, index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    #[test]
    fn worked_example_objective_shape() {
        let e = parse_expr("(x1 - y1)^2", 1, 1).unwrap();
        let expected = Expr::PowI(
            Box::new(Expr::binary(BinaryOp::Sub, Expr::x(1), Expr::y(1))),
            2,
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn zero_literal() {
        assert_eq!(parse_expr("0", 1, 1).unwrap(), Expr::Const(0.0));
    }

    #[test]
    fn lower_constraint_vanishes_at_solution() {
        let e = parse_expr("x1 - y1 - 1", 1, 1).unwrap();
        let p = super::super::EvalPoint::new(alloc::vec![0.0], alloc::vec![-1.0]);
        assert_eq!(e.eval(&p).unwrap(), 0.0);
    }

    #[test]
    fn unary_minus_is_looser_than_power() {
        let e = parse_expr("-x1^2", 1, 1).unwrap();
        assert_eq!(e, Expr::neg(Expr::powi(Expr::x(1), 2)));
        assert_eq!(parse_expr("-3", 1, 1).unwrap(), Expr::Const(-3.0));
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse_expr("1.5e-3", 0, 0).unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse_expr(".25", 0, 0).unwrap(), Expr::Const(0.25));
        assert!(matches!(
            parse_expr("1e", 0, 0),
            Err(ParseError::Syntax { offset: 1, .. })
        ));
    }

    #[test]
    fn error_offsets() {
        assert!(matches!(
            parse_expr("x1 + * y1", 1, 1),
            Err(ParseError::Syntax { offset: 5, .. })
        ));
        assert!(matches!(
            parse_expr("x1 + z1", 1, 1),
            Err(ParseError::UnknownVariable { offset: 5, .. })
        ));
        assert!(matches!(
            parse_expr("y3", 1, 2),
            Err(ParseError::IndexOutOfRange { offset: 0, .. })
        ));
        assert!(matches!(
            parse_expr("x0", 1, 2),
            Err(ParseError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            parse_expr("(x1", 1, 1),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse_expr("x1^y1", 1, 1),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
    }

    #[test]
    fn functions_and_negative_powers() {
        let e = parse_expr("sqrt(exp(x1)) * y1^-2", 1, 1).unwrap();
        let p = super::super::EvalPoint::new(alloc::vec![2.0], alloc::vec![0.5]);
        let v = e.eval(&p).unwrap();
        assert!((v - libm::exp(1.0) * 4.0).abs() < 1e-12);
    }
}
