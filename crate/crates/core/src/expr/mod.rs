//! Scalar expressions over chart coordinates and named parameters.
//!
//! Expressions are parsed from the small infix grammar below, evaluated in
//! double precision, and differentiated symbolically. Chart models use them
//! for frame coefficients and vector-field components.
//!
//! ```text
//! expr    := term { ("+"|"-") term } ;
//! term    := factor { ("*"|"/") factor } ;
//! factor  := ["-"] power ;
//! power   := atom [ "^" factor ] ;
//! atom    := number | ident | ident "(" expr ")" | "(" expr ")" ;
//! ```
//!
//! `pi`, `e`, `sin`, `cos`, `exp`, `ln` and `sqrt` are reserved.

mod diff;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {reason} in `{node}`")]
    Domain { reason: &'static str, node: String },
    #[error("cannot differentiate `{node}` with respect to `{var}`: exponent depends on the variable")]
    VariableExponent { node: String, var: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Immutable once built; evaluation and differentiation are pure.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable lookup used by [`Expr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

/// Chart coordinates `x1..xn` followed by named parameters.
#[derive(Debug, Clone, Copy)]
pub struct ChartEnv<'a> {
    pub coords: &'a [f64],
    pub params: &'a BTreeMap<String, f64>,
}

impl Env for ChartEnv<'_> {
    fn lookup(&self, name: &str) -> Option<f64> {
        if let Some(index) = coordinate_index(name) {
            if index < self.coords.len() {
                return Some(self.coords[index]);
            }
        }
        self.params.get(name).copied()
    }
}

/// Zero-based index of a coordinate name `x1..xn`, or `None` for anything else.
pub fn coordinate_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

pub fn coordinate_name(index: usize) -> String {
    format!("x{}", index + 1)
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num(value)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Const(c) => Ok(c.value()),
            Expr::Var(name) => env
                .lookup(name)
                .ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Neg(inner) => Ok(-inner.eval(env)?),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(self.domain("division by zero"))
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        let value = a.powf(b);
                        if value.is_nan() {
                            Err(self.domain("negative base with non-integer exponent"))
                        } else if a == 0.0 && b < 0.0 {
                            Err(self.domain("zero raised to a negative power"))
                        } else {
                            Ok(value)
                        }
                    }
                }
            }
            Expr::Call(func, arg) => {
                let x = arg.eval(env)?;
                match func {
                    Func::Sin => Ok(x.sin()),
                    Func::Cos => Ok(x.cos()),
                    Func::Exp => Ok(x.exp()),
                    Func::Ln => {
                        if x <= 0.0 {
                            Err(self.domain("logarithm of a non-positive value"))
                        } else {
                            Ok(x.ln())
                        }
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            Err(self.domain("square root of a negative value"))
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                }
            }
        }
    }

    fn domain(&self, reason: &'static str) -> ExprError {
        ExprError::Domain {
            reason,
            node: self.to_string(),
        }
    }

    /// Names referenced by `Var` nodes.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) | Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) | Expr::Call(_, inner) => inner.collect_variables(out),
            Expr::Bin(_, lhs, rhs) => {
                lhs.collect_variables(out);
                rhs.collect_variables(out);
            }
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) => false,
            Expr::Var(name) => name == var,
            Expr::Neg(inner) | Expr::Call(_, inner) => inner.depends_on(var),
            Expr::Bin(_, lhs, rhs) => lhs.depends_on(var) || rhs.depends_on(var),
        }
    }

    /// Replaces every occurrence of `var` with `with`.
    pub fn substitute(&self, var: &str, with: &Expr) -> Expr {
        match self {
            Expr::Var(name) if name == var => with.clone(),
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(inner) => Expr::Neg(Box::new(inner.substitute(var, with))),
            Expr::Call(f, inner) => Expr::Call(*f, Box::new(inner.substitute(var, with))),
            Expr::Bin(op, lhs, rhs) => Expr::Bin(
                *op,
                Box::new(lhs.substitute(var, with)),
                Box::new(rhs.substitute(var, with)),
            ),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(inner) | Expr::Call(_, inner) => 1 + inner.node_count(),
            Expr::Bin(_, lhs, rhs) => 1 + lhs.node_count() + rhs.node_count(),
        }
    }

    /// Constant value when the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if let Expr::Num(v) = self {
            return Some(*v);
        }
        None
    }

    // Binding strength used by the printer; mirrors the grammar levels.
    fn level(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_at_level(f: &mut fmt::Formatter<'_>, e: &Expr, min_level: u8) -> fmt::Result {
    if e.level() < min_level {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Const(c) => f.write_str(c.name()),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_at_level(f, inner, 4)
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Bin(op, lhs, rhs) => {
                let (left_min, right_min) = match op {
                    BinOp::Add | BinOp::Sub => (1, 2),
                    BinOp::Mul | BinOp::Div => (2, 3),
                    BinOp::Pow => (5, 3),
                };
                write_at_level(f, lhs, left_min)?;
                f.write_str(op.symbol())?;
                write_at_level(f, rhs, right_min)
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let e = parse("exp(0.3*sin(2*pi*x2))").unwrap();
        let v = e.eval(&[("x2", 0.25)]).unwrap();
        assert!((v - 0.3f64.exp()).abs() < 1e-15);
        assert!((v - 1.3498588076).abs() < 1e-10);
        assert_eq!(parse("x1").unwrap().eval(&[("x1", 7.0)]).unwrap(), 7.0);
    }

    #[test]
    fn eval_errors() {
        let err = parse("ln(x1)").unwrap().eval(&[("x1", 0.0)]).unwrap_err();
        assert!(matches!(err, ExprError::Domain { .. }));
        let err = parse("sqrt(x1)").unwrap().eval(&[("x1", -1.0)]).unwrap_err();
        assert!(matches!(err, ExprError::Domain { .. }));
        let err = parse("1/(x1-1)").unwrap().eval(&[("x1", 1.0)]).unwrap_err();
        match err {
            ExprError::Domain { node, .. } => assert_eq!(node, "1/(x1-1)"),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("x1+y").unwrap().eval(&[("x1", 1.0)]).unwrap_err();
        assert_eq!(err, ExprError::Unbound("y".into()));
    }

    #[test]
    fn coordinate_names() {
        assert_eq!(coordinate_index("x1"), Some(0));
        assert_eq!(coordinate_index("x12"), Some(11));
        assert_eq!(coordinate_index("x0"), None);
        assert_eq!(coordinate_index("x01"), None);
        assert_eq!(coordinate_index("xa"), None);
        assert_eq!(coordinate_index("y1"), None);
        assert_eq!(coordinate_name(2), "x3");
    }

    #[test]
    fn chart_env_prefers_coordinates() {
        let mut params = BTreeMap::new();
        params.insert("c".to_string(), 2.5);
        let coords = [0.1, 0.2];
        let env = ChartEnv {
            coords: &coords,
            params: &params,
        };
        assert_eq!(env.lookup("x2"), Some(0.2));
        assert_eq!(env.lookup("x3"), None);
        assert_eq!(env.lookup("c"), Some(2.5));
    }

    #[test]
    fn printing_keeps_structure() {
        for text in [
            "a-(b-c)",
            "a/(b*c)",
            "-x1^2",
            "(-x1)^2",
            "2^-x1",
            "2^3^x1",
            "(2^3)^x1",
            "-(a+b)*c",
            "sin(x1)^2",
        ] {
            let e = parse(text).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{text} -> {printed}");
        }
        assert_eq!(Expr::Num(-3.0).to_string(), "(-3)");
    }

    #[test]
    fn substitution() {
        let e = parse("cos(2*pi*x2)").unwrap();
        let shifted = e.substitute("x2", &parse("x2+1").unwrap());
        let a = e.eval(&[("x2", 0.3)]).unwrap();
        let b = shifted.eval(&[("x2", 0.3)]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(
            e.variables().into_iter().collect::<Vec<_>>(),
            vec!["x2".to_string()]
        );
    }
}
