use super::{BinOp, Expr, ExprError, Func};

// Constructors with light constant folding so derivative trees stay readable.
// They never change the value of the expression.

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

impl Expr {
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            _ if is_num(&a, 0.0) => b,
            _ if is_num(&b, 0.0) => a,
            _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            _ if is_num(&b, 0.0) => a,
            _ if is_num(&a, 0.0) => Expr::neg(b),
            _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
            _ if is_num(&a, 1.0) => b,
            _ if is_num(&b, 1.0) => a,
            _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            _ if is_num(&a, 0.0) => Expr::Num(0.0),
            _ if is_num(&b, 1.0) => a,
            _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if is_num(&b, 1.0) {
            return a;
        }
        Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(x) => Expr::Num(-x),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Symbolic partial derivative with respect to `var`.
    ///
    /// The result is not simplified beyond trivial constant folding. Powers
    /// whose exponent depends on `var` are rejected.
    pub fn differentiate(&self, var: &str) -> Result<Expr, ExprError> {
        if !self.depends_on(var) {
            return Ok(Expr::Num(0.0));
        }
        Ok(match self {
            Expr::Num(_) | Expr::Const(_) => Expr::Num(0.0),
            Expr::Var(name) => Expr::Num(if name == var { 1.0 } else { 0.0 }),
            Expr::Neg(inner) => Expr::neg(inner.differentiate(var)?),
            Expr::Bin(op, lhs, rhs) => {
                let (a, b) = (lhs.as_ref(), rhs.as_ref());
                match op {
                    BinOp::Add => Expr::add(a.differentiate(var)?, b.differentiate(var)?),
                    BinOp::Sub => Expr::sub(a.differentiate(var)?, b.differentiate(var)?),
                    BinOp::Mul => Expr::add(
                        Expr::mul(a.differentiate(var)?, b.clone()),
                        Expr::mul(a.clone(), b.differentiate(var)?),
                    ),
                    BinOp::Div => {
                        // (a'b - ab') / b^2
                        let numerator = Expr::sub(
                            Expr::mul(a.differentiate(var)?, b.clone()),
                            Expr::mul(a.clone(), b.differentiate(var)?),
                        );
                        Expr::div(numerator, Expr::mul(b.clone(), b.clone()))
                    }
                    BinOp::Pow => {
                        if b.depends_on(var) {
                            return Err(ExprError::VariableExponent {
                                node: self.to_string(),
                                var: var.to_string(),
                            });
                        }
                        // b * a^(b-1) * a'
                        let lowered = Expr::sub(b.clone(), Expr::Num(1.0));
                        Expr::mul(
                            Expr::mul(b.clone(), Expr::pow(a.clone(), lowered)),
                            a.differentiate(var)?,
                        )
                    }
                }
            }
            Expr::Call(func, arg) => {
                let inner = arg.as_ref().clone();
                let outer = match func {
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, inner)),
                    Func::Exp => self.clone(),
                    Func::Ln => Expr::div(Expr::Num(1.0), inner),
                    Func::Sqrt => Expr::div(Expr::Num(0.5), self.clone()),
                };
                Expr::mul(outer, arg.differentiate(var)?)
            }
        })
    }
}
