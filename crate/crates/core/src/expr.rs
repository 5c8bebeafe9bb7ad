//! Small serializable expression trees, evaluable on reals and on jets.
//!
//! Used for the scalar functions of `b²` that parameterize the PDE and the solution
//! generator (`c`, `μ`, `ν`, `h`, `Φ(ζ)`), and for metrics described in config files.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::jets::{Jet, JetError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
}

trait Scalar: Clone {
    fn lift(&self, c: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, JetError>;
    fn neg(&self) -> Self;
    fn powf(&self, p: f64) -> Result<Self, JetError>;
    fn exp(&self) -> Self;
    fn ln(&self) -> Result<Self, JetError>;
    fn sqrt(&self) -> Result<Self, JetError>;
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> f64 {
        c
    }
    fn add(&self, o: &f64) -> f64 {
        self + o
    }
    fn sub(&self, o: &f64) -> f64 {
        self - o
    }
    fn mul(&self, o: &f64) -> f64 {
        self * o
    }
    fn div(&self, o: &f64) -> Result<f64, JetError> {
        if *o == 0.0 {
            return Err(JetError::Domain { op: "div", value: 0.0 });
        }
        Ok(self / o)
    }
    fn neg(&self) -> f64 {
        -self
    }
    fn powf(&self, p: f64) -> Result<f64, JetError> {
        let integral = p.fract() == 0.0;
        if self.is_nan() || (!integral && *self <= 0.0) || (integral && *self == 0.0 && p < 0.0) {
            return Err(JetError::Domain { op: "pow", value: *self });
        }
        if integral && p.abs() <= 64.0 {
            Ok(self.powi(p as i32))
        } else {
            Ok(f64::powf(*self, p))
        }
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn ln(&self) -> Result<f64, JetError> {
        if !(*self > 0.0) {
            return Err(JetError::Domain { op: "log", value: *self });
        }
        Ok(f64::ln(*self))
    }
    fn sqrt(&self) -> Result<f64, JetError> {
        if !(*self >= 0.0) {
            return Err(JetError::Domain { op: "sqrt", value: *self });
        }
        Ok(f64::sqrt(*self))
    }
}

impl Scalar for Jet {
    fn lift(&self, c: f64) -> Jet {
        self.constant_like(c)
    }
    fn add(&self, o: &Jet) -> Jet {
        self + o
    }
    fn sub(&self, o: &Jet) -> Jet {
        self - o
    }
    fn mul(&self, o: &Jet) -> Jet {
        self * o
    }
    fn div(&self, o: &Jet) -> Result<Jet, JetError> {
        self.checked_div(o)
    }
    fn neg(&self) -> Jet {
        self.scale(-1.0)
    }
    fn powf(&self, p: f64) -> Result<Jet, JetError> {
        self.checked_powf(p)
    }
    fn exp(&self) -> Jet {
        Jet::exp(self)
    }
    fn ln(&self) -> Result<Jet, JetError> {
        self.checked_ln()
    }
    fn sqrt(&self) -> Result<Jet, JetError> {
        self.checked_sqrt()
    }
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn pow(self, p: f64) -> Expr {
        Expr::Pow(Box::new(self), p)
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Ln(Box::new(self))
    }

    /// Number of variables referenced (one past the largest index).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(v) | Expr::Mul(v) => v.iter().map(Expr::arity).max().unwrap_or(0),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.arity().max(b.arity()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) | Expr::Sqrt(a) => {
                a.arity()
            }
        }
    }

    pub fn eval(&self, vars: &[f64]) -> Result<f64, JetError> {
        self.eval_generic(vars, &0.0)
    }

    pub fn eval_jet(&self, vars: &[Jet]) -> Result<Jet, JetError> {
        let proto = vars.first().cloned().ok_or(JetError::Dimension {
            expected: self.arity().max(1),
            got: 0,
        })?;
        self.eval_generic(vars, &proto)
    }

    fn eval_generic<S: Scalar>(&self, vars: &[S], proto: &S) -> Result<S, JetError> {
        Ok(match self {
            Expr::Const(c) => proto.lift(*c),
            Expr::Var(i) => vars
                .get(*i)
                .cloned()
                .ok_or(JetError::Dimension {
                    expected: i + 1,
                    got: vars.len(),
                })?,
            Expr::Add(terms) => {
                let mut acc = proto.lift(0.0);
                for t in terms {
                    acc = acc.add(&t.eval_generic(vars, proto)?);
                }
                acc
            }
            Expr::Mul(terms) => {
                let mut acc = proto.lift(1.0);
                for t in terms {
                    acc = acc.mul(&t.eval_generic(vars, proto)?);
                }
                acc
            }
            Expr::Sub(a, b) => a.eval_generic(vars, proto)?.sub(&b.eval_generic(vars, proto)?),
            Expr::Div(a, b) => a.eval_generic(vars, proto)?.div(&b.eval_generic(vars, proto)?)?,
            Expr::Neg(a) => a.eval_generic(vars, proto)?.neg(),
            Expr::Pow(a, p) => a.eval_generic(vars, proto)?.powf(*p)?,
            Expr::Exp(a) => a.eval_generic(vars, proto)?.exp(),
            Expr::Ln(a) => a.eval_generic(vars, proto)?.ln()?,
            Expr::Sqrt(a) => a.eval_generic(vars, proto)?.sqrt()?,
        })
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::Const(v)
    }
}

impl<T: Into<Expr>> Add<T> for Expr {
    type Output = Expr;
    fn add(self, rhs: T) -> Expr {
        Expr::Add(vec![self, rhs.into()])
    }
}

impl<T: Into<Expr>> Sub<T> for Expr {
    type Output = Expr;
    fn sub(self, rhs: T) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs.into()))
    }
}

impl<T: Into<Expr>> Mul<T> for Expr {
    type Output = Expr;
    fn mul(self, rhs: T) -> Expr {
        Expr::Mul(vec![self, rhs.into()])
    }
}

impl<T: Into<Expr>> Div<T> for Expr {
    type Output = Expr;
    fn div(self, rhs: T) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs.into()))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl Sub<Expr> for f64 {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Const(self) - rhs
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Const(self) * rhs
    }
}

impl Add<Expr> for f64 {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Const(self) + rhs
    }
}

impl Div<Expr> for f64 {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Const(self) / rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Layout;

    #[test]
    fn real_and_jet_evaluation_agree() {
        // c = 1 - b², μ = b⁵/(1-b²)
        let b2 = Expr::var(0);
        let mu = b2.clone().pow(2.5) / (1.0 - b2.clone());
        let v = mu.eval(&[0.25]).unwrap();
        assert!((v - 0.03125 / 0.75).abs() < 1e-15);
        let l = Layout::uniform(1, 2).unwrap();
        let j = mu.eval_jet(&[Jet::variable(&l, 0.25, 0)]).unwrap();
        assert!((j.value() - v).abs() < 1e-15);
        let h = 1e-6;
        let fd = (mu.eval(&[0.25 + h]).unwrap() - mu.eval(&[0.25 - h]).unwrap()) / (2.0 * h);
        assert!((j.partial(&[0]) - fd).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let e = (Expr::var(0) * 2.0 + 1.0).sqrt().exp();
        let text = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&text).unwrap();
        assert_eq!(e, back);
        assert_eq!(e.arity(), 1);
    }

    #[test]
    fn domain_errors_propagate() {
        let e = Expr::var(0).ln();
        assert!(e.eval(&[-1.0]).is_err());
        assert!((1.0 / Expr::var(0)).eval(&[0.0]).is_err());
    }
}
