use thiserror::Error;

use crate::jets::JetError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("point outside the admissible domain: {0}")]
    Inadmissible(String),
    #[error("metric degenerate at this point: {0}")]
    Degenerate(String),
    #[error("positivity condition {condition} fails: margin {margin:e} at b2={b2}, s={s}")]
    Positivity {
        condition: u8,
        margin: f64,
        b2: f64,
        s: f64,
    },
    #[error("quadrature did not converge on [{a}, {b}]: error estimate {estimate:e}")]
    Quadrature { a: f64, b: f64, estimate: f64 },
    #[error("zeta denominator vanishes at b2={b2}, s={s}")]
    ZetaDenominator { b2: f64, s: f64 },
    #[error("{0} cannot be evaluated on jets")]
    NotJetEvaluable(String),
    #[error("precondition `{what}` violated: residual {residual:e}")]
    Precondition { what: String, residual: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
