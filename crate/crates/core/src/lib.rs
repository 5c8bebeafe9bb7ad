//! Verification kernel for general `(α, β)`-metrics `F = α φ(b², β/α)` of Douglas type.
//!
//! * [`jets`]: truncated multivariate Taylor arithmetic (exact derivatives).
//! * [`riemann`]: Christoffel symbols, covariant derivatives of one-forms, and the
//!   `b_{i|j} = 2τ(k a_ij + … )` structure fit.
//! * [`phi`]: profiles `φ(b², s)`, their auxiliary quantities, the Douglas PDE and the
//!   quadrature-based solution generator.
//! * [`finsler`]: fundamental tensor, sprays and the Douglas tensor.
//! * [`catalog`]: worked examples and the selector grammar used by the CLI.

pub mod catalog;
pub mod error;
pub mod expr;
pub mod finsler;
pub mod jets;
pub mod phi;
pub mod quadrature;
pub mod riemann;
pub mod sampling;

pub use error::{Error, Result};
pub use expr::Expr;
pub use jets::{Jet, Layout};
