//! Profiles `φ(b², s)`: partial derivatives, the auxiliary quantities of the spray
//! formula, the Douglas PDE residual, positivity checks and the Riemannian-type test.
//!
//! Subscript 1 denotes `∂/∂b²`, subscript 2 denotes `∂/∂s`.

pub mod generator;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jets::{Jet, Layout};

pub use generator::{GeneratorPhi, GeneratorSpec, Lemma23Phi, zeta};

/// `φ` together with the partials the spray and PDE formulas use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPartials {
    pub b2: f64,
    pub s: f64,
    pub phi: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi12: f64,
    pub phi22: f64,
}

impl PhiPartials {
    /// `φ − sφ₂`.
    pub fn first_margin(&self) -> f64 {
        self.phi - self.s * self.phi2
    }

    /// `φ − sφ₂ + (b² − s²)φ₂₂`.
    pub fn second_margin(&self) -> f64 {
        self.first_margin() + (self.b2 - self.s * self.s) * self.phi22
    }
}

/// Region on which a profile is meant to be evaluated: `b² ∈ [b2_min, b2_max]`,
/// `|s| ≤ b`. Grids additionally stay within `|s| ≤ s_fraction · b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiDomain {
    pub b2_min: f64,
    pub b2_max: f64,
    pub s_fraction: f64,
}

impl Default for PhiDomain {
    fn default() -> Self {
        PhiDomain {
            b2_min: 0.05,
            b2_max: 0.81,
            s_fraction: 0.95,
        }
    }
}

impl PhiDomain {
    pub fn contains(&self, b2: f64, s: f64) -> bool {
        b2 >= self.b2_min && b2 <= self.b2_max && s.abs() <= b2.sqrt() * (1.0 + 1e-12)
    }

    pub fn contains_b2(&self, b2: f64) -> bool {
        b2 >= self.b2_min && b2 <= self.b2_max
    }

    /// Midpoint of the `b²` range.
    pub fn b2_mid(&self) -> f64 {
        0.5 * (self.b2_min + self.b2_max)
    }

    /// `nb × ns` grid: `b²` evenly spaced over the range, `s` evenly spaced over
    /// `[−s_fraction·b, s_fraction·b]`.
    pub fn grid(&self, nb: usize, ns: usize) -> Vec<(f64, f64)> {
        let lin = |lo: f64, hi: f64, k: usize, m: usize| {
            if m == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (m - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(nb * ns);
        for i in 0..nb {
            let b2 = lin(self.b2_min, self.b2_max, i, nb);
            let smax = self.s_fraction * b2.sqrt();
            for j in 0..ns {
                pts.push((b2, lin(-smax, smax, j, ns)));
            }
        }
        pts
    }
}

/// A profile `φ(b², s)`.
pub trait PhiModel: Send + Sync {
    fn name(&self) -> String;

    fn domain(&self) -> PhiDomain;

    /// `φ` on jets; the layout of `b2` and `s` is shared.
    fn eval_jet(&self, b2: &Jet, s: &Jet) -> Result<Jet>;

    fn value(&self, b2: f64, s: f64) -> Result<f64> {
        let l = Layout::scalar();
        Ok(self.eval_jet(&Jet::constant(&l, b2), &Jet::constant(&l, s))?.value())
    }

    fn partials(&self, b2: f64, s: f64) -> Result<PhiPartials> {
        let l = Layout::uniform(2, 2)?;
        let j = self.eval_jet(&Jet::variable(&l, b2, 0), &Jet::variable(&l, s, 1))?;
        Ok(PhiPartials {
            b2,
            s,
            phi: j.value(),
            phi1: j.partial(&[0]),
            phi2: j.partial(&[1]),
            phi12: j.partial(&[0, 1]),
            phi22: j.partial(&[1, 1]),
        })
    }
}

/// Closed-form profile: an expression in `(b², s)` = `(Var(0), Var(1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprPhi {
    pub name: String,
    pub expr: Expr,
    pub domain: PhiDomain,
}

impl ExprPhi {
    pub fn new(name: impl Into<String>, expr: Expr, domain: PhiDomain) -> ExprPhi {
        ExprPhi {
            name: name.into(),
            expr,
            domain,
        }
    }

    /// `φ + amplitude · s³`, which breaks the Douglas PDE while keeping positivity for
    /// small amplitudes.
    pub fn perturbed(&self, amplitude: f64) -> ExprPhi {
        ExprPhi {
            name: format!("perturbed-{}", self.name),
            expr: self.expr.clone() + amplitude * Expr::var(1).pow(3.0),
            domain: self.domain,
        }
    }
}

impl PhiModel for ExprPhi {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn domain(&self) -> PhiDomain {
        self.domain
    }

    fn eval_jet(&self, b2: &Jet, s: &Jet) -> Result<Jet> {
        Ok(self.expr.eval_jet(&[b2.clone(), s.clone()])?)
    }

    fn value(&self, b2: f64, s: f64) -> Result<f64> {
        Ok(self.expr.eval(&[b2, s])?)
    }
}

/// `(c, μ, ν)` as functions of `b²` (expressions in `Var(0)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    pub c: Expr,
    pub mu: Expr,
    pub nu: Expr,
}

/// `(c, μ, ν)` evaluated at one `b²`, with first derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeParamValues {
    pub c: f64,
    pub mu: f64,
    pub nu: f64,
    pub dc: f64,
    pub dmu: f64,
    pub dnu: f64,
}

impl PdeParams {
    pub fn new(c: Expr, mu: Expr, nu: Expr) -> PdeParams {
        PdeParams { c, mu, nu }
    }

    /// `c = 1, μ = ν = 0`.
    pub fn randers_type() -> PdeParams {
        PdeParams::constant(1.0, 0.0, 0.0)
    }

    pub fn constant(c: f64, mu: f64, nu: f64) -> PdeParams {
        PdeParams::new(Expr::Const(c), Expr::Const(mu), Expr::Const(nu))
    }

    pub fn at(&self, b2: f64) -> Result<PdeParamValues> {
        let l = Layout::uniform(1, 1)?;
        let v = [Jet::variable(&l, b2, 0)];
        let c = self.c.eval_jet(&v)?;
        let mu = self.mu.eval_jet(&v)?;
        let nu = self.nu.eval_jet(&v)?;
        Ok(PdeParamValues {
            c: c.value(),
            mu: mu.value(),
            nu: nu.value(),
            dc: c.partial(&[0]),
            dmu: mu.partial(&[0]),
            dnu: nu.partial(&[0]),
        })
    }
}

/// `Q, Θ, Ψ, R, Π, Ω, Ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxQuantities {
    pub q: f64,
    pub theta: f64,
    pub psi: f64,
    pub r: f64,
    pub pi: f64,
    pub omega: f64,
    pub xi: f64,
}

pub fn aux_from_partials(p: &PhiPartials) -> Result<AuxQuantities> {
    let (b2, s) = (p.b2, p.s);
    let m1 = p.first_margin();
    let m2 = p.second_margin();
    if !(m1 > 0.0) {
        return Err(Error::Positivity {
            condition: 1,
            margin: m1,
            b2,
            s,
        });
    }
    if !(m2 > 0.0) {
        return Err(Error::Positivity {
            condition: 2,
            margin: m2,
            b2,
            s,
        });
    }
    if !(p.phi > 0.0) {
        return Err(Error::Inadmissible(format!("φ({b2}, {s}) = {} ≤ 0", p.phi)));
    }
    let q = p.phi2 / m1;
    let theta = (m1 * p.phi2 - s * p.phi * p.phi22) / (2.0 * p.phi * m2);
    let psi = p.phi22 / (2.0 * m2);
    let r = p.phi1 / m1;
    let pi = (m1 * p.phi12 - s * p.phi1 * p.phi22) / (m1 * m2);
    let omega = 2.0 * p.phi1 / p.phi - (s * p.phi + (b2 - s * s) * p.phi2) / p.phi * pi;
    let xi = (b2 * (p.phi1 - s * p.phi12) * p.phi2
        + s * (b2 - s * s) * p.phi1 * p.phi22
        + s * m1 * (2.0 * p.phi1 - s * p.phi12))
        / (p.phi * m2);
    Ok(AuxQuantities {
        q,
        theta,
        psi,
        r,
        pi,
        omega,
        xi,
    })
}

pub fn aux_quantities(phi: &dyn PhiModel, b2: f64, s: f64) -> Result<AuxQuantities> {
    aux_from_partials(&phi.partials(b2, s)?)
}

/// Signed residual of the Douglas PDE
/// `{b³[(1−c)s²+cb²] + [(ν−μ)s²−νb²](b²−s²)}φ₂₂ − 2b⁵(φ₁−sφ₁₂) + [(ν−μ)s²−νb²](φ−sφ₂)`.
pub fn pde02_from_partials(p: &PhiPartials, v: &PdeParamValues) -> f64 {
    let (b2, s) = (p.b2, p.s);
    let b = b2.sqrt();
    let b3 = b2 * b;
    let b5 = b3 * b2;
    let s2 = s * s;
    let w = (v.nu - v.mu) * s2 - v.nu * b2;
    (b3 * ((1.0 - v.c) * s2 + v.c * b2) + w * (b2 - s2)) * p.phi22
        - 2.0 * b5 * (p.phi1 - s * p.phi12)
        + w * p.first_margin()
}

pub fn pde02_residual(phi: &dyn PhiModel, params: &PdeParams, b2: f64, s: f64) -> Result<f64> {
    Ok(pde02_from_partials(&phi.partials(b2, s)?, &params.at(b2)?))
}

/// Residual of the spherically symmetric form
/// `[(η+fs²)(b²−s²)−1]φ₂₂ + 2(φ₁−sφ₁₂) + (η+fs²)(φ−sφ₂)`.
pub fn pde02cor_from_partials(p: &PhiPartials, f: f64, eta: f64) -> f64 {
    let (b2, s) = (p.b2, p.s);
    let w = eta + f * s * s;
    (w * (b2 - s * s) - 1.0) * p.phi22 + 2.0 * (p.phi1 - s * p.phi12) + w * p.first_margin()
}

/// Maps `(f, η)` of the spherically symmetric equation onto `(c, μ, ν)`:
/// `c = 1`, `ν = η b³`, `μ = η b³ + f b⁵`. Under this map the general residual equals
/// `−b⁵` times the spherically symmetric one.
pub fn spherical_to_general(f: &Expr, eta: &Expr) -> PdeParams {
    let b3 = Expr::var(0).pow(1.5);
    let b5 = Expr::var(0).pow(2.5);
    PdeParams {
        c: Expr::Const(1.0),
        mu: eta.clone() * b3.clone() + f.clone() * b5,
        nu: eta.clone() * b3,
    }
}

/// Left side of `([(1−c)s²+cb²]φ₂₂ − 2b²(φ₁−sφ₁₂)) / (φ−sφ₂+(b²−s²)φ₂₂)` and the value
/// `(νb² − (ν−μ)s²)/b³` it must equal whenever the PDE holds.
pub fn pde_ratio_pair(p: &PhiPartials, v: &PdeParamValues) -> (f64, f64) {
    let (b2, s) = (p.b2, p.s);
    let s2 = s * s;
    let lhs = (((1.0 - v.c) * s2 + v.c * b2) * p.phi22 - 2.0 * b2 * (p.phi1 - s * p.phi12))
        / p.second_margin();
    let rhs = (v.nu * b2 - (v.nu - v.mu) * s2) / (b2 * b2.sqrt());
    (lhs, rhs)
}

/// Which positivity conditions apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositivityMode {
    /// Both `φ−sφ₂ > 0` and `φ−sφ₂+(b²−s²)φ₂₂ > 0` (dimension ≥ 3).
    Full,
    /// Only the second condition (dimension 2).
    Planar,
}

impl PositivityMode {
    pub fn for_dimension(n: usize) -> PositivityMode {
        if n >= 3 {
            PositivityMode::Full
        } else {
            PositivityMode::Planar
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityPoint {
    pub b2: f64,
    pub s: f64,
    pub first: f64,
    pub second: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub points: Vec<PositivityPoint>,
    pub min_margin: f64,
    pub all_pass: bool,
}

pub fn positivity_check(
    phi: &dyn PhiModel,
    grid: &[(f64, f64)],
    mode: PositivityMode,
) -> Result<PositivityReport> {
    let mut points = Vec::with_capacity(grid.len());
    let mut min_margin = f64::INFINITY;
    for &(b2, s) in grid {
        let p = phi.partials(b2, s)?;
        let (first, second) = (p.first_margin(), p.second_margin());
        let relevant = match mode {
            PositivityMode::Full => first.min(second).min(p.phi),
            PositivityMode::Planar => second.min(p.phi),
        };
        min_margin = min_margin.min(relevant);
        points.push(PositivityPoint {
            b2,
            s,
            first,
            second,
            pass: relevant > 0.0,
        });
    }
    let all_pass = points.iter().all(|p| p.pass);
    Ok(PositivityReport {
        points,
        min_margin,
        all_pass,
    })
}

/// Outcome of testing whether `Q = ι₁ s` with `ι₁` independent of `s`, in which case
/// `φ = ι₂ √(1 + ι₁ s²)` and the metric is Riemannian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannianTypeVerdict {
    pub riemannian_type: bool,
    pub iota1: f64,
    pub iota2: f64,
    pub deviation: f64,
}

pub fn lemma22_reduction(phi: &dyn PhiModel, b2: f64, samples: &[f64]) -> Result<RiemannianTypeVerdict> {
    let ratios: Vec<f64> = samples
        .iter()
        .filter(|s| s.abs() > 1e-8)
        .map(|&s| aux_quantities(phi, b2, s).map(|a| a.q / s))
        .collect::<Result<_>>()?;
    if ratios.len() < 2 {
        return Err(Error::Parameter("need at least two nonzero s samples".into()));
    }
    let iota1 = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let deviation = ratios.iter().map(|r| (r - iota1).abs()).fold(0.0, f64::max);
    let iota2 = phi.value(b2, 0.0)?;
    Ok(RiemannianTypeVerdict {
        riemannian_type: deviation <= 1e-9 * iota1.abs().max(1.0),
        iota1,
        iota2,
        deviation,
    })
}
