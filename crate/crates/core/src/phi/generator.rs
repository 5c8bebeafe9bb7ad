//! Profiles built by quadrature from the general solution of the Douglas PDE, and from
//! a prescribed `Ψ = ι₃ + ι₄ s²/(b²−s²)`.
//!
//! Both have the shape `φ = s{h(b²) − ∫_{s₀}^{s} g(b², t)/t² dt}` with `g` even in `t`,
//! so `φ − sφ₂ = g(b², s)`. The `1/t²` pole is removed analytically:
//!
//! ```text
//! φ   = s·h + g(0) − s·g(0)/s₀ + s·∫_s^{s₀} ρ(t) dt,   ρ(t) = (g(t) − g(0))/t²
//! φ₂  = h − g(0)/s₀ + ∫_s^{s₀} ρ(t) dt − s·ρ(s)
//! φ₂₂ = −g′(s)/s = −2·∂g/∂(t²)
//! ```
//!
//! which is regular across `s = 0`. `b²`-partials use Richardson-extrapolated central
//! differences.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PdeParams, PhiDomain, PhiModel, PhiPartials, PositivityPoint, PositivityReport};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jets::{Jet, Layout};
use crate::quadrature::{integrate, QuadOptions};

/// Integration constants of the `b²`-antiderivatives, fixed by anchoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Anchors {
    /// Lower limit of every `b²` integral; `None` uses the domain midpoint.
    pub b2: Option<f64>,
    /// Value of `e^{∫((1−c)b+μ)/b³ db²}` at the anchor.
    pub exp_scale: f64,
    /// Value of `∫(ν−μ)/b⁵ e^{…} db²` at the anchor.
    pub inner_offset: f64,
    /// Value of `ξ` at the anchor.
    pub xi_scale: f64,
    /// `s₀ = s_fraction · b`.
    pub s_fraction: f64,
}

impl Default for Anchors {
    fn default() -> Self {
        Anchors {
            b2: None,
            exp_scale: 1.0,
            inner_offset: 0.0,
            xi_scale: 1.0,
            s_fraction: 0.5,
        }
    }
}

/// Inputs to the general solution: `Φ(ζ)` (expression in `Var(0) = ζ`), `h(b²)`,
/// `(c, μ, ν)` and the anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub big_phi: Expr,
    pub h: Expr,
    pub params: PdeParams,
    #[serde(default)]
    pub anchors: Anchors,
    #[serde(default)]
    pub domain: PhiDomain,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-11
}

/// `b²`-dependent factors of the solution at one `b²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialFactors {
    /// `e^{∫((1−c)b+μ)/b³ db²}`.
    pub exp_factor: f64,
    /// `∫(ν−μ)/b⁵ e^{…} db²`.
    pub inner: f64,
    /// `ξ = e^{∫(1−c)/(2b²) db²}`.
    pub xi: f64,
}

impl GeneratorSpec {
    pub fn new(big_phi: Expr, h: Expr, params: PdeParams) -> GeneratorSpec {
        GeneratorSpec {
            big_phi,
            h,
            params,
            anchors: Anchors::default(),
            domain: PhiDomain::default(),
            tolerance: default_tolerance(),
        }
    }

    pub fn anchor_b2(&self) -> f64 {
        self.anchors.b2.unwrap_or_else(|| self.domain.b2_mid())
    }

    fn quad(&self) -> QuadOptions {
        QuadOptions {
            abs_tol: self.tolerance,
            ..QuadOptions::default()
        }
    }

    fn log_exp_factor(&self, b2: f64) -> Result<f64> {
        let p = &self.params;
        let r = integrate(
            |t| {
                let c = p.c.eval(&[t])?;
                let mu = p.mu.eval(&[t])?;
                Ok(((1.0 - c) * t.sqrt() + mu) / t.powf(1.5))
            },
            self.anchor_b2(),
            b2,
            &self.quad(),
        )?;
        Ok(r.value)
    }

    pub fn radial(&self, b2: f64) -> Result<RadialFactors> {
        if !(b2 > 0.0) {
            return Err(Error::Inadmissible(format!("b² = {b2}")));
        }
        let p = &self.params;
        let exp_factor = self.anchors.exp_scale * self.log_exp_factor(b2)?.exp();
        let inner = self.anchors.inner_offset
            + integrate(
                |t| {
                    let w = p.nu.eval(&[t])? - p.mu.eval(&[t])?;
                    if w == 0.0 {
                        return Ok(0.0);
                    }
                    let e = self.anchors.exp_scale * self.log_exp_factor(t)?.exp();
                    Ok(w / t.powf(2.5) * e)
                },
                self.anchor_b2(),
                b2,
                &self.quad(),
            )?
            .value;
        let xi_log = integrate(
            |t| Ok((1.0 - p.c.eval(&[t])?) / (2.0 * t)),
            self.anchor_b2(),
            b2,
            &self.quad(),
        )?
        .value;
        Ok(RadialFactors {
            exp_factor,
            inner,
            xi: self.anchors.xi_scale * xi_log.exp(),
        })
    }

    /// `Φ(ζ)·ξ/√(b²−s²)`, the value `φ − sφ₂` must take.
    pub fn margin_target(&self, b2: f64, s: f64) -> Result<f64> {
        let rf = self.radial(b2)?;
        let z = zeta_from(&rf, b2, s)?;
        Ok(self.big_phi.eval(&[z])? * rf.xi / (b2 - s * s).sqrt())
    }
}

fn zeta_from(rf: &RadialFactors, b2: f64, s: f64) -> Result<f64> {
    let w = b2 - s * s;
    let den = rf.exp_factor + w * rf.inner;
    if den.abs() < 1e-300 {
        return Err(Error::ZetaDenominator { b2, s });
    }
    Ok(w / den)
}

/// `ζ(b², s) = (b²−s²)/(e^{∫…} + (b²−s²)∫…)` with anchored antiderivatives.
pub fn zeta(spec: &GeneratorSpec, b2: f64, s: f64) -> Result<f64> {
    zeta_from(&spec.radial(b2)?, b2, s)
}

/// Fixed-`b²` view of an even kernel: `g` as a function of `u = t²`, plus `h(b²)`.
struct Slice {
    b2: f64,
    h: f64,
    g: Box<dyn Fn(&Jet) -> Result<Jet> + Send + Sync>,
}

const SMALL_U: f64 = 1e-3;

impl Slice {
    fn g_value(&self, u: f64) -> Result<f64> {
        Ok((self.g)(&Jet::constant(&Layout::scalar(), u))?.value())
    }

    fn g_taylor_at_zero(&self) -> Result<Jet> {
        (self.g)(&Jet::variable(&Layout::uniform(1, 4)?, 0.0, 0))
    }

    /// `(g(t) − g(0))/t²` as a function of `t`.
    fn rho<'a>(&'a self, g0: f64, taylor: &'a Jet) -> impl Fn(f64) -> Result<f64> + 'a {
        move |t: f64| {
            let u = t * t;
            if u < SMALL_U * self.b2 {
                let c = taylor.coeffs();
                Ok(c[1] + u * (c[2] + u * (c[3] + u * c[4])))
            } else {
                Ok((self.g_value(u)? - g0) / u)
            }
        }
    }

    /// `(φ, φ₂, φ₂₂)` at `s` with the s-anchor `s₀`.
    fn profile(&self, s: f64, s0: f64, quad: &QuadOptions) -> Result<(f64, f64, f64)> {
        let b = self.b2.sqrt();
        if !(s.abs() < b) {
            return Err(Error::Inadmissible(format!("|s| = {} ≥ b = {b}", s.abs())));
        }
        let taylor = self.g_taylor_at_zero()?;
        let g0 = taylor.value();
        let rho = self.rho(g0, &taylor);
        let j = integrate(&rho, s, s0, quad)?.value;
        let phi = s * self.h + g0 - s * g0 / s0 + s * j;
        let phi2 = self.h - g0 / s0 + j - s * rho(s)?;
        let gu = (self.g)(&Jet::variable(&Layout::uniform(1, 1)?, s * s, 0))?;
        let phi22 = -2.0 * gu.partial(&[0]);
        Ok((phi, phi2, phi22))
    }
}

/// Shared evaluation for kernel-defined profiles.
trait KernelSource: Send + Sync {
    fn slice(&self, b2: f64) -> Result<Slice>;
    fn s_fraction(&self) -> f64;
    fn quad(&self) -> QuadOptions;
}

fn kernel_value(src: &dyn KernelSource, b2: f64, s: f64) -> Result<f64> {
    let sl = src.slice(b2)?;
    Ok(sl.profile(s, src.s_fraction() * b2.sqrt(), &src.quad())?.0)
}

fn kernel_partials(src: &dyn KernelSource, b2: f64, s: f64) -> Result<PhiPartials> {
    let at = |bb: f64| -> Result<(f64, f64, f64)> {
        let sl = src.slice(bb)?;
        sl.profile(s, src.s_fraction() * bb.sqrt(), &src.quad())
    };
    let (phi, phi2, phi22) = at(b2)?;
    let h = (1e-4 * b2).max(1e-5);
    let central = |step: f64| -> Result<(f64, f64)> {
        let (p_hi, p2_hi, _) = at(b2 + step)?;
        let (p_lo, p2_lo, _) = at(b2 - step)?;
        Ok(((p_hi - p_lo) / (2.0 * step), (p2_hi - p2_lo) / (2.0 * step)))
    };
    let (d1, d12) = central(h)?;
    let (e1, e12) = central(0.5 * h)?;
    Ok(PhiPartials {
        b2,
        s,
        phi,
        phi1: (4.0 * e1 - d1) / 3.0,
        phi2,
        phi12: (4.0 * e12 - d12) / 3.0,
        phi22,
    })
}

fn scalar_only(name: &str, b2: &Jet, s: &Jet, v: impl FnOnce(f64, f64) -> Result<f64>) -> Result<Jet> {
    if b2.layout().num_vars() > 0 || s.layout().num_vars() > 0 {
        return Err(Error::NotJetEvaluable(name.to_string()));
    }
    Ok(b2.constant_like(v(b2.value(), s.value())?))
}

/// Profile from the general solution `φ = s{h − ξ∫Φ(ζ)/(s²√(b²−s²)) ds}`.
#[derive(Clone)]
pub struct GeneratorPhi {
    pub name: String,
    pub spec: Arc<GeneratorSpec>,
}

impl GeneratorPhi {
    pub fn new(name: impl Into<String>, spec: GeneratorSpec) -> GeneratorPhi {
        GeneratorPhi {
            name: name.into(),
            spec: Arc::new(spec),
        }
    }

    /// Checks `Φ/√(b²−s²) > 0` and (dimension ≥ 3) `Φ′√(b²−s²) > 0` on a grid; in
    /// dimension 2 only the second.
    pub fn positivity(&self, grid: &[(f64, f64)], full: bool) -> Result<PositivityReport> {
        let l = Layout::uniform(1, 1)?;
        let mut points = Vec::with_capacity(grid.len());
        let mut min_margin = f64::INFINITY;
        for &(b2, s) in grid {
            let z = zeta(&self.spec, b2, s)?;
            let big = self.spec.big_phi.eval_jet(&[Jet::variable(&l, z, 0)])?;
            let root = (b2 - s * s).sqrt();
            let first = big.value() / root;
            let second = big.partial(&[0]) * root;
            let m = if full { first.min(second) } else { second };
            min_margin = min_margin.min(m);
            points.push(PositivityPoint {
                b2,
                s,
                first,
                second,
                pass: m > 0.0,
            });
        }
        let all_pass = points.iter().all(|p| p.pass);
        Ok(PositivityReport {
            points,
            min_margin,
            all_pass,
        })
    }
}

impl KernelSource for GeneratorPhi {
    fn slice(&self, b2: f64) -> Result<Slice> {
        let spec = self.spec.clone();
        let rf = spec.radial(b2)?;
        let h = spec.h.eval(&[b2])?;
        Ok(Slice {
            b2,
            h,
            g: Box::new(move |u: &Jet| {
                let w = u.constant_like(b2) - u.clone();
                let den = w.clone() * rf.inner + rf.exp_factor;
                if den.value().abs() < 1e-300 {
                    return Err(Error::ZetaDenominator { b2, s: u.value().sqrt() });
                }
                let z = w.checked_div(&den)?;
                let big = spec.big_phi.eval_jet(&[z])?;
                Ok(big.checked_div(&w.checked_sqrt()?)? * rf.xi)
            }),
        })
    }
    fn s_fraction(&self) -> f64 {
        self.spec.anchors.s_fraction
    }
    fn quad(&self) -> QuadOptions {
        self.spec.quad()
    }
}

impl PhiModel for GeneratorPhi {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn domain(&self) -> PhiDomain {
        self.spec.domain
    }
    fn eval_jet(&self, b2: &Jet, s: &Jet) -> Result<Jet> {
        scalar_only(&self.name, b2, s, |b, sv| kernel_value(self, b, sv))
    }
    fn value(&self, b2: f64, s: f64) -> Result<f64> {
        kernel_value(self, b2, s)
    }
    fn partials(&self, b2: f64, s: f64) -> Result<PhiPartials> {
        kernel_partials(self, b2, s)
    }
}

/// Profile whose `Ψ` equals `ι₃ + ι₄ s²/(b²−s²)`:
/// `φ = s{ι₆ − ∫ ι₅ (b²−s²)^{−b²ι₄/(2b²ι₄−1)} |2(ι₄−ι₃)s² + 2ι₃b² − 1|^{1/(2(2b²ι₄−1))} / s² ds}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma23Phi {
    pub iota3: Expr,
    pub iota4: Expr,
    pub iota5: Expr,
    pub iota6: Expr,
    #[serde(default)]
    pub domain: PhiDomain,
    #[serde(default = "default_s_fraction")]
    pub s_fraction: f64,
}

fn default_s_fraction() -> f64 {
    0.5
}

impl Lemma23Phi {
    pub fn new(iota3: Expr, iota4: Expr, iota5: Expr, iota6: Expr) -> Lemma23Phi {
        Lemma23Phi {
            iota3,
            iota4,
            iota5,
            iota6,
            domain: PhiDomain::default(),
            s_fraction: default_s_fraction(),
        }
    }

    /// `ι₃ + ι₄ s²/(b²−s²)`.
    pub fn target_psi(&self, b2: f64, s: f64) -> Result<f64> {
        let i3 = self.iota3.eval(&[b2])?;
        let i4 = self.iota4.eval(&[b2])?;
        Ok(i3 + i4 * s * s / (b2 - s * s))
    }
}

impl KernelSource for Lemma23Phi {
    fn slice(&self, b2: f64) -> Result<Slice> {
        let i3 = self.iota3.eval(&[b2])?;
        let i4 = self.iota4.eval(&[b2])?;
        let i5 = self.iota5.eval(&[b2])?;
        let i6 = self.iota6.eval(&[b2])?;
        let p = 2.0 * b2 * i4 - 1.0;
        if p.abs() < 1e-12 {
            return Err(Error::Parameter(format!(
                "exponent singularity 2b²ι₄ = 1 at b² = {b2}"
            )));
        }
        let e1 = -b2 * i4 / p;
        let e2 = 1.0 / (2.0 * p);
        Ok(Slice {
            b2,
            h: i6,
            g: Box::new(move |u: &Jet| {
                let w = u.constant_like(b2) - u.clone();
                let bracket = u.clone() * (2.0 * (i4 - i3)) + (2.0 * i3 * b2 - 1.0);
                // the sign of the bracket is absorbed into ι₅
                let bracket = if bracket.value() < 0.0 { -bracket } else { bracket };
                Ok(w.checked_powf(e1)? * bracket.checked_powf(e2)? * i5)
            }),
        })
    }
    fn s_fraction(&self) -> f64 {
        self.s_fraction
    }
    fn quad(&self) -> QuadOptions {
        QuadOptions::default()
    }
}

impl PhiModel for Lemma23Phi {
    fn name(&self) -> String {
        "lem23".into()
    }
    fn domain(&self) -> PhiDomain {
        self.domain
    }
    fn eval_jet(&self, b2: &Jet, s: &Jet) -> Result<Jet> {
        scalar_only("lem23", b2, s, |b, sv| kernel_value(self, b, sv))
    }
    fn value(&self, b2: f64, s: f64) -> Result<f64> {
        kernel_value(self, b2, s)
    }
    fn partials(&self, b2: f64, s: f64) -> Result<PhiPartials> {
        kernel_partials(self, b2, s)
    }
}
