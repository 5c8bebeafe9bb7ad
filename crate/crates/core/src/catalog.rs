//! Named, parameterized metrics and profiles, plus the `catalog:` selector grammar.
//!
//! Selectors join entry tokens with `+` in any order, e.g. `catalog:ex72+ex63c0` or
//! `catalog:ex71(delta2=0)+ex61(h=0.5)`. A token is an id optionally followed by
//! `(key=value,...)`; vector values separate components with `:` (`a=0.3:0:0`).
//! `perturbed` alone means `perturbed-ex63c0`; `perturbed-<id>(...)` perturbs any
//! closed-form profile, with the parameters passed through to `<id>` except `amplitude`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::finsler::GeneralABMetric;
use crate::jets::{Jet, SquareMatrix};
use crate::phi::{ExprPhi, GeneratorPhi, GeneratorSpec, Lemma23Phi, PdeParams, PhiDomain, PhiModel};
use crate::riemann::{OneForm, RiemannianMetric};

fn one() -> f64 {
    1.0
}
fn ex71_delta2_default() -> f64 {
    0.1
}
fn zero_expr() -> Expr {
    Expr::Const(0.0)
}
fn ex63_c_default() -> f64 {
    0.5
}
fn lem22_iota1_default() -> f64 {
    2.0
}
fn lem23_iota3() -> Expr {
    Expr::Const(0.1)
}
fn lem23_iota4() -> Expr {
    Expr::Const(0.2)
}
fn lem23_iota5() -> Expr {
    Expr::Const(1.0)
}
fn lem23_iota6() -> Expr {
    2.0 * Expr::var(0).pow(-0.5)
}
fn perturbed_base_default() -> Box<PhiSpec> {
    Box::new(PhiSpec::Ex63c0 { h: zero_expr() })
}
fn perturbation_default() -> f64 {
    0.1
}
fn custom_name() -> String {
    "custom".into()
}

/// Serializable description of an `(α, β)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase", deny_unknown_fields)]
pub enum AlphaBetaSpec {
    /// Constant-curvature `α` with the conformal-then-rescaled `β`.
    Ex71 {
        #[serde(default = "one")]
        kappa: f64,
        #[serde(default = "one")]
        delta1: f64,
        #[serde(default = "ex71_delta2_default")]
        delta2: f64,
        /// Defaults to `(0.3, 0, …, 0)`.
        #[serde(default)]
        a: Option<Vec<f64>>,
    },
    /// `α = |y|/(2|x|)`, `β = 2ε e^{−|x|²}⟨x, y⟩`.
    Ex72 {
        #[serde(default = "one")]
        epsilon: f64,
    },
    /// `α = |y|/(1+|x|²)`, `β = (1+|x|²)/(1−|x|²)⟨x, y⟩`.
    Ex73,
    /// `α = |y|`, `β = ⟨x, y⟩`.
    Sphsym,
    /// `α = |y|` with a constant 1-form; defaults to `(0.3, 0.2, 0.1, 0.05, …)`.
    Flat {
        #[serde(default)]
        b: Option<Vec<f64>>,
    },
    /// `a_ij` and `b_i` as expressions in `x` (`Var(i) = xᵢ`), sampled in `[−w, w]ⁿ`.
    Custom {
        metric: Vec<Vec<Expr>>,
        form: Vec<Expr>,
        #[serde(default = "one")]
        half_width: f64,
    },
}

/// Serializable description of a profile `φ(b², s)`; `h` and `ι`'s are expressions in
/// `b²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhiSpec {
    /// `1 + h s`.
    Ex61 {
        #[serde(default = "zero_expr")]
        h: Expr,
    },
    /// `h s + √(1−b²+s²)/(1−b²)`.
    Ex62 {
        #[serde(default = "zero_expr")]
        h: Expr,
    },
    /// `1 + b^{2c} + h s + b^{2(c−1)} s²` for constant `c`.
    Ex63 {
        #[serde(default = "ex63_c_default")]
        c: f64,
        #[serde(default = "zero_expr")]
        h: Expr,
    },
    /// `2 + h s + s²/b²`.
    Ex63c0 {
        #[serde(default = "zero_expr")]
        h: Expr,
    },
    /// `h s + [(1+b²)(1+b⁴−b²s²) + s²(1−b²)]/(1+b⁴)² · √((1−b²)e^{b²}/(1+b⁴−b²s²))`.
    Ex64 {
        #[serde(default = "zero_expr")]
        h: Expr,
    },
    /// `ι₂ √(1 + ι₁ s²)`.
    Lem22 {
        #[serde(default = "lem22_iota1_default")]
        iota1: f64,
        #[serde(default = "one")]
        iota2: f64,
    },
    /// Quadrature profile with `Ψ = ι₃ + ι₄ s²/(b²−s²)`.
    Lem23 {
        #[serde(default = "lem23_iota3")]
        iota3: Expr,
        #[serde(default = "lem23_iota4")]
        iota4: Expr,
        #[serde(default = "lem23_iota5")]
        iota5: Expr,
        #[serde(default = "lem23_iota6")]
        iota6: Expr,
    },
    /// `φ ≡ 1`.
    One,
    /// `base + amplitude · s³`.
    Perturbed {
        #[serde(default = "perturbed_base_default")]
        base: Box<PhiSpec>,
        #[serde(default = "perturbation_default")]
        amplitude: f64,
    },
    /// Arbitrary closed form in `(b², s) = (Var(0), Var(1))`.
    Custom {
        #[serde(default = "custom_name")]
        name: String,
        expr: Expr,
        #[serde(default)]
        params: Option<PdeParams>,
        #[serde(default)]
        domain: PhiDomain,
    },
    /// Profile produced by the general-solution generator.
    Generator { spec: GeneratorSpec },
}

/// `(k, c)` and the linear coefficients `(λ, τ) = (kcb², k(1−c))` an entry is known to
/// satisfy at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedFit {
    pub b2: f64,
    pub k: f64,
    pub c: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl ExpectedFit {
    fn from_k_c(b2: f64, k: f64, c: f64) -> ExpectedFit {
        ExpectedFit {
            b2,
            k,
            c,
            lambda: k * c * b2,
            tau: k * (1.0 - c),
        }
    }

    fn from_lambda_tau(b2: f64, lambda: f64, tau: f64) -> ExpectedFit {
        let k = lambda / b2 + tau;
        ExpectedFit {
            b2,
            k,
            c: lambda / (b2 * k),
            lambda,
            tau,
        }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn jet_norm2(x: &[Jet]) -> Jet {
    let mut acc = x[0].constant_like(0.0);
    for xi in x {
        acc += &(xi * xi);
    }
    acc
}

fn euclidean_conformal(n: usize, factor: impl Fn(&Jet) -> Result<Jet> + Send + Sync + 'static) -> ConformalMetric {
    ConformalMetric {
        n,
        factor: Arc::new(factor),
    }
}

/// `a_ij = f(|x|²) δ_ij`.
#[derive(Clone)]
struct ConformalMetric {
    n: usize,
    #[allow(clippy::type_complexity)]
    factor: Arc<dyn Fn(&Jet) -> Result<Jet> + Send + Sync>,
}

impl RiemannianMetric for ConformalMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>> {
        let f = (self.factor)(&jet_norm2(x))?;
        let zero = f.constant_like(0.0);
        Ok(SquareMatrix::from_fn(self.n, |i, j| if i == j { f.clone() } else { zero.clone() }))
    }
}

/// `a_ij = [(1+κ|x|²)δ_ij − κ xᵢxⱼ]/(1+κ|x|²)²`, the projectively flat metric of constant
/// sectional curvature `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantCurvature {
    pub n: usize,
    pub kappa: f64,
}

pub fn constant_curvature_alpha(n: usize, kappa: f64) -> ConstantCurvature {
    ConstantCurvature { n, kappa }
}

impl RiemannianMetric for ConstantCurvature {
    fn dim(&self) -> usize {
        self.n
    }

    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>> {
        let u = jet_norm2(x) * self.kappa + 1.0;
        if !(u.value() > 0.0) {
            return Err(Error::Inadmissible(format!("1 + κ|x|² = {}", u.value())));
        }
        let inv_u2 = (&u * &u).checked_recip()?;
        Ok(SquareMatrix::from_fn(self.n, |i, j| {
            let mut e = (&x[i] * &x[j]).scale(-self.kappa);
            if i == j {
                e += &u;
            }
            &e * &inv_u2
        }))
    }

    fn admissible(&self, x: &[f64]) -> bool {
        1.0 + self.kappa * norm2(x) > 0.0
    }
}

/// The 1-form `b_i = β̃_i √(b̃² − δ₂)/b̃`, where
/// `β̃ = [δ₁⟨x,y⟩ + (1+κ|x|²)⟨a,y⟩ − κ⟨a,x⟩⟨x,y⟩]/(1+κ|x|²)^{3/2}` is conformal for the
/// constant-curvature metric and `b̃² = b² + δ₂` is its squared norm.
#[derive(Debug, Clone, PartialEq)]
struct RescaledConformalForm {
    kappa: f64,
    delta1: f64,
    delta2: f64,
    a: Vec<f64>,
}

impl RescaledConformalForm {
    /// `(β̃_i, b̃², u)` on jets.
    fn tilde(&self, x: &[Jet]) -> Result<(Vec<Jet>, Jet, Jet)> {
        let u = jet_norm2(x) * self.kappa + 1.0;
        let mut ax = x[0].constant_like(0.0);
        for (xi, ai) in x.iter().zip(&self.a) {
            ax += &(xi * *ai);
        }
        let denom = u.checked_powf(1.5)?.checked_recip()?;
        let bt: Vec<Jet> = x
            .iter()
            .zip(&self.a)
            .map(|(xi, &ai)| {
                let num = (xi * self.delta1 + u.clone() * ai) - (&ax * xi).scale(self.kappa);
                &num * &denom
            })
            .collect();
        let mut xb = x[0].constant_like(0.0);
        for (xi, bi) in x.iter().zip(&bt) {
            xb += &(xi * bi);
        }
        let bt2 = &u * &(jet_norm2(&bt) + (&xb * &xb).scale(self.kappa));
        Ok((bt, bt2, u))
    }

    fn tilde_values(&self, x: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
        let l = crate::jets::Layout::scalar();
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(&l, v)).collect();
        let (bt, bt2, u) = self.tilde(&xs)?;
        Ok((bt.iter().map(Jet::value).collect(), bt2.value(), u.value()))
    }

    fn b2(&self, x: &[f64]) -> Option<f64> {
        self.tilde_values(x).ok().map(|(_, bt2, _)| bt2 - self.delta2)
    }
}

impl OneForm for RescaledConformalForm {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        let (bt, bt2, _) = self.tilde(x)?;
        let b2 = bt2.clone() - self.delta2;
        if !(b2.value() > 0.0) {
            return Err(Error::Inadmissible(format!("b̃² − δ₂ = {} ≤ 0", b2.value())));
        }
        let factor = b2.checked_div(&bt2)?.checked_sqrt()?;
        Ok(bt.iter().map(|b| b * &factor).collect())
    }

    fn admissible(&self, x: &[f64]) -> bool {
        self.b2(x).is_some_and(|b2| b2 > 0.0)
    }
}

/// `b_i = f(|x|²) xᵢ`.
#[derive(Clone)]
struct RadialForm {
    #[allow(clippy::type_complexity)]
    factor: Arc<dyn Fn(&Jet) -> Result<Jet> + Send + Sync>,
    admissible: fn(f64) -> bool,
}

impl OneForm for RadialForm {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        let f = (self.factor)(&jet_norm2(x))?;
        Ok(x.iter().map(|xi| xi * &f).collect())
    }

    fn admissible(&self, x: &[f64]) -> bool {
        (self.admissible)(norm2(x))
    }
}

struct ConstantForm(Vec<f64>);

impl OneForm for ConstantForm {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        Ok(self.0.iter().map(|&v| x[0].constant_like(v)).collect())
    }
}

struct ExprMetric {
    n: usize,
    entries: Vec<Vec<Expr>>,
}

impl RiemannianMetric for ExprMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>> {
        let mut data = Vec::with_capacity(self.n * self.n);
        for row in &self.entries {
            for e in row {
                data.push(e.eval_jet(x)?);
            }
        }
        Ok(SquareMatrix::from_rows(self.n, data)?)
    }
    fn admissible(&self, x: &[f64]) -> bool {
        let l = crate::jets::Layout::scalar();
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(&l, v)).collect();
        self.metric(&xs).is_ok_and(|m| m.cholesky().is_ok())
    }
}

struct ExprForm(Vec<Expr>);

impl OneForm for ExprForm {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        self.0.iter().map(|e| Ok(e.eval_jet(x)?)).collect()
    }
    fn admissible(&self, x: &[f64]) -> bool {
        self.0.iter().all(|e| e.eval(x).is_ok_and(f64::is_finite))
    }
}

/// An instantiated `(α, β)` pair.
#[derive(Clone)]
pub struct AlphaBetaEntry {
    pub spec: AlphaBetaSpec,
    pub alpha: Arc<dyn RiemannianMetric>,
    pub beta: Arc<dyn OneForm>,
    /// Samples are drawn from `[−w, w]ⁿ`.
    pub half_width: f64,
    ex71_form: Option<RescaledConformalForm>,
}

impl std::fmt::Debug for AlphaBetaEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlphaBetaEntry").field("spec", &self.spec).finish()
    }
}

fn default_vector(n: usize, head: &[f64], tail: f64) -> Vec<f64> {
    (0..n).map(|i| head.get(i).copied().unwrap_or(tail)).collect()
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Parameter(format!(
            "`{name}` has {} components, dimension is {n}",
            v.len()
        )));
    }
    Ok(())
}

pub fn example71(n: usize, kappa: f64, delta1: f64, delta2: f64, a: Option<Vec<f64>>) -> Result<AlphaBetaEntry> {
    AlphaBetaSpec::Ex71 {
        kappa,
        delta1,
        delta2,
        a,
    }
    .build(n)
}

pub fn example72(n: usize, epsilon: f64) -> Result<AlphaBetaEntry> {
    AlphaBetaSpec::Ex72 { epsilon }.build(n)
}

pub fn example73(n: usize) -> Result<AlphaBetaEntry> {
    AlphaBetaSpec::Ex73.build(n)
}

impl AlphaBetaSpec {
    pub fn id(&self) -> &'static str {
        match self {
            AlphaBetaSpec::Ex71 { .. } => "ex71",
            AlphaBetaSpec::Ex72 { .. } => "ex72",
            AlphaBetaSpec::Ex73 => "ex73",
            AlphaBetaSpec::Sphsym => "sphsym",
            AlphaBetaSpec::Flat { .. } => "flat",
            AlphaBetaSpec::Custom { .. } => "custom",
        }
    }

    pub fn build(&self, n: usize) -> Result<AlphaBetaEntry> {
        if n < 2 {
            return Err(Error::Parameter(format!("dimension {n} < 2")));
        }
        let mut ex71_form = None;
        let (alpha, beta, half_width): (Arc<dyn RiemannianMetric>, Arc<dyn OneForm>, f64) = match self {
            AlphaBetaSpec::Ex71 {
                kappa,
                delta1,
                delta2,
                a,
            } => {
                let a = a.clone().unwrap_or_else(|| default_vector(n, &[0.3], 0.0));
                check_len("a", &a, n)?;
                let form = RescaledConformalForm {
                    kappa: *kappa,
                    delta1: *delta1,
                    delta2: *delta2,
                    a,
                };
                ex71_form = Some(form.clone());
                let w = if *kappa < 0.0 { 0.95 / (n as f64 * -kappa).sqrt() } else { 1.5 };
                (Arc::new(constant_curvature_alpha(n, *kappa)), Arc::new(form), w)
            }
            AlphaBetaSpec::Ex72 { epsilon } => {
                if *epsilon == 0.0 {
                    return Err(Error::Parameter("ε must be nonzero".into()));
                }
                let eps = *epsilon;
                let alpha = euclidean_conformal(n, |t| Ok(t.scale(4.0).checked_recip()?));
                let beta = RadialForm {
                    factor: Arc::new(move |t| Ok(t.scale(-1.0).exp().scale(2.0 * eps))),
                    admissible: |t| t > 0.0 && t < 1.0,
                };
                (Arc::new(AdmissibleMetric(alpha, |t| t > 0.0 && t < 1.0)), Arc::new(beta), 1.0)
            }
            AlphaBetaSpec::Ex73 => {
                let alpha = euclidean_conformal(n, |t| {
                    let u = t.clone() + 1.0;
                    Ok((&u * &u).checked_recip()?)
                });
                let beta = RadialForm {
                    factor: Arc::new(|t| Ok((t.clone() + 1.0).checked_div(&(t.scale(-1.0) + 1.0))?)),
                    admissible: |t| t < 1.0,
                };
                (Arc::new(AdmissibleMetric(alpha, |t| t < 1.0)), Arc::new(beta), 1.0)
            }
            AlphaBetaSpec::Sphsym => {
                let alpha = euclidean_conformal(n, |t| Ok(t.constant_like(1.0)));
                let beta = RadialForm {
                    factor: Arc::new(|t| Ok(t.constant_like(1.0))),
                    admissible: |t| t > 0.0,
                };
                (Arc::new(alpha), Arc::new(beta), 0.9)
            }
            AlphaBetaSpec::Flat { b } => {
                let b = b.clone().unwrap_or_else(|| default_vector(n, &[0.3, 0.2, 0.1], 0.05));
                check_len("b", &b, n)?;
                let alpha = euclidean_conformal(n, |t| Ok(t.constant_like(1.0)));
                (Arc::new(alpha), Arc::new(ConstantForm(b)), 1.0)
            }
            AlphaBetaSpec::Custom {
                metric,
                form,
                half_width,
            } => {
                if metric.len() != n || metric.iter().any(|r| r.len() != n) || form.len() != n {
                    return Err(Error::Parameter(format!(
                        "custom metric must be {n}×{n} with a {n}-component form"
                    )));
                }
                (
                    Arc::new(ExprMetric {
                        n,
                        entries: metric.clone(),
                    }),
                    Arc::new(ExprForm(form.clone())),
                    *half_width,
                )
            }
        };
        Ok(AlphaBetaEntry {
            spec: self.clone(),
            alpha,
            beta,
            half_width,
            ex71_form,
        })
    }
}

/// Largest `|x|²` drawn for ex73.
pub const EX73_SAMPLE_LIMIT: f64 = 0.95;

/// Restricts a metric to `|x|²` satisfying a predicate.
struct AdmissibleMetric(ConformalMetric, fn(f64) -> bool);

impl RiemannianMetric for AdmissibleMetric {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>> {
        self.0.metric(x)
    }
    fn admissible(&self, x: &[f64]) -> bool {
        (self.1)(norm2(x))
    }
}

impl AlphaBetaEntry {
    pub fn id(&self) -> &'static str {
        self.spec.id()
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    pub fn admissible(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.alpha.admissible(x) && self.beta.admissible(x)
    }

    /// Admissible points that random sampling may draw. ex73 stays clear of `|x| = 1`,
    /// where `b²` blows up and the `(λ, τ)` split loses accuracy like `ε·b²`.
    pub fn in_sample_region(&self, x: &[f64]) -> bool {
        self.admissible(x)
            && match self.spec {
                AlphaBetaSpec::Ex73 => norm2(x) <= EX73_SAMPLE_LIMIT,
                _ => true,
            }
    }

    /// `c(b²)` when the entry satisfies `b_{i|j} = kcb²a_ij + k(1−c)b_ib_j` with `c`
    /// depending on `b²` alone. `None` for a parallel form (any `c`) or an unknown `c`.
    pub fn declared_c(&self) -> Option<Expr> {
        match &self.spec {
            AlphaBetaSpec::Ex71 { delta2, .. } => {
                let b2 = Expr::var(0);
                Some(b2.clone() / (b2 + *delta2))
            }
            AlphaBetaSpec::Ex72 { .. } => Some(Expr::Const(0.0)),
            AlphaBetaSpec::Sphsym => Some(Expr::Const(1.0)),
            _ => None,
        }
    }

    /// Whether `β` is parallel with respect to `α`.
    pub fn is_parallel(&self) -> bool {
        matches!(self.spec, AlphaBetaSpec::Flat { .. })
    }

    /// The closed-form `(k, c)` at `x`, where known.
    pub fn expected_fit(&self, x: &[f64]) -> Option<ExpectedFit> {
        let t = norm2(x);
        match &self.spec {
            AlphaBetaSpec::Ex71 { kappa, delta1, delta2, .. } => {
                let form = self.ex71_form.as_ref()?;
                let (_, bt2, u) = form.tilde_values(x).ok()?;
                let b2 = bt2 - delta2;
                let b = b2.sqrt();
                let ax: f64 = x.iter().zip(&form.a).map(|(p, q)| p * q).sum();
                let c = b2 / (delta2 + b2);
                let k = (delta2 + b2) * (delta1 - kappa * ax) / (b2 * b * ((b2 + delta2) * u).sqrt());
                Some(ExpectedFit::from_k_c(b2, k, c))
            }
            AlphaBetaSpec::Ex72 { epsilon } => {
                let b2 = 16.0 * epsilon * epsilon * t * t * (-2.0 * t).exp();
                let k = (1.0 - t) * t.exp() / (epsilon * t);
                Some(ExpectedFit::from_k_c(b2, k, 0.0))
            }
            AlphaBetaSpec::Ex73 => {
                let b2 = (1.0 + t).powi(4) * t / (1.0 - t).powi(2);
                Some(ExpectedFit::from_lambda_tau(
                    b2,
                    (1.0 + t).powi(2),
                    4.0 * (2.0 - t) / (1.0 + t).powi(2),
                ))
            }
            AlphaBetaSpec::Sphsym => Some(ExpectedFit::from_k_c(t, 1.0 / t, 1.0)),
            _ => None,
        }
    }

    /// The closed-form `b_{i|j}` at `x`, where known.
    pub fn expected_covariant(&self, x: &[f64]) -> Option<SquareMatrix<f64>> {
        let n = x.len();
        let t = norm2(x);
        match &self.spec {
            AlphaBetaSpec::Ex71 { kappa, delta1, delta2, .. } => {
                let form = self.ex71_form.as_ref()?;
                let (bt, bt2, u) = form.tilde_values(x).ok()?;
                let b2 = bt2 - delta2;
                let b = b2.sqrt();
                let ax: f64 = x.iter().zip(&form.a).map(|(p, q)| p * q).sum();
                let root = ((b2 + delta2) * u).sqrt();
                let ca = b * (delta1 - kappa * ax) / root;
                let cb = delta2 * (delta1 - kappa * ax) / (b2 * b * root);
                let scale = (b2 / bt2).sqrt();
                let bl: Vec<f64> = bt.iter().map(|v| v * scale).collect();
                let a = constant_curvature_alpha(n, *kappa);
                let am = crate::riemann::metric_at(&a, x).ok()?;
                Some(SquareMatrix::from_fn(n, |i, j| ca * am.get(i, j) + cb * bl[i] * bl[j]))
            }
            AlphaBetaSpec::Ex72 { epsilon } => {
                let f = 4.0 * epsilon * (1.0 - t) / t * (-t).exp();
                Some(SquareMatrix::from_fn(n, |i, j| f * x[i] * x[j]))
            }
            AlphaBetaSpec::Ex73 => {
                let f = 4.0 * (2.0 - t) / (1.0 - t).powi(2);
                Some(SquareMatrix::from_fn(n, |i, j| {
                    f * x[i] * x[j] + if i == j { 1.0 } else { 0.0 }
                }))
            }
            AlphaBetaSpec::Sphsym => Some(SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })),
            AlphaBetaSpec::Flat { .. } => Some(SquareMatrix::from_fn(n, |_, _| 0.0)),
            AlphaBetaSpec::Custom { .. } => None,
        }
    }
}

/// An instantiated profile with the `(c, μ, ν)` it satisfies, if any.
#[derive(Clone)]
pub struct PhiEntry {
    pub spec: PhiSpec,
    pub model: Arc<dyn PhiModel>,
    /// Parameters the profile satisfies the Douglas PDE with (for perturbed profiles,
    /// those of the unperturbed base).
    pub params: Option<PdeParams>,
    /// `false` for deliberately broken profiles.
    pub satisfies_pde: bool,
}

impl std::fmt::Debug for PhiEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhiEntry")
            .field("spec", &self.spec)
            .field("satisfies_pde", &self.satisfies_pde)
            .finish()
    }
}

fn b2e() -> Expr {
    Expr::var(0)
}
fn se() -> Expr {
    Expr::var(1)
}

/// Checks that an expression uses `b²` (`Var(0)`) only.
fn of_b2(e: &Expr) -> Result<Expr> {
    if e.arity() > 1 {
        return Err(Error::Parameter(format!("expected an expression in b² only, got {e:?}")));
    }
    Ok(e.clone())
}

fn ex63_expr(c: f64, h: &Expr) -> Result<Expr> {
    Ok(1.0 + b2e().pow(c) + of_b2(h)? * se() + b2e().pow(c - 1.0) * se().pow(2.0))
}

pub fn phi_catalog(spec: &PhiSpec) -> Result<PhiEntry> {
    spec.build()
}

impl PhiSpec {
    pub fn id(&self) -> String {
        match self {
            PhiSpec::Ex61 { .. } => "ex61".into(),
            PhiSpec::Ex62 { .. } => "ex62".into(),
            PhiSpec::Ex63 { .. } => "ex63".into(),
            PhiSpec::Ex63c0 { .. } => "ex63c0".into(),
            PhiSpec::Ex64 { .. } => "ex64".into(),
            PhiSpec::Lem22 { .. } => "lem22".into(),
            PhiSpec::Lem23 { .. } => "lem23".into(),
            PhiSpec::One => "one".into(),
            PhiSpec::Perturbed { base, .. } => format!("perturbed-{}", base.id()),
            PhiSpec::Custom { name, .. } => name.clone(),
            PhiSpec::Generator { .. } => "generator".into(),
        }
    }

    fn closed_form(&self) -> Result<(Expr, Option<PdeParams>, PhiDomain)> {
        let d = PhiDomain::default();
        let c1 = PdeParams::randers_type();
        Ok(match self {
            PhiSpec::Ex61 { h } => (1.0 + of_b2(h)? * se(), Some(c1), d),
            PhiSpec::Ex62 { h } => (
                of_b2(h)? * se() + (1.0 - b2e() + se().pow(2.0)).sqrt() / (1.0 - b2e()),
                Some(c1),
                d,
            ),
            PhiSpec::Ex63 { c, h } => (ex63_expr(*c, h)?, Some(PdeParams::constant(*c, 0.0, 0.0)), d),
            PhiSpec::Ex63c0 { h } => (ex63_expr(0.0, h)?, Some(PdeParams::constant(0.0, 0.0, 0.0)), d),
            PhiSpec::Ex64 { h } => {
                let (b, s) = (b2e(), se());
                let q = 1.0 + b.clone().pow(2.0) - b.clone() * s.clone().pow(2.0);
                let num = (1.0 + b.clone()) * q.clone() + s.clone().pow(2.0) * (1.0 - b.clone());
                let root = ((1.0 - b.clone()) * b.clone().exp() / q).sqrt();
                let expr = of_b2(h)? * s + num / (1.0 + b.clone().pow(2.0)).pow(2.0) * root;
                let b5 = b.clone().pow(2.5);
                let params = PdeParams::new(
                    1.0 - b.clone(),
                    b5.clone() / (1.0 - b.clone()),
                    2.0 * b5 / (1.0 - b),
                );
                (expr, Some(params), d)
            }
            PhiSpec::Lem22 { iota1, iota2 } => {
                let expr = *iota2 * (1.0 + *iota1 * se().pow(2.0)).sqrt();
                let w = *iota1 * b2e().pow(1.5) / (1.0 + *iota1 * b2e());
                (expr, Some(PdeParams::new(Expr::Const(1.0), w.clone(), w)), d)
            }
            PhiSpec::One => (Expr::Const(1.0) + 0.0 * se(), Some(c1), d),
            PhiSpec::Custom {
                expr,
                params,
                domain,
                ..
            } => (expr.clone(), params.clone(), *domain),
            other => {
                return Err(Error::Parameter(format!(
                    "`{}` has no closed form and cannot be perturbed",
                    other.id()
                )))
            }
        })
    }

    pub fn build(&self) -> Result<PhiEntry> {
        match self {
            PhiSpec::Lem23 {
                iota3,
                iota4,
                iota5,
                iota6,
            } => Ok(PhiEntry {
                spec: self.clone(),
                model: Arc::new(Lemma23Phi::new(
                    of_b2(iota3)?,
                    of_b2(iota4)?,
                    of_b2(iota5)?,
                    of_b2(iota6)?,
                )),
                params: None,
                satisfies_pde: false,
            }),
            PhiSpec::Generator { spec } => Ok(PhiEntry {
                spec: self.clone(),
                model: Arc::new(GeneratorPhi::new("generator", spec.clone())),
                params: Some(spec.params.clone()),
                satisfies_pde: true,
            }),
            PhiSpec::Perturbed { base, amplitude } => {
                let (expr, params, domain) = base.closed_form()?;
                let p = ExprPhi::new(base.id(), expr, domain).perturbed(*amplitude);
                Ok(PhiEntry {
                    spec: self.clone(),
                    model: Arc::new(p),
                    params,
                    satisfies_pde: false,
                })
            }
            _ => {
                let (expr, params, domain) = self.closed_form()?;
                let satisfies_pde = params.is_some();
                Ok(PhiEntry {
                    spec: self.clone(),
                    model: Arc::new(ExprPhi::new(self.id(), expr, domain)),
                    params,
                    satisfies_pde,
                })
            }
        }
    }
}

/// Serializable metric selection: an `(α, β)` pair, a profile, or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_beta: Option<AlphaBetaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSpec>,
}

/// Built form of a [`MetricSpec`].
#[derive(Debug, Clone)]
pub struct Assembled {
    pub alpha_beta: Option<AlphaBetaEntry>,
    pub phi: Option<PhiEntry>,
}

const C_PROBES: [f64; 5] = [0.1, 0.25, 0.4, 0.6, 0.8];

impl MetricSpec {
    pub fn build(&self, n: usize) -> Result<Assembled> {
        Ok(Assembled {
            alpha_beta: self.alpha_beta.as_ref().map(|s| s.build(n)).transpose()?,
            phi: self.phi.as_ref().map(PhiSpec::build).transpose()?,
        })
    }

    /// Canonical selector-style label, `<alpha_beta>+<phi>`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(ab) = &self.alpha_beta {
            parts.push(ab.id().to_string());
        }
        if let Some(p) = &self.phi {
            parts.push(p.id());
        }
        parts.join("+")
    }
}

impl Assembled {
    /// The general `(α, β)`-metric, when both halves are present.
    pub fn metric(&self) -> Option<GeneralABMetric> {
        let ab = self.alpha_beta.as_ref()?;
        let phi = self.phi.as_ref()?;
        let m = GeneralABMetric::new(ab.alpha.clone(), ab.beta.clone(), phi.model.clone());
        Some(match &phi.params {
            Some(p) => m.with_params(p.clone()),
            None => m,
        })
    }

    /// Whether the pair is expected to be of Douglas type: the profile satisfies the PDE
    /// and its `c` matches the `c(b²)` of the `(α, β)` pair at probe values of `b²`, or
    /// `β` is parallel.
    pub fn expected_douglas(&self) -> bool {
        let (Some(ab), Some(phi)) = (&self.alpha_beta, &self.phi) else {
            return false;
        };
        if !phi.satisfies_pde {
            return false;
        }
        if ab.is_parallel() {
            return true;
        }
        let (Some(c_ab), Some(params)) = (ab.declared_c(), &phi.params) else {
            return false;
        };
        C_PROBES.iter().all(|&b2| match (c_ab.eval(&[b2]), params.c.eval(&[b2])) {
            (Ok(u), Ok(v)) => (u - v).abs() <= 1e-12 * (1.0 + u.abs()),
            _ => false,
        })
    }
}

/// Generator inputs `(Φ, h, c, μ, ν, anchors)` that reproduce a closed-form profile up to
/// the integration constants, for the families where `Φ` is known.
pub fn generator_counterpart(spec: &PhiSpec) -> Option<GeneratorSpec> {
    let z = Expr::var(0);
    let (big_phi, h, params, anchor) = match spec {
        PhiSpec::Ex61 { h } => (z.sqrt(), h.clone(), PdeParams::randers_type(), None),
        PhiSpec::Ex62 { h } => ((z.clone() / (1.0 - z)).sqrt(), h.clone(), PdeParams::randers_type(), None),
        PhiSpec::Ex63 { c, h } => (
            (1.0 + z.clone()) * z.sqrt(),
            h.clone(),
            PdeParams::constant(*c, 0.0, 0.0),
            Some(1.0),
        ),
        PhiSpec::Ex63c0 { h } => (
            (1.0 + z.clone()) * z.sqrt(),
            h.clone(),
            PdeParams::constant(0.0, 0.0, 0.0),
            Some(1.0),
        ),
        _ => return None,
    };
    let mut g = GeneratorSpec::new(big_phi, h, params);
    g.anchors.b2 = anchor;
    Some(g)
}

const ALPHA_BETA_IDS: [&str; 5] = ["ex71", "ex72", "ex73", "sphsym", "flat"];
const PHI_IDS: [&str; 8] = ["ex61", "ex62", "ex63", "ex63c0", "ex64", "lem22", "lem23", "one"];

/// Identifiers accepted in selectors.
pub fn known_ids() -> Vec<String> {
    let mut v: Vec<String> = ALPHA_BETA_IDS.iter().chain(&PHI_IDS).map(|s| s.to_string()).collect();
    v.push("perturbed".into());
    v.push("perturbed-<id>".into());
    v
}

fn parse_token(tok: &str) -> Result<(String, BTreeMap<String, String>)> {
    let tok = tok.trim();
    let (id, rest) = match tok.find('(') {
        Some(p) => {
            let inner = tok[p + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Parameter(format!("unbalanced parentheses in `{tok}`")))?;
            (&tok[..p], Some(inner))
        }
        None => (tok, None),
    };
    let mut params = BTreeMap::new();
    if let Some(inner) = rest {
        for kv in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("expected key=value, got `{kv}`")))?;
            if params.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parameter(format!("parameter `{}` given twice", k.trim())));
            }
        }
    }
    if id.is_empty() {
        return Err(Error::Parameter(format!("empty identifier in `{tok}`")));
    }
    Ok((id.trim().to_string(), params))
}

struct Params {
    id: String,
    map: BTreeMap<String, String>,
}

impl Params {
    fn num(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().map_err(|_| {
                Error::Parameter(format!("`{}`: `{key}={v}` is not a number", self.id))
            }),
        }
    }

    fn expr(&mut self, key: &str, default: Expr) -> Result<Expr> {
        Ok(match self.map.contains_key(key) {
            true => Expr::Const(self.num(key, 0.0)?),
            false => default,
        })
    }

    fn vector(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(':')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| {
                        Error::Parameter(format!("`{}`: `{key}={v}` is not a vector", self.id))
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::Parameter(format!("`{}` has no parameter `{k}`", self.id))),
        }
    }
}

fn phi_from_token(id: &str, mut p: Params) -> Result<PhiSpec> {
    let spec = match id {
        "ex61" => PhiSpec::Ex61 { h: p.expr("h", zero_expr())? },
        "ex62" => PhiSpec::Ex62 { h: p.expr("h", zero_expr())? },
        "ex63" => PhiSpec::Ex63 {
            c: p.num("c", ex63_c_default())?,
            h: p.expr("h", zero_expr())?,
        },
        "ex63c0" => PhiSpec::Ex63c0 { h: p.expr("h", zero_expr())? },
        "ex64" => PhiSpec::Ex64 { h: p.expr("h", zero_expr())? },
        "lem22" => PhiSpec::Lem22 {
            iota1: p.num("iota1", lem22_iota1_default())?,
            iota2: p.num("iota2", 1.0)?,
        },
        "lem23" => PhiSpec::Lem23 {
            iota3: p.expr("iota3", lem23_iota3())?,
            iota4: p.expr("iota4", lem23_iota4())?,
            iota5: p.expr("iota5", lem23_iota5())?,
            iota6: p.expr("iota6", lem23_iota6())?,
        },
        "one" => PhiSpec::One,
        "perturbed" => PhiSpec::Perturbed {
            base: perturbed_base_default(),
            amplitude: p.num("amplitude", perturbation_default())?,
        },
        _ => {
            let Some(base) = id.strip_prefix("perturbed-") else {
                return Err(Error::Parameter(format!(
                    "unknown catalog id `{id}` (known: {})",
                    known_ids().join(", ")
                )));
            };
            let amplitude = p.num("amplitude", perturbation_default())?;
            let inner = Params {
                id: base.to_string(),
                map: std::mem::take(&mut p.map),
            };
            let base = phi_from_token(base, inner)?;
            base.closed_form()?;
            PhiSpec::Perturbed {
                base: Box::new(base),
                amplitude,
            }
        }
    };
    p.finish()?;
    Ok(spec)
}

fn alpha_beta_from_token(id: &str, mut p: Params) -> Result<AlphaBetaSpec> {
    let spec = match id {
        "ex71" => AlphaBetaSpec::Ex71 {
            kappa: p.num("kappa", 1.0)?,
            delta1: p.num("delta1", 1.0)?,
            delta2: p.num("delta2", ex71_delta2_default())?,
            a: p.vector("a")?,
        },
        "ex72" => AlphaBetaSpec::Ex72 {
            epsilon: p.num("epsilon", 1.0)?,
        },
        "ex73" => AlphaBetaSpec::Ex73,
        "sphsym" => AlphaBetaSpec::Sphsym,
        "flat" => AlphaBetaSpec::Flat { b: p.vector("b")? },
        _ => unreachable!("caller checks ids"),
    };
    p.finish()?;
    Ok(spec)
}

/// Parses `catalog:<token>+<token>` (the `catalog:` prefix is optional).
pub fn parse_selector(selector: &str) -> Result<MetricSpec> {
    let body = selector.strip_prefix("catalog:").unwrap_or(selector);
    let mut spec = MetricSpec::default();
    // split on '+' outside parentheses
    let mut tokens = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '+' if depth == 0 => {
                tokens.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    tokens.push(&body[start..]);
    for tok in tokens {
        let (id, map) = parse_token(tok)?;
        let p = Params { id: id.clone(), map };
        if ALPHA_BETA_IDS.contains(&id.as_str()) {
            if spec.alpha_beta.is_some() {
                return Err(Error::Parameter(format!("selector `{selector}` names two (α, β) pairs")));
            }
            spec.alpha_beta = Some(alpha_beta_from_token(&id, p)?);
        } else {
            if spec.phi.is_some() {
                return Err(Error::Parameter(format!("selector `{selector}` names two profiles")));
            }
            spec.phi = Some(phi_from_token(&id, p)?);
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::metric_at;

    #[test]
    fn constant_curvature_closed_form() {
        let a = metric_at(&constant_curvature_alpha(3, 1.0), &[1.0, 0.0, 0.0]).unwrap();
        assert!((a.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((a.get(1, 1) - 0.5).abs() < 1e-15);
        let e = metric_at(&constant_curvature_alpha(3, 0.0), &[0.4, 0.1, 2.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(*e.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn selector_grammar() {
        let s = parse_selector("catalog:ex63c0+ex72").unwrap();
        assert_eq!(s, parse_selector("catalog:ex72+ex63c0").unwrap());
        assert_eq!(s.label(), "ex72+ex63c0");
        let s = parse_selector("catalog:ex71(delta2=0,a=0.1:0.2:0)+ex61(h=0.5)").unwrap();
        assert_eq!(
            s.alpha_beta,
            Some(AlphaBetaSpec::Ex71 {
                kappa: 1.0,
                delta1: 1.0,
                delta2: 0.0,
                a: Some(vec![0.1, 0.2, 0.0])
            })
        );
        assert_eq!(s.phi, Some(PhiSpec::Ex61 { h: Expr::Const(0.5) }));
        let p = parse_selector("perturbed-ex61(h=1,amplitude=0.2)").unwrap();
        assert_eq!(
            p.phi,
            Some(PhiSpec::Perturbed {
                base: Box::new(PhiSpec::Ex61 { h: Expr::Const(1.0) }),
                amplitude: 0.2
            })
        );
        assert!(parse_selector("catalog:ex99").is_err());
        assert!(parse_selector("catalog:ex61(q=1)").is_err());
        assert!(parse_selector("catalog:ex61+ex62").is_err());
        assert!(parse_selector("catalog:perturbed-lem23").is_err());
    }

    #[test]
    fn douglas_pairing_rule() {
        let ok = parse_selector("ex72+ex63c0").unwrap().build(3).unwrap();
        assert!(ok.expected_douglas());
        let c1 = parse_selector("ex71(delta2=0)+ex62").unwrap().build(3).unwrap();
        assert!(c1.expected_douglas());
        let mismatch = parse_selector("ex72+ex61").unwrap().build(3).unwrap();
        assert!(!mismatch.expected_douglas());
        let broken = parse_selector("ex72+perturbed").unwrap().build(3).unwrap();
        assert!(!broken.expected_douglas());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = parse_selector("ex71(kappa=0.5)+ex64(h=0.25)").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: MetricSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        let bad = r#"{"alpha_beta":{"id":"ex72","epsilon":1,"zeta":2}}"#;
        assert!(serde_json::from_str::<MetricSpec>(bad).is_err());
        let minimal: MetricSpec = serde_json::from_str(r#"{"phi":{"id":"ex61"}}"#).unwrap();
        assert_eq!(minimal.phi, Some(PhiSpec::Ex61 { h: Expr::Const(0.0) }));
    }
}
