//! Riemannian data: `a_ij(x)`, Christoffel symbols, the spray of `α`, the covariant
//! derivative `b_{i|j}` of a 1-form and its symmetric/antisymmetric decomposition.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::{Jet, Layout, SquareMatrix};

/// A Riemannian metric `α = √(a_ij(x) yⁱ yʲ)` evaluable on spatial jets.
pub trait RiemannianMetric: Send + Sync {
    fn dim(&self) -> usize;

    /// `a_ij` at a point given as jets (one per coordinate).
    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>>;

    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

/// A 1-form `β = b_i(x) yⁱ` evaluable on spatial jets.
pub trait OneForm: Send + Sync {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>>;

    fn admissible(&self, _x: &[f64]) -> bool {
        true
    }
}

fn check_point(metric: &dyn RiemannianMetric, x: &[f64]) -> Result<()> {
    if x.len() != metric.dim() {
        return Err(Error::Parameter(format!(
            "point has {} coordinates, metric dimension is {}",
            x.len(),
            metric.dim()
        )));
    }
    if !metric.admissible(x) {
        return Err(Error::Inadmissible(format!("x = {x:?}")));
    }
    Ok(())
}

/// Coordinate jets `xᵢ + tᵢ` of total order `order`.
pub(crate) fn spatial_jets(x: &[f64], order: usize) -> Result<Vec<Jet>> {
    let layout = Layout::uniform(x.len(), order)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(&layout, v, i))
        .collect())
}

pub(crate) fn constant_jets(x: &[f64]) -> Vec<Jet> {
    let layout = Layout::scalar();
    x.iter().map(|&v| Jet::constant(&layout, v)).collect()
}

/// `a_ij(x)` as reals.
pub fn metric_at(metric: &dyn RiemannianMetric, x: &[f64]) -> Result<SquareMatrix<f64>> {
    check_point(metric, x)?;
    let a = metric.metric(&constant_jets(x))?;
    Ok(a.map(Jet::value))
}

/// `b_i(x)` as reals.
pub fn form_at(form: &dyn OneForm, x: &[f64]) -> Result<Vec<f64>> {
    Ok(form.form(&constant_jets(x))?.iter().map(Jet::value).collect())
}

/// `α(x, y)`.
pub fn alpha_norm(metric: &dyn RiemannianMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    let a = metric_at(metric, x)?;
    Ok(quadratic(&a, y, y).sqrt())
}

pub(crate) fn quadratic(a: &SquareMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a.get(i, j) * u[i] * v[j];
        }
    }
    acc
}

/// Christoffel symbols of the second kind, `γⁱ_{jk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Christoffel {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.n;
        self.data[(i * n + j) * n + k] = v;
    }

    /// `½ γⁱ_{jk} yʲ yᵏ`.
    pub fn spray(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        acc += self.get(i, j, k) * y[j] * y[k];
                    }
                }
                0.5 * acc
            })
            .collect()
    }
}

/// `γⁱ_{jk} = ½ a^{il}(∂_j a_{lk} + ∂_k a_{jl} − ∂_l a_{jk})`.
pub fn christoffel(metric: &dyn RiemannianMetric, x: &[f64]) -> Result<Christoffel> {
    check_point(metric, x)?;
    let n = x.len();
    let a = metric.metric(&spatial_jets(x, 1)?)?;
    let a0 = a.map(Jet::value);
    let chol = a0
        .cholesky()
        .map_err(|e| Error::Degenerate(format!("a_ij at {x:?}: {e}")))?;
    let da = |i: usize, j: usize, k: usize| a.get(i, j).partial(&[k]);
    let mut gamma = Christoffel::zeros(n);
    for j in 0..n {
        for k in j..n {
            let lowered: Vec<f64> = (0..n)
                .map(|l| 0.5 * (da(l, k, j) + da(j, l, k) - da(j, k, l)))
                .collect();
            let raised = chol.solve(&lowered)?;
            for (i, v) in raised.into_iter().enumerate() {
                gamma.set(i, j, k, v);
                gamma.set(i, k, j, v);
            }
        }
    }
    Ok(gamma)
}

/// Geodesic coefficients of `α`: `½ γⁱ_{jk} yʲ yᵏ`.
pub fn alpha_spray(metric: &dyn RiemannianMetric, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    Ok(christoffel(metric, x)?.spray(y))
}

/// `b_{i|j} = ∂_j b_i − b_l γˡ_{ij}`.
pub fn covariant_derivative(
    metric: &dyn RiemannianMetric,
    form: &dyn OneForm,
    x: &[f64],
) -> Result<SquareMatrix<f64>> {
    let gamma = christoffel(metric, x)?;
    covariant_derivative_with(&gamma, form, x)
}

fn covariant_derivative_with(
    gamma: &Christoffel,
    form: &dyn OneForm,
    x: &[f64],
) -> Result<SquareMatrix<f64>> {
    if !form.admissible(x) {
        return Err(Error::Inadmissible(format!("1-form at x = {x:?}")));
    }
    let n = x.len();
    let b = form.form(&spatial_jets(x, 1)?)?;
    Ok(SquareMatrix::from_fn(n, |i, j| {
        let mut v = b[i].partial(&[j]);
        for (l, bl) in b.iter().enumerate() {
            v -= bl.value() * gamma.get(l, i, j);
        }
        v
    }))
}

/// Contractions of the decomposition against a direction `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contractions {
    pub r00: f64,
    pub r0: f64,
    pub s0: f64,
    /// `sⁱ₀ = a^{ij} s_{jk} yᵏ`.
    pub s_up0: Vec<f64>,
}

/// Everything the spray formula needs about `β` at one point.
#[derive(Debug, Clone)]
pub struct BetaDecomposition {
    pub a: SquareMatrix<f64>,
    pub b_lower: Vec<f64>,
    /// `bⁱ = a^{ij} b_j`.
    pub b_upper: Vec<f64>,
    pub b2: f64,
    pub cov: SquareMatrix<f64>,
    pub r: SquareMatrix<f64>,
    pub s: SquareMatrix<f64>,
    pub r_lower: Vec<f64>,
    pub s_lower: Vec<f64>,
    pub r_upper: Vec<f64>,
    pub s_upper: Vec<f64>,
    /// `r = bⁱ r_i`.
    pub r_scalar: f64,
    pub christoffel: Christoffel,
}

impl BetaDecomposition {
    pub fn dim(&self) -> usize {
        self.b_lower.len()
    }

    pub fn b(&self) -> f64 {
        self.b2.sqrt()
    }

    pub fn alpha(&self, y: &[f64]) -> f64 {
        quadratic(&self.a, y, y).sqrt()
    }

    pub fn beta(&self, y: &[f64]) -> f64 {
        dot(&self.b_lower, y)
    }

    pub fn contract(&self, y: &[f64]) -> Contractions {
        let n = self.dim();
        let s_lower0: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|k| self.s.get(j, k) * y[k]).sum())
            .collect();
        let chol = self.a.cholesky().expect("a_ij was factored when decomposing");
        Contractions {
            r00: quadratic(&self.r, y, y),
            r0: dot(&self.r_lower, y),
            s0: dot(&self.s_lower, y),
            s_up0: chol.solve(&s_lower0).expect("nonsingular"),
        }
    }

    /// Frobenius norm of `s_ij`.
    pub fn closedness_norm(&self) -> f64 {
        frobenius(&self.s)
    }
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn frobenius(m: &SquareMatrix<f64>) -> f64 {
    let n = m.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m.get(i, j).powi(2);
        }
    }
    acc.sqrt()
}

pub fn decompose_beta(
    metric: &dyn RiemannianMetric,
    form: &dyn OneForm,
    x: &[f64],
) -> Result<BetaDecomposition> {
    let n = x.len();
    let gamma = christoffel(metric, x)?;
    let a = metric_at(metric, x)?;
    let chol = a
        .cholesky()
        .map_err(|e| Error::Degenerate(format!("a_ij at {x:?}: {e}")))?;
    let b_lower = form_at(form, x)?;
    let b_upper = chol.solve(&b_lower)?;
    let b2 = dot(&b_lower, &b_upper);
    let cov = covariant_derivative_with(&gamma, form, x)?;
    let r = SquareMatrix::from_fn(n, |i, j| 0.5 * (cov.get(i, j) + cov.get(j, i)));
    let s = SquareMatrix::from_fn(n, |i, j| 0.5 * (cov.get(i, j) - cov.get(j, i)));
    let r_lower: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| b_upper[j] * r.get(j, i)).sum())
        .collect();
    let s_lower: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| b_upper[j] * s.get(j, i)).sum())
        .collect();
    let r_upper = chol.solve(&r_lower)?;
    let s_upper = chol.solve(&s_lower)?;
    let r_scalar = dot(&b_upper, &r_lower);
    Ok(BetaDecomposition {
        a,
        b_lower,
        b_upper,
        b2,
        cov,
        r,
        s,
        r_lower,
        s_lower,
        r_upper,
        s_upper,
        r_scalar,
        christoffel: gamma,
    })
}

/// Least-squares fit of `b_{(i|j)} ≈ λ a_ij + τ b_i b_j`, with `λ = k c b²`, `τ = k(1−c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition03Fit {
    pub k: f64,
    pub c: f64,
    pub lambda: f64,
    pub tau: f64,
    pub b2: f64,
    pub residual_norm: f64,
    pub closedness_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition03Outcome {
    Fit(Condition03Fit),
    /// `k ≈ 0`: the symmetric part of `b_{i|j}` vanishes.
    Parallel {
        residual_norm: f64,
        closedness_norm: f64,
    },
    /// The best fit has `k = 0` but `λ ≠ 0`; no `(k, c)` represents it.
    Unrepresentable {
        lambda: f64,
        tau: f64,
        residual_norm: f64,
    },
}

impl Condition03Outcome {
    pub fn fit(&self) -> Option<&Condition03Fit> {
        match self {
            Condition03Outcome::Fit(f) => Some(f),
            _ => None,
        }
    }
}

const GRAM_CONDITION_LIMIT: f64 = 1e12;
const PARALLEL_TOL: f64 = 1e-12;

pub fn fit_condition03(
    metric: &dyn RiemannianMetric,
    form: &dyn OneForm,
    x: &[f64],
) -> Result<Condition03Outcome> {
    let d = decompose_beta(metric, form, x)?;
    fit_decomposition(&d)
}

pub fn fit_decomposition(d: &BetaDecomposition) -> Result<Condition03Outcome> {
    let n = d.dim();
    if !(d.b2 > 0.0) {
        return Err(Error::Inadmissible(format!("b² = {} must be positive", d.b2)));
    }
    let closedness_norm = d.closedness_norm();
    let scale = frobenius(&d.r);
    if scale <= PARALLEL_TOL {
        return Ok(Condition03Outcome::Parallel {
            residual_norm: scale,
            closedness_norm,
        });
    }
    // normal equations over the independent entries i ≤ j, with b_ib_j/b² as the
    // second basis element
    let (mut g11, mut g12, mut g22, mut h1, mut h2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i..n {
            let u = *d.a.get(i, j);
            let v = d.b_lower[i] * d.b_lower[j] / d.b2;
            let t = *d.r.get(i, j);
            g11 += u * u;
            g12 += u * v;
            g22 += v * v;
            h1 += u * t;
            h2 += v * t;
        }
    }
    let det = g11 * g22 - g12 * g12;
    let tr = g11 + g22;
    let disc = ((g11 - g22).powi(2) + 4.0 * g12 * g12).sqrt();
    let (ev_max, ev_min) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    if !(ev_min > 0.0) || ev_max / ev_min > GRAM_CONDITION_LIMIT {
        return Err(Error::Degenerate(format!(
            "a_ij and b_i b_j are nearly parallel (Gram eigenvalues {ev_max:e}, {ev_min:e})"
        )));
    }
    let lambda = (h1 * g22 - h2 * g12) / det;
    let tau = (g11 * h2 - g12 * h1) / det / d.b2;
    let mut misfit = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = d.r.get(i, j) - lambda * d.a.get(i, j) - tau * d.b_lower[i] * d.b_lower[j];
            misfit += e * e;
        }
    }
    let residual_norm = misfit.sqrt();
    let k = lambda / d.b2 + tau;
    if k.abs() <= PARALLEL_TOL * (lambda.abs() / d.b2 + tau.abs()) {
        return Ok(Condition03Outcome::Unrepresentable {
            lambda,
            tau,
            residual_norm,
        });
    }
    Ok(Condition03Outcome::Fit(Condition03Fit {
        k,
        c: lambda / (d.b2 * k),
        lambda,
        tau,
        b2: d.b2,
        residual_norm,
        closedness_norm,
    }))
}

/// Metric given by an explicit function of the coordinate jets.
pub struct FnMetric {
    dim: usize,
    #[allow(clippy::type_complexity)]
    f: Arc<dyn Fn(&[Jet]) -> Result<SquareMatrix<Jet>> + Send + Sync>,
}

impl FnMetric {
    pub fn new(
        dim: usize,
        f: impl Fn(&[Jet]) -> Result<SquareMatrix<Jet>> + Send + Sync + 'static,
    ) -> Self {
        FnMetric { dim, f: Arc::new(f) }
    }
}

impl RiemannianMetric for FnMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn metric(&self, x: &[Jet]) -> Result<SquareMatrix<Jet>> {
        (self.f)(x)
    }
}

/// 1-form given by an explicit function of the coordinate jets.
pub struct FnForm {
    #[allow(clippy::type_complexity)]
    f: Arc<dyn Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync>,
}

impl FnForm {
    pub fn new(f: impl Fn(&[Jet]) -> Result<Vec<Jet>> + Send + Sync + 'static) -> Self {
        FnForm { f: Arc::new(f) }
    }
}

impl OneForm for FnForm {
    fn form(&self, x: &[Jet]) -> Result<Vec<Jet>> {
        (self.f)(x)
    }
}
