//! General `(α, β)`-metrics `F = α φ(b², β/α)`: evaluation, fundamental tensor, the
//! spray computed three ways, and the Douglas curvature.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jets::{Group, Jet, JetError, Layout, SquareMatrix};
use crate::phi::{aux_from_partials, pde02_from_partials, PdeParams, PhiModel};
use crate::riemann::{
    decompose_beta, fit_decomposition, quadratic, BetaDecomposition, Condition03Outcome, OneForm,
    RiemannianMetric,
};

/// `F = α φ(b², β/α)`. `params` records the `(c, μ, ν)` the profile is meant to satisfy,
/// when there is one; it is only consulted by [`projective_deviation`].
#[derive(Clone)]
pub struct GeneralABMetric {
    pub alpha: Arc<dyn RiemannianMetric>,
    pub beta: Arc<dyn OneForm>,
    pub phi: Arc<dyn PhiModel>,
    pub params: Option<PdeParams>,
}

impl std::fmt::Debug for GeneralABMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralABMetric")
            .field("dim", &self.dim())
            .field("phi", &self.phi.name())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SprayMethod {
    FirstPrinciples,
    Contracted,
    DouglasForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SprayResult {
    pub g: Vec<f64>,
    pub method: SprayMethod,
}

/// `D^i_{jkl}` stored densely, index order `(i, j, k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DouglasTensorValue {
    pub n: usize,
    pub d: Vec<f64>,
    pub sup_norm: f64,
}

impl DouglasTensorValue {
    fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut d = Vec::with_capacity(n.pow(4));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        d.push(f(i, j, k, l));
                    }
                }
            }
        }
        let sup_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        DouglasTensorValue { n, d, sup_norm }
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.d[((i * n + j) * n + k) * n + l]
    }

    /// Largest difference between entries related by a permutation of `(j, k, l)`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        for w in [
                            self.get(i, k, j, l),
                            self.get(i, l, k, j),
                            self.get(i, j, l, k),
                        ] {
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs_difference(&self, other: &DouglasTensorValue) -> f64 {
        self.d
            .iter()
            .zip(&other.d)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Both halves of the decomposition `G = Ĝ + P y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DouglasForm {
    pub spray: SprayResult,
    pub g_hat: Vec<f64>,
}

fn degenerate(what: &str, e: JetError) -> Error {
    match e {
        JetError::NotPositiveDefinite { index, pivot } => Error::Degenerate(format!(
            "{what} is not positive definite (pivot {index} = {pivot:e})"
        )),
        other => Error::Jet(other),
    }
}

impl GeneralABMetric {
    pub fn new(
        alpha: Arc<dyn RiemannianMetric>,
        beta: Arc<dyn OneForm>,
        phi: Arc<dyn PhiModel>,
    ) -> GeneralABMetric {
        GeneralABMetric {
            alpha,
            beta,
            phi,
            params: None,
        }
    }

    pub fn with_params(mut self, params: PdeParams) -> GeneralABMetric {
        self.params = Some(params);
        self
    }

    pub fn dim(&self) -> usize {
        self.alpha.dim()
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n || y.len() != n {
            return Err(Error::Parameter(format!(
                "expected {n} coordinates, got x: {}, y: {}",
                x.len(),
                y.len()
            )));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::Inadmissible("y = 0".into()));
        }
        if !self.alpha.admissible(x) || !self.beta.admissible(x) {
            return Err(Error::Inadmissible(format!("x = {x:?}")));
        }
        Ok(())
    }

    /// `(b², s)` at `(x, y)`.
    pub fn b2_and_s(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        self.check_point(x, y)?;
        let l = Layout::scalar();
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(&l, v)).collect();
        let ys: Vec<Jet> = y.iter().map(|&v| Jet::constant(&l, v)).collect();
        let (b2, _, s) = self.invariants(&xs, &ys)?;
        Ok((b2.value(), s.value()))
    }

    /// `(b², α², s)` on jets.
    fn invariants(&self, x: &[Jet], y: &[Jet]) -> Result<(Jet, Jet, Jet)> {
        let n = self.dim();
        let a = self.alpha.metric(x)?;
        let b = self.beta.form(x)?;
        let chol = a.cholesky().map_err(|e| degenerate("a_ij", e))?;
        let b2 = chol.inverse_quadratic(&b)?;
        if !(b2.value() > 0.0) {
            return Err(Error::Inadmissible(format!("b² = {}", b2.value())));
        }
        let mut alpha2 = y[0].constant_like(0.0);
        let mut beta = y[0].constant_like(0.0);
        for i in 0..n {
            let mut row = y[0].constant_like(0.0);
            for j in 0..n {
                row += &(a.get(i, j) * &y[j]);
            }
            alpha2 += &(&row * &y[i]);
            beta += &(&b[i] * &y[i]);
        }
        let s = beta.checked_div(&alpha2.checked_sqrt()?)?;
        if s.value().abs() > b2.value().sqrt() * (1.0 + 1e-12) {
            return Err(Error::Inadmissible(format!(
                "|s| = {} exceeds b = {}",
                s.value().abs(),
                b2.value().sqrt()
            )));
        }
        Ok((b2, alpha2, s))
    }

    /// `F²` on jets.
    pub fn f_squared_jet(&self, x: &[Jet], y: &[Jet]) -> Result<Jet> {
        let (b2, alpha2, s) = self.invariants(x, y)?;
        let phi = self.phi.eval_jet(&b2, &s)?;
        if !(phi.value() > 0.0) {
            return Err(Error::Inadmissible(format!(
                "φ({}, {}) = {} ≤ 0",
                b2.value(),
                s.value(),
                phi.value()
            )));
        }
        Ok(&alpha2 * &(&phi * &phi))
    }

    /// Whether `(x, y)` lies in the region the profile is meant for.
    pub fn in_phi_domain(&self, x: &[f64], y: &[f64]) -> bool {
        self.b2_and_s(x, y)
            .map(|(b2, s)| self.phi.domain().contains(b2, s))
            .unwrap_or(false)
    }
}

pub fn evaluate_f(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    metric.check_point(x, y)?;
    let l = Layout::scalar();
    let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(&l, v)).collect();
    let ys: Vec<Jet> = y.iter().map(|&v| Jet::constant(&l, v)).collect();
    Ok(metric.f_squared_jet(&xs, &ys)?.value().sqrt())
}

/// `g_ij = ½ [F²]_{yⁱyʲ}`, checked for positive definiteness.
pub fn fundamental_tensor(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<SquareMatrix<f64>> {
    metric.check_point(x, y)?;
    let n = metric.dim();
    let l = Layout::uniform(n, 2)?;
    let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(&l, v)).collect();
    let ys: Vec<Jet> = y.iter().enumerate().map(|(i, &v)| Jet::variable(&l, v, i)).collect();
    let g = match metric.f_squared_jet(&xs, &ys) {
        Ok(f2) => SquareMatrix::from_fn(n, |i, j| 0.5 * f2.partial(&[i, j])),
        Err(Error::NotJetEvaluable(_)) => fundamental_tensor_from_partials(metric, x, y)?,
        Err(e) => return Err(e),
    };
    g.cholesky().map_err(|e| degenerate("g_ij", e))?;
    Ok(g)
}

/// `g_ij = ρ a_ij + ρ₀ b_ib_j + ρ₁(b_iα_j + b_jα_i) + ρ₂ α_iα_j` with `α_i = a_ij yʲ/α`,
/// using only `φ`, `φ₂` and `φ₂₂`. Works for profiles that are not jet-evaluable.
pub fn fundamental_tensor_from_partials(
    metric: &GeneralABMetric,
    x: &[f64],
    y: &[f64],
) -> Result<SquareMatrix<f64>> {
    metric.check_point(x, y)?;
    let d = decompose_beta(metric.alpha.as_ref(), metric.beta.as_ref(), x)?;
    let (alpha, s) = alpha_s(&d, y);
    let p = metric.phi.partials(d.b2, s)?;
    if !(p.phi > 0.0) {
        return Err(Error::Inadmissible(format!("φ({}, {s}) = {} ≤ 0", d.b2, p.phi)));
    }
    let w = p.phi * p.phi22 + p.phi2 * p.phi2;
    let rho = p.phi * (p.phi - s * p.phi2);
    let rho1 = p.phi * p.phi2 - s * w;
    let rho2 = -s * rho1;
    let n = d.dim();
    let yl: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| d.a.get(i, j) * y[j]).sum::<f64>() / alpha)
        .collect();
    let b = &d.b_lower;
    Ok(SquareMatrix::from_fn(n, |i, j| {
        rho * d.a.get(i, j) + w * b[i] * b[j] + rho1 * (b[i] * yl[j] + b[j] * yl[i]) + rho2 * yl[i] * yl[j]
    }))
}

/// `Gⁱ = ¼ g^{il}([F²]_{x^m y^l} y^m − [F²]_{x^l})` from joint order-2 jets in `(x, y)`.
pub fn spray_first_principles(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<SprayResult> {
    metric.check_point(x, y)?;
    let n = metric.dim();
    let l = Layout::uniform(2 * n, 2)?;
    let xs: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(&l, v, i)).collect();
    let ys: Vec<Jet> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(&l, v, n + i))
        .collect();
    let f2 = metric.f_squared_jet(&xs, &ys)?;
    let g = SquareMatrix::from_fn(n, |i, j| 0.5 * f2.partial(&[n + i, n + j]));
    let rhs: Vec<f64> = (0..n)
        .map(|l| {
            let mixed: f64 = (0..n).map(|m| f2.partial(&[m, n + l]) * y[m]).sum();
            0.25 * (mixed - f2.partial(&[l]))
        })
        .collect();
    let chol = g.cholesky().map_err(|e| degenerate("g_ij", e))?;
    Ok(SprayResult {
        g: chol.solve(&rhs)?,
        method: SprayMethod::FirstPrinciples,
    })
}

fn alpha_s(d: &BetaDecomposition, y: &[f64]) -> (f64, f64) {
    let alpha = d.alpha(y);
    (alpha, d.beta(y) / alpha)
}

/// The spray assembled from `^αGⁱ`, the auxiliary quantities and the `r`/`s` contractions.
pub fn spray_contracted(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<SprayResult> {
    metric.check_point(x, y)?;
    let d = decompose_beta(metric.alpha.as_ref(), metric.beta.as_ref(), x)?;
    let (alpha, s) = alpha_s(&d, y);
    let aux = aux_from_partials(&metric.phi.partials(d.b2, s)?)?;
    let c = d.contract(y);
    let base = d.christoffel.spray(y);
    let common = -2.0 * alpha * aux.q * c.s0 + c.r00 + 2.0 * alpha * alpha * aux.r * d.r_scalar;
    let y_coeff = (aux.theta * common + alpha * aux.omega * (c.r0 + c.s0)) / alpha;
    let b_coeff = aux.psi * common + alpha * aux.pi * (c.r0 + c.s0);
    let g = (0..d.dim())
        .map(|i| {
            base[i] + alpha * aux.q * c.s_up0[i] + y_coeff * y[i] + b_coeff * d.b_upper[i]
                - alpha * alpha * aux.r * (d.r_upper[i] + d.s_upper[i])
        })
        .collect();
    Ok(SprayResult {
        g,
        method: SprayMethod::Contracted,
    })
}

fn g_hat(d: &BetaDecomposition, params: &PdeParams, k: f64, y: &[f64]) -> Result<Vec<f64>> {
    let (alpha, s) = alpha_s(d, y);
    let v = params.at(d.b2)?;
    let b3 = d.b2 * d.b();
    let coeff = k * alpha * alpha / (2.0 * b3) * (v.nu * d.b2 - (v.nu - v.mu) * s * s);
    Ok(d.christoffel
        .spray(y)
        .iter()
        .zip(&d.b_upper)
        .map(|(g, b)| g + coeff * b)
        .collect())
}

const PRECONDITION_TOL: f64 = 1e-8;

/// `G = Ĝ + kα{[(1−c)s²+cb²]Θ + b²Ξ}y` with `Ĝ = ^αG + (kα²/(2b³))(νb²−(ν−μ)s²)b`,
/// after checking `b_{i|j} = kcb²a_ij + k(1−c)b_ib_j` with the given `k` and `c(b²)`,
/// and the PDE at `(b², s)`.
pub fn spray_douglas_form(
    metric: &GeneralABMetric,
    params: &PdeParams,
    k: f64,
    x: &[f64],
    y: &[f64],
) -> Result<DouglasForm> {
    metric.check_point(x, y)?;
    let n = metric.dim();
    let d = decompose_beta(metric.alpha.as_ref(), metric.beta.as_ref(), x)?;
    let v = params.at(d.b2)?;
    let mut misfit = 0.0;
    let mut scale = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = k * v.c * d.b2 * d.a.get(i, j) + k * (1.0 - v.c) * d.b_lower[i] * d.b_lower[j];
            misfit += (d.cov.get(i, j) - target).powi(2);
            scale += d.cov.get(i, j).powi(2);
        }
    }
    let misfit = misfit.sqrt();
    if misfit > PRECONDITION_TOL * (1.0 + scale.sqrt()) {
        return Err(Error::Precondition {
            what: "b_{i|j} = kcb²a_ij + k(1−c)b_ib_j".into(),
            residual: misfit,
        });
    }
    let (alpha, s) = alpha_s(&d, y);
    let p = metric.phi.partials(d.b2, s)?;
    let pde = pde02_from_partials(&p, &v);
    if pde.abs() > PRECONDITION_TOL {
        return Err(Error::Precondition {
            what: "Douglas PDE".into(),
            residual: pde,
        });
    }
    let aux = aux_from_partials(&p)?;
    let g_hat = g_hat(&d, params, k, y)?;
    let coeff = k * alpha * (((1.0 - v.c) * s * s + v.c * d.b2) * aux.theta + d.b2 * aux.xi);
    let g = g_hat.iter().zip(y).map(|(gh, yi)| gh + coeff * yi).collect();
    Ok(DouglasForm {
        spray: SprayResult {
            g,
            method: SprayMethod::DouglasForm,
        },
        g_hat,
    })
}

/// `k` from the condition-(03) fit at `x`; zero for a parallel form.
pub fn fitted_k(metric: &GeneralABMetric, x: &[f64]) -> Result<f64> {
    let d = decompose_beta(metric.alpha.as_ref(), metric.beta.as_ref(), x)?;
    match fit_decomposition(&d)? {
        Condition03Outcome::Fit(f) => Ok(f.k),
        Condition03Outcome::Parallel { .. } => Ok(0.0),
        Condition03Outcome::Unrepresentable { residual_norm, .. } => Err(Error::Precondition {
            what: "b_{i|j} representable as kcb²a_ij + k(1−c)b_ib_j".into(),
            residual: residual_norm,
        }),
    }
}

/// `a`-norm of the part of `G − Ĝ` orthogonal to `y`, with `G` from first principles,
/// `Ĝ` built from the metric's declared `(c, μ, ν)` and the fitted `k`.
pub fn projective_deviation(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<f64> {
    let params = metric
        .params
        .as_ref()
        .ok_or_else(|| Error::Parameter("metric carries no (c, μ, ν)".into()))?;
    let g = spray_first_principles(metric, x, y)?.g;
    let d = decompose_beta(metric.alpha.as_ref(), metric.beta.as_ref(), x)?;
    let k = fitted_k(metric, x)?;
    let gh = g_hat(&d, params, k, y)?;
    let v: Vec<f64> = g.iter().zip(&gh).map(|(a, b)| a - b).collect();
    let t = quadratic(&d.a, &v, y) / quadratic(&d.a, y, y);
    let w: Vec<f64> = v.iter().zip(y).map(|(vi, yi)| vi - t * yi).collect();
    Ok(quadratic(&d.a, &w, &w).max(0.0).sqrt())
}

/// `Gⁱ` as order-4 jets in `y` around the given direction.
///
/// `F²` is evaluated on a two-group layout: `(x, y)` directions to order 2 feed the
/// spray formula, and a second copy of the `y` directions to order 4 carries the
/// expansion of the result.
pub fn spray_y_jets(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<Vec<Jet>> {
    metric.check_point(x, y)?;
    let n = metric.dim();
    let layout = Layout::grouped(&[
        Group {
            vars: 2 * n,
            order: 2,
        },
        Group { vars: n, order: 4 },
    ])?;
    let target = Layout::uniform(n, 4)?;
    let xs: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(&layout, v, i)).collect();
    let ys: Vec<Jet> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::seeded(&layout, v, &[(n + i, 1.0), (2 * n + i, 1.0)]))
        .collect();
    let f2 = metric.f_squared_jet(&xs, &ys)?;
    let exps = |dirs: &[usize]| {
        let mut e = vec![0u8; 3 * n];
        for &d in dirs {
            e[d] += 1;
        }
        e
    };
    let outer_y: Vec<Jet> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(&target, v, i))
        .collect();
    let g = SquareMatrix::from_fn(n, |i, j| f2.project(&exps(&[n + i, n + j]), 1, &target).scale(0.5));
    let mut rhs = Vec::with_capacity(n);
    for l in 0..n {
        let mut acc = f2.project(&exps(&[l]), 1, &target).scale(-1.0);
        for (m, ym) in outer_y.iter().enumerate() {
            acc += &(&f2.project(&exps(&[m, n + l]), 1, &target) * ym);
        }
        rhs.push(acc.scale(0.25));
    }
    let chol = g.cholesky().map_err(|e| degenerate("g_ij", e))?;
    Ok(chol.solve(&rhs)?)
}

/// `D^i_{jkl} = ∂³/∂yʲ∂yᵏ∂yˡ (Gⁱ − (∂_m G^m) yⁱ/(n+1))` from [`spray_y_jets`].
pub fn douglas_tensor(metric: &GeneralABMetric, x: &[f64], y: &[f64]) -> Result<DouglasTensorValue> {
    let g = spray_y_jets(metric, x, y)?;
    let n = g.len();
    let layout = g[0].layout().clone();
    let mut div = g[0].constant_like(0.0);
    for (m, gm) in g.iter().enumerate() {
        div += &gm.derivative(m);
    }
    let div = div.scale(1.0 / (n as f64 + 1.0));
    let t: Vec<Jet> = g
        .iter()
        .enumerate()
        .map(|(i, gi)| gi - &(&div * &Jet::variable(&layout, y[i], i)))
        .collect();
    Ok(DouglasTensorValue::from_fn(n, |i, j, k, l| t[i].partial(&[j, k, l])))
}

/// Relative step that balances truncation and rounding in [`douglas_tensor_fd_oracle`].
pub const FD_ORACLE_STEP: f64 = 5e-3;

/// `D^i_{jkl}` by central differences of [`spray_first_principles`]. With `h = step·|y|`,
/// the divergence uses a fourth-order stencil of width `h/5` and the third derivatives
/// nested central differences, Richardson-extrapolated from widths `h` and `2h`.
pub fn douglas_tensor_fd_oracle(
    metric: &GeneralABMetric,
    x: &[f64],
    y: &[f64],
    step: f64,
) -> Result<DouglasTensorValue> {
    let n = metric.dim();
    let h = step * y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fine = fd_third(metric, x, y, h)?;
    let coarse = fd_third(metric, x, y, 2.0 * h)?;
    Ok(DouglasTensorValue::from_fn(n, |i, j, k, l| {
        let idx = ((i * n + j) * n + k) * n + l;
        (4.0 * fine[idx] - coarse[idx]) / 3.0
    }))
}

fn fd_third(metric: &GeneralABMetric, x: &[f64], y: &[f64], step: f64) -> Result<Vec<f64>> {
    let n = metric.dim();
    let h1 = 0.2 * step;
    let spray = |v: &[f64]| spray_first_principles(metric, x, v).map(|r| r.g);
    let t_at = |v: &[f64]| -> Result<Vec<f64>> {
        let g = spray(v)?;
        let mut div = 0.0;
        for m in 0..n {
            let mut pt = v.to_vec();
            let mut at = |off: f64| -> Result<f64> {
                pt[m] = v[m] + off;
                Ok(spray(&pt)?[m])
            };
            div += (8.0 * (at(h1)? - at(-h1)?) - (at(2.0 * h1)? - at(-2.0 * h1)?)) / (12.0 * h1);
        }
        Ok(g.iter()
            .zip(v)
            .map(|(gi, vi)| gi - div * vi / (n as f64 + 1.0))
            .collect())
    };
    let mut third = vec![0.0; n.pow(4)];
    for j in 0..n {
        for k in j..n {
            for l in k..n {
                let mut acc = vec![0.0; n];
                for mask in 0..8u8 {
                    let sj = if mask & 1 == 0 { 1.0 } else { -1.0 };
                    let sk = if mask & 2 == 0 { 1.0 } else { -1.0 };
                    let sl = if mask & 4 == 0 { 1.0 } else { -1.0 };
                    let mut pt = y.to_vec();
                    pt[j] += sj * step;
                    pt[k] += sk * step;
                    pt[l] += sl * step;
                    let t = t_at(&pt)?;
                    let sign = sj * sk * sl;
                    for (a, ti) in acc.iter_mut().zip(&t) {
                        *a += sign * ti;
                    }
                }
                let denom = 8.0 * step.powi(3);
                for i in 0..n {
                    let v = acc[i] / denom;
                    for (p, q, r) in [(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                        third[((i * n + p) * n + q) * n + r] = v;
                    }
                }
            }
        }
    }
    Ok(third)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::phi::{ExprPhi, PhiDomain};
    use crate::riemann::{FnForm, FnMetric};

    fn euclid(n: usize) -> Arc<dyn RiemannianMetric> {
        Arc::new(FnMetric::new(n, move |x| {
            Ok(SquareMatrix::from_fn(n, |i, j| {
                x[0].constant_like(if i == j { 1.0 } else { 0.0 })
            }))
        }))
    }

    fn position_form() -> Arc<dyn OneForm> {
        Arc::new(FnForm::new(|x| Ok(x.to_vec())))
    }

    fn const_form(b: Vec<f64>) -> Arc<dyn OneForm> {
        Arc::new(FnForm::new(move |x| Ok(b.iter().map(|&v| x[0].constant_like(v)).collect())))
    }

    fn phi(name: &str, e: Expr) -> Arc<dyn PhiModel> {
        Arc::new(ExprPhi::new(name, e, PhiDomain::default()))
    }

    fn randers() -> GeneralABMetric {
        GeneralABMetric::new(euclid(3), position_form(), phi("1+s", 1.0 + Expr::var(1)))
    }

    #[test]
    fn randers_value_and_homogeneity() {
        let m = randers();
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let f = evaluate_f(&m, &x, &y).unwrap();
        let expect = (0.25f64 + 1.0 + 0.49).sqrt() + (0.1 - 0.1 - 0.21);
        assert!((f - expect).abs() < 1e-14);
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((evaluate_f(&m, &x, &y2).unwrap() - 2.0 * f).abs() < 1e-13);
    }

    #[test]
    fn randers_determinant_and_euler_identity() {
        let m = randers();
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let g = fundamental_tensor(&m, &x, &y).unwrap();
        let f = evaluate_f(&m, &x, &y).unwrap();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let det = g.get(0, 0) * (g.get(1, 1) * g.get(2, 2) - g.get(1, 2) * g.get(2, 1))
            - g.get(0, 1) * (g.get(1, 0) * g.get(2, 2) - g.get(1, 2) * g.get(2, 0))
            + g.get(0, 2) * (g.get(1, 0) * g.get(2, 1) - g.get(1, 1) * g.get(2, 0));
        assert!((det - (f / ny).powi(4)).abs() < 1e-10);
        assert!((quadratic(&g, &y, &y) - f * f).abs() < 1e-12);
    }

    #[test]
    fn partials_formula_matches_jet_hessian() {
        let e = Expr::var(1).pow(2.0) * Expr::var(0) + 1.0 + 0.3 * Expr::var(1) + Expr::var(0).exp() * 0.1;
        let m = GeneralABMetric::new(euclid(3), position_form(), phi("mix", e));
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let g = fundamental_tensor(&m, &x, &y).unwrap();
        let h = fundamental_tensor_from_partials(&m, &x, &y).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.get(i, j) - h.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn euclidean_riemannian_spray_vanishes() {
        let m = GeneralABMetric::new(euclid(3), position_form(), phi("one", Expr::Const(1.0)));
        let g = spray_first_principles(&m, &[0.1, 0.2, 0.3], &[1.0, 0.0, 0.5]).unwrap();
        assert!(g.g.iter().all(|v| v.abs() < 1e-15));
        let d = douglas_tensor(&m, &[0.1, 0.2, 0.3], &[1.0, 0.0, 0.5]).unwrap();
        assert!(d.sup_norm < 1e-12);
    }

    #[test]
    fn constant_form_randers_is_berwald() {
        let m = GeneralABMetric::new(
            euclid(3),
            const_form(vec![0.3, 0.2, 0.1]),
            phi("1+s", 1.0 + Expr::var(1)),
        );
        let (x, y) = ([0.1, 0.2, 0.3], [1.0, -0.4, 0.5]);
        let g = spray_y_jets(&m, &x, &y).unwrap();
        for gi in &g {
            for (k, &c) in gi.coeffs().iter().enumerate() {
                let deg: u32 = gi.layout().monomial(k).iter().map(|&d| d as u32).sum();
                if deg >= 3 {
                    assert!(c.abs() < 1e-12);
                }
            }
        }
        assert!(douglas_tensor(&m, &x, &y).unwrap().sup_norm < 1e-12);
    }

    #[test]
    fn spray_formulas_agree_on_sphere_symmetric_randers() {
        let m = randers();
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let a = spray_first_principles(&m, &x, &y).unwrap().g;
        let b = spray_contracted(&m, &x, &y).unwrap().g;
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12, "{a:?} vs {b:?}");
        }
        let jets = spray_y_jets(&m, &x, &y).unwrap();
        for (u, j) in a.iter().zip(&jets) {
            assert!((u - j.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn projectively_flat_randers_has_zero_douglas_tensor() {
        let m = randers();
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let d = douglas_tensor(&m, &x, &y).unwrap();
        assert!(d.sup_norm < 1e-11);
        let fd = douglas_tensor_fd_oracle(&m, &x, &y, 5e-3).unwrap();
        assert!(fd.sup_norm < 1e-6);
    }

    #[test]
    fn non_douglas_profile_detected_by_both_pipelines() {
        let m = GeneralABMetric::new(
            euclid(3),
            position_form(),
            phi("1+s+0.1s3", 1.0 + Expr::var(1) + 0.1 * Expr::var(1).pow(3.0)),
        );
        let (x, y) = ([0.2, -0.1, 0.3], [0.5, 1.0, -0.7]);
        let d = douglas_tensor(&m, &x, &y).unwrap();
        let fd = douglas_tensor_fd_oracle(&m, &x, &y, 5e-3).unwrap();
        assert!(d.sup_norm > 1e-3);
        assert!(d.max_abs_difference(&fd) < 1e-3);
        assert!(d.asymmetry() < 1e-10);
    }
}
