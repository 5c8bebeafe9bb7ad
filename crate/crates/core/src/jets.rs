//! Truncated multivariate Taylor arithmetic ("jets") and small dense linear algebra.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f / α!` of a scalar function over a
//! fixed set of seeded directions. Directions are partitioned into groups, each with its
//! own truncation order: a monomial is kept iff its degree inside every group stays within
//! that group's order. A single group gives the usual total-degree truncation; two groups
//! give a tensor-product truncation, which is how an order-2 differentiation in `(x, y)`
//! is stacked on top of an order-4 expansion in `y` without nesting jet types.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Largest truncation order accepted for a single direction group.
pub const MAX_GROUP_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("domain violation in {op}: argument value {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("jet layouts differ: {left} vs {right}")]
    LayoutMismatch { left: String, right: String },
    #[error("group order {order} exceeds the supported maximum {MAX_GROUP_ORDER}")]
    OrderTooHigh { order: usize },
    #[error("matrix is not positive definite: pivot {index} = {pivot}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Shape of a direction group: `vars` seeded directions truncated at `order`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Group {
    pub vars: usize,
    pub order: usize,
}

/// Monomial basis and multiplication table shared by all jets of one shape.
pub struct Layout {
    groups: Vec<Group>,
    offsets: Vec<usize>,
    nvars: usize,
    monomials: Vec<Box<[u8]>>,
    index: HashMap<Box<[u8]>, usize>,
    /// `(i, j, k)`: product coefficient `k` receives `a[i] * b[j]`.
    mul: Vec<(u32, u32, u32)>,
    nilpotency: usize,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Layout{:?}", self.groups)
    }
}

fn layout_cache() -> &'static Mutex<HashMap<Vec<Group>, Arc<Layout>>> {
    static CACHE: OnceLock<Mutex<HashMap<Vec<Group>, Arc<Layout>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn group_exponents(vars: usize, order: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..vars {
        let mut next = Vec::new();
        for e in &out {
            let used: usize = e.iter().map(|&d| d as usize).sum();
            for d in 0..=(order - used) {
                let mut v = e.clone();
                v.push(d as u8);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

impl Layout {
    /// Layout with a single group of `vars` directions truncated at total order `order`.
    pub fn uniform(vars: usize, order: usize) -> Result<Arc<Layout>, JetError> {
        Layout::grouped(&[Group { vars, order }])
    }

    /// Layout carrying plain real numbers (no seeded directions).
    pub fn scalar() -> Arc<Layout> {
        Layout::grouped(&[]).expect("empty layout is always valid")
    }

    pub fn grouped(groups: &[Group]) -> Result<Arc<Layout>, JetError> {
        if let Some(g) = groups.iter().find(|g| g.order > MAX_GROUP_ORDER) {
            return Err(JetError::OrderTooHigh { order: g.order });
        }
        let key: Vec<Group> = groups
            .iter()
            .copied()
            .filter(|g| g.vars > 0 && g.order > 0)
            .collect();
        let mut cache = layout_cache().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(l) = cache.get(&key) {
            return Ok(l.clone());
        }
        let layout = Arc::new(Layout::build(key.clone()));
        cache.insert(key, layout.clone());
        Ok(layout)
    }

    fn build(groups: Vec<Group>) -> Layout {
        let mut offsets = Vec::with_capacity(groups.len());
        let mut nvars = 0;
        for g in &groups {
            offsets.push(nvars);
            nvars += g.vars;
        }
        let mut monomials: Vec<Vec<u8>> = vec![Vec::new()];
        for g in &groups {
            let part = group_exponents(g.vars, g.order);
            let mut next = Vec::with_capacity(monomials.len() * part.len());
            for m in &monomials {
                for p in &part {
                    let mut v = m.clone();
                    v.extend_from_slice(p);
                    next.push(v);
                }
            }
            monomials = next;
        }
        monomials.sort_by(|a, b| {
            let da: usize = a.iter().map(|&d| d as usize).sum();
            let db: usize = b.iter().map(|&d| d as usize).sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        let monomials: Vec<Box<[u8]>> = monomials.into_iter().map(Vec::into_boxed_slice).collect();
        let index: HashMap<Box<[u8]>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();

        let group_deg: Vec<Vec<usize>> = monomials
            .iter()
            .map(|m| {
                groups
                    .iter()
                    .zip(&offsets)
                    .map(|(g, &o)| m[o..o + g.vars].iter().map(|&d| d as usize).sum())
                    .collect()
            })
            .collect();
        let mut mul = Vec::new();
        let mut buf = vec![0u8; nvars];
        for (i, mi) in monomials.iter().enumerate() {
            for (j, mj) in monomials.iter().enumerate() {
                let fits = groups
                    .iter()
                    .enumerate()
                    .all(|(gi, g)| group_deg[i][gi] + group_deg[j][gi] <= g.order);
                if !fits {
                    continue;
                }
                for v in 0..nvars {
                    buf[v] = mi[v] + mj[v];
                }
                let k = index[&buf[..]];
                mul.push((i as u32, j as u32, k as u32));
            }
        }
        let nilpotency = groups.iter().map(|g| g.order).sum();
        Layout {
            groups,
            offsets,
            nvars,
            monomials,
            index,
            mul,
            nilpotency,
        }
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Index of the first direction of group `g`.
    pub fn group_offset(&self, g: usize) -> usize {
        self.offsets[g]
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    /// Highest power of a zero-valued jet that can be nonzero.
    pub fn nilpotency(&self) -> usize {
        self.nilpotency
    }

    fn same(a: &Arc<Layout>, b: &Arc<Layout>) -> bool {
        Arc::ptr_eq(a, b) || a.groups == b.groups
    }
}

/// Truncated multivariate Taylor expansion.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("layout", &self.layout)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant(layout: &Arc<Layout>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Jet {
            layout: layout.clone(),
            coeffs,
        }
    }

    /// `value + t_var`: the jet of a coordinate seeded along direction `var`.
    pub fn variable(layout: &Arc<Layout>, value: f64, var: usize) -> Jet {
        let mut j = Jet::constant(layout, value);
        let mut e = vec![0u8; layout.num_vars()];
        e[var] = 1;
        let k = layout.index_of(&e).expect("seeded direction outside layout");
        j.coeffs[k] = 1.0;
        j
    }

    /// `value + Σ weight·t_var` for several seeded directions at once.
    pub fn seeded(layout: &Arc<Layout>, value: f64, seeds: &[(usize, f64)]) -> Jet {
        let mut j = Jet::constant(layout, value);
        let mut e = vec![0u8; layout.num_vars()];
        for &(var, w) in seeds {
            e.fill(0);
            e[var] = 1;
            let k = layout.index_of(&e).expect("seeded direction outside layout");
            j.coeffs[k] += w;
        }
        j
    }

    pub fn from_coeffs(layout: &Arc<Layout>, coeffs: Vec<f64>) -> Result<Jet, JetError> {
        if coeffs.len() != layout.len() {
            return Err(JetError::Dimension {
                expected: layout.len(),
                got: coeffs.len(),
            });
        }
        Ok(Jet {
            layout: layout.clone(),
            coeffs,
        })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Taylor coefficient of the monomial with exponents `exps`; zero if truncated away.
    pub fn coeff(&self, exps: &[u8]) -> f64 {
        self.layout.index_of(exps).map_or(0.0, |k| self.coeffs[k])
    }

    /// Partial derivative along the listed directions (repetitions allowed).
    pub fn partial(&self, vars: &[usize]) -> f64 {
        let mut e = vec![0u8; self.layout.num_vars()];
        for &v in vars {
            e[v] += 1;
        }
        self.coeff(&e) * multi_factorial(&e)
    }

    pub fn constant_like(&self, value: f64) -> Jet {
        Jet::constant(&self.layout, value)
    }

    pub fn is_same_layout(&self, other: &Jet) -> bool {
        Layout::same(&self.layout, &other.layout)
    }

    fn check(&self, other: &Jet) -> Result<(), JetError> {
        if self.is_same_layout(other) {
            Ok(())
        } else {
            Err(JetError::LayoutMismatch {
                left: format!("{:?}", self.layout),
                right: format!("{:?}", other.layout),
            })
        }
    }

    fn assert_layout(&self, other: &Jet) {
        if let Err(e) = self.check(other) {
            panic!("{e}");
        }
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.add_unchecked(other, 1.0))
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.add_unchecked(other, -1.0))
    }

    pub fn try_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    /// Quotient; a divisor with zero value is a domain violation.
    pub fn checked_div(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let r = other.checked_recip()?;
        Ok(self.mul_unchecked(&r))
    }

    fn add_unchecked(&self, other: &Jet, sign: f64) -> Jet {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + sign * b)
            .collect();
        Jet {
            layout: self.layout.clone(),
            coeffs,
        }
    }

    fn mul_unchecked(&self, other: &Jet) -> Jet {
        let mut out = vec![0.0; self.coeffs.len()];
        if self.coeffs.len() == 1 {
            out[0] = self.coeffs[0] * other.coeffs[0];
        } else {
            let (a, b) = (&self.coeffs, &other.coeffs);
            for &(i, j, k) in &self.layout.mul {
                out[k as usize] += a[i as usize] * b[j as usize];
            }
        }
        Jet {
            layout: self.layout.clone(),
            coeffs: out,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `f(self)` from the scaled derivatives `taylor[k] = f⁽ᵏ⁾(v)/k!` at `v = self.value()`.
    fn compose(&self, taylor: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let top = taylor.len().min(self.layout.nilpotency + 1);
        let mut acc = Jet::constant(&self.layout, taylor[top - 1]);
        for k in (0..top - 1).rev() {
            acc = acc.mul_unchecked(&delta);
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    fn degree_bound(&self) -> usize {
        self.layout.nilpotency
    }

    pub fn exp(&self) -> Jet {
        let v = self.value().exp();
        let mut t = Vec::with_capacity(self.degree_bound() + 1);
        let mut fact = 1.0;
        for k in 0..=self.degree_bound() {
            if k > 0 {
                fact *= k as f64;
            }
            t.push(v / fact);
        }
        self.compose(&t)
    }

    pub fn checked_ln(&self) -> Result<Jet, JetError> {
        let v = self.value();
        if v.is_nan() || v <= 0.0 {
            return Err(JetError::Domain { op: "log", value: v });
        }
        let mut t = vec![v.ln()];
        for k in 1..=self.degree_bound() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * v.powi(k as i32)));
        }
        Ok(self.compose(&t))
    }

    /// Real power with a fixed exponent. Integer exponents accept any nonzero value;
    /// other exponents need a strictly positive value.
    pub fn checked_powf(&self, p: f64) -> Result<Jet, JetError> {
        let v = self.value();
        let integral = p.fract() == 0.0;
        if v.is_nan() || (integral && v == 0.0 && p < 0.0) || (!integral && v <= 0.0) {
            return Err(JetError::Domain { op: "pow", value: v });
        }
        if integral && p >= 0.0 {
            return Ok(self.powi(p as u32));
        }
        let mut t = Vec::with_capacity(self.degree_bound() + 1);
        let mut c = 1.0;
        for k in 0..=self.degree_bound() {
            if k > 0 {
                c *= (p - (k as f64 - 1.0)) / k as f64;
            }
            t.push(c * v.powf(p - k as f64));
        }
        Ok(self.compose(&t))
    }

    pub fn checked_sqrt(&self) -> Result<Jet, JetError> {
        let v = self.value();
        if v.is_nan() || v <= 0.0 {
            if v == 0.0 && self.layout.num_vars() == 0 {
                return Ok(self.constant_like(0.0));
            }
            return Err(JetError::Domain { op: "sqrt", value: v });
        }
        self.checked_powf(0.5)
    }

    pub fn checked_recip(&self) -> Result<Jet, JetError> {
        let v = self.value();
        if v == 0.0 || v.is_nan() {
            return Err(JetError::Domain { op: "div", value: v });
        }
        let t: Vec<f64> = (0..=self.degree_bound())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / v.powi(k as i32 + 1)
            })
            .collect();
        Ok(self.compose(&t))
    }

    pub fn powi(&self, p: u32) -> Jet {
        let mut acc = self.constant_like(1.0);
        for _ in 0..p {
            acc = acc.mul_unchecked(self);
        }
        acc
    }

    /// Exact derivative along `var`. The highest-order coefficients of the result are
    /// unknown after truncation and come back as zero.
    pub fn derivative(&self, var: usize) -> Jet {
        let mut out = vec![0.0; self.coeffs.len()];
        let mut e = vec![0u8; self.layout.num_vars()];
        for (i, m) in self.layout.monomials.iter().enumerate() {
            if m[var] == 0 || self.coeffs[i] == 0.0 {
                continue;
            }
            e.copy_from_slice(m);
            e[var] -= 1;
            if let Some(k) = self.layout.index_of(&e) {
                out[k] += self.coeffs[i] * m[var] as f64;
            }
        }
        Jet {
            layout: self.layout.clone(),
            coeffs: out,
        }
    }

    /// Derivative with respect to directions outside group `keep`, returned as a jet over
    /// that group alone. `outer` holds exponents for every direction of this layout; the
    /// entries belonging to group `keep` are ignored.
    pub fn project(&self, outer: &[u8], keep: usize, target: &Arc<Layout>) -> Jet {
        let g = self.layout.groups[keep];
        let off = self.layout.offsets[keep];
        assert_eq!(target.num_vars(), g.vars, "projection target has wrong width");
        let mut fixed = outer.to_vec();
        fixed[off..off + g.vars].fill(0);
        let fact = multi_factorial(&fixed);
        let mut out = Jet::constant(target, 0.0);
        let mut e = fixed.clone();
        for (k, m) in target.monomials.iter().enumerate() {
            e[off..off + g.vars].copy_from_slice(m);
            out.coeffs[k] = self.coeff(&e) * fact;
        }
        out
    }
}

fn multi_factorial(e: &[u8]) -> f64 {
    e.iter()
        .map(|&d| (1..=d as u32).map(f64::from).product::<f64>())
        .product()
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        &self + &rhs
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.assert_layout(rhs);
        self.add_unchecked(rhs, 1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.assert_layout(rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        &self - &rhs
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.assert_layout(rhs);
        self.add_unchecked(rhs, -1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        &self * &rhs
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.assert_layout(rhs);
        self.mul_unchecked(rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

/// Scalars the dense linear algebra runs on: plain reals and jets.
pub trait Field: Clone + Sized {
    fn value(&self) -> f64;
    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Result<Self, JetError>;
    fn sqrt(&self) -> Result<Self, JetError>;
}

impl Field for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn zero_like(&self) -> f64 {
        0.0
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
            Err(JetError::Domain { op: "div", value: *o })
        } else {
            Ok(self / o)
        }
    }
    fn sqrt(&self) -> Result<f64, JetError> {
        if *self < 0.0 || self.is_nan() {
            Err(JetError::Domain { op: "sqrt", value: *self })
        } else {
            Ok(f64::sqrt(*self))
        }
    }
}

impl Field for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn zero_like(&self) -> Jet {
        self.constant_like(0.0)
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
    fn sqrt(&self) -> Result<Jet, JetError> {
        self.checked_sqrt()
    }
}

/// Dense row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Field> SquareMatrix<T> {
    pub fn from_rows(n: usize, data: Vec<T>) -> Result<Self, JetError> {
        if data.len() != n * n {
            return Err(JetError::Dimension {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SquareMatrix<U> {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let mut acc = self.get(i, 0).mul(&v[0]);
                for j in 1..self.n {
                    acc = acc.add(&self.get(i, j).mul(&v[j]));
                }
                acc
            })
            .collect()
    }

    /// Lower Cholesky factor without pivoting; a nonpositive pivot means the matrix is
    /// not positive definite.
    pub fn cholesky(&self) -> Result<Cholesky<T>, JetError> {
        let n = self.n;
        let mut l: Vec<Option<T>> = vec![None; n * n];
        for j in 0..n {
            let mut d = self.get(j, j).clone();
            for k in 0..j {
                let ljk = l[j * n + k].as_ref().expect("filled");
                d = d.sub(&ljk.mul(ljk));
            }
            if !(d.value() > 0.0) {
                return Err(JetError::NotPositiveDefinite {
                    index: j,
                    pivot: d.value(),
                });
            }
            let djj = d.sqrt()?;
            for i in (j + 1)..n {
                let mut s = self.get(i, j).clone();
                for k in 0..j {
                    let lik = l[i * n + k].as_ref().expect("filled");
                    let ljk = l[j * n + k].as_ref().expect("filled");
                    s = s.sub(&lik.mul(ljk));
                }
                l[i * n + j] = Some(s.div(&djj)?);
            }
            l[j * n + j] = Some(djj);
        }
        let zero = self.get(0, 0).zero_like();
        Ok(Cholesky {
            n,
            l: l.into_iter().map(|x| x.unwrap_or_else(|| zero.clone())).collect(),
        })
    }

    pub fn solve_spd(&self, rhs: &[T]) -> Result<Vec<T>, JetError> {
        self.cholesky()?.solve(rhs)
    }
}

/// `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Field> Cholesky<T> {
    pub fn lower(&self, i: usize, j: usize) -> &T {
        &self.l[i * self.n + j]
    }

    /// Solves `L z = rhs`.
    pub fn forward(&self, rhs: &[T]) -> Result<Vec<T>, JetError> {
        let n = self.n;
        if rhs.len() != n {
            return Err(JetError::Dimension {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut z: Vec<T> = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = rhs[i].clone();
            for (k, zk) in z.iter().enumerate() {
                s = s.sub(&self.lower(i, k).mul(zk));
            }
            z.push(s.div(self.lower(i, i))?);
        }
        Ok(z)
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>, JetError> {
        let n = self.n;
        let z = self.forward(rhs)?;
        let mut x: Vec<Option<T>> = vec![None; n];
        for i in (0..n).rev() {
            let mut s = z[i].clone();
            for k in (i + 1)..n {
                s = s.sub(&self.lower(k, i).mul(x[k].as_ref().expect("filled")));
            }
            x[i] = Some(s.div(self.lower(i, i))?);
        }
        Ok(x.into_iter().map(|v| v.expect("filled")).collect())
    }

    /// Quadratic form `vᵀ A⁻¹ v`.
    pub fn inverse_quadratic(&self, v: &[T]) -> Result<T, JetError> {
        let z = self.forward(v)?;
        let mut acc = z[0].mul(&z[0]);
        for zi in &z[1..] {
            acc = acc.add(&zi.mul(zi));
        }
        Ok(acc)
    }
}

/// Solves `m x = rhs` for symmetric positive definite `m`.
pub fn solve_spd<T: Field>(m: &SquareMatrix<T>, rhs: &[T]) -> Result<Vec<T>, JetError> {
    m.solve_spd(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_of_seeded_variable() {
        let l = Layout::uniform(1, 2).unwrap();
        let x = Jet::variable(&l, 3.0, 0);
        let sq = &x * &x;
        assert_eq!(sq.value(), 9.0);
        assert_eq!(sq.coeff(&[1]), 6.0);
        assert_eq!(sq.coeff(&[2]), 1.0);
    }

    #[test]
    fn geometric_series() {
        let l = Layout::uniform(1, 3).unwrap();
        let t = Jet::variable(&l, 0.0, 0);
        let one = t.constant_like(1.0);
        let f = one.checked_div(&(one.clone() - t)).unwrap();
        assert_eq!(f.coeffs(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn sqrt_quadratic_profile_matches_finite_differences() {
        // oracle: central differences of √(1+2s²) at s = 0.3, step 1e-5
        let f = |s: f64| (1.0 + 2.0 * s * s).sqrt();
        let h = 1e-5;
        let d1 = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);
        let l = Layout::uniform(1, 2).unwrap();
        let s = Jet::variable(&l, 0.3, 0);
        let j = (s.clone() * s * 2.0 + 1.0).checked_sqrt().unwrap();
        assert_relative_eq!(j.value(), 1.0862780491200215, epsilon = 1e-12);
        assert_relative_eq!(j.coeff(&[1]), d1, epsilon = 1e-9);
        assert_relative_eq!(j.coeff(&[1]), 0.6 / 1.18f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn elementary_functions() {
        let l = Layout::uniform(1, 4).unwrap();
        let four = Jet::constant(&l, 4.0);
        assert_eq!(four.checked_sqrt().unwrap().coeffs(), &[2.0, 0.0, 0.0, 0.0, 0.0]);
        let x = Jet::variable(&l, 0.0, 0);
        let e = x.exp();
        for (c, want) in e.coeffs().iter().zip([1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0]) {
            assert_relative_eq!(*c, want, epsilon = 1e-15);
        }
        let b2 = Jet::constant(&l, 0.25);
        assert_relative_eq!(b2.checked_powf(0.5).unwrap().value(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn log_of_exp_is_identity() {
        let l = Layout::uniform(2, 4).unwrap();
        let x = Jet::seeded(&l, 0.7, &[(0, 1.0), (1, -0.5)]);
        let back = x.exp().checked_ln().unwrap();
        for (a, b) in back.coeffs().iter().zip(x.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn domain_violations_report_value() {
        let l = Layout::uniform(1, 2).unwrap();
        let s = Jet::variable(&l, 0.0, 0);
        let one = s.constant_like(1.0);
        assert_eq!(
            one.checked_div(&s).unwrap_err(),
            JetError::Domain { op: "div", value: 0.0 }
        );
        let neg = Jet::constant(&l, -2.0);
        assert!(matches!(neg.checked_sqrt(), Err(JetError::Domain { op: "sqrt", .. })));
        assert!(matches!(neg.checked_ln(), Err(JetError::Domain { op: "log", .. })));
        assert!(matches!(neg.checked_powf(0.3), Err(JetError::Domain { op: "pow", .. })));
        assert_relative_eq!(neg.checked_powf(3.0).unwrap().value(), -8.0);
    }

    #[test]
    fn mixing_orders_is_an_error() {
        let a = Jet::variable(&Layout::uniform(1, 2).unwrap(), 1.0, 0);
        let b = Jet::variable(&Layout::uniform(1, 3).unwrap(), 1.0, 0);
        assert!(matches!(a.try_mul(&b), Err(JetError::LayoutMismatch { .. })));
        assert!(Layout::uniform(2, 5).is_err());
    }

    #[test]
    fn grouped_truncation_keeps_tensor_product_terms() {
        let l = Layout::grouped(&[Group { vars: 1, order: 2 }, Group { vars: 1, order: 4 }]).unwrap();
        assert_eq!(l.len(), 15);
        let u = Jet::variable(&l, 1.0, 0);
        let v = Jet::variable(&l, 1.0, 1);
        // (1+u)^3 (1+v)^5: u-degree capped at 2, v-degree at 4
        let p = u.powi(3) * v.powi(5);
        assert_eq!(p.coeff(&[2, 4]), 3.0 * 5.0);
        assert_eq!(p.partial(&[0, 0, 1]), 6.0 * 5.0);
        let target = Layout::uniform(1, 4).unwrap();
        let pv = p.project(&[1, 0], 1, &target);
        assert_eq!(pv.coeffs(), &[3.0, 15.0, 30.0, 30.0, 15.0]);
    }

    #[test]
    fn derivative_lowers_degree() {
        let l = Layout::uniform(2, 3).unwrap();
        let x = Jet::variable(&l, 2.0, 0);
        let y = Jet::variable(&l, -1.0, 1);
        let f = &(&x * &x) * &y; // x²y
        let fx = f.derivative(0); // 2xy
        assert_eq!(fx.value(), -4.0);
        assert_eq!(fx.partial(&[0]), -2.0);
        assert_eq!(fx.partial(&[1]), 4.0);
    }

    #[test]
    fn cholesky_solves_small_systems() {
        let id = SquareMatrix::from_fn(3, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(solve_spd(&id, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = SquareMatrix::from_rows(2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let x = solve_spd(&d, &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let bad = SquareMatrix::from_rows(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            bad.cholesky(),
            Err(JetError::NotPositiveDefinite { index: 1, .. })
        ));
    }
}
