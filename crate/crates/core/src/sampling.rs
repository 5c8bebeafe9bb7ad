//! Seeded sampling of test points.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with `seed_from_u64`, so
//! the stream is fixed across platforms. Points are drawn sequentially; callers may
//! evaluate them in parallel afterwards.
//!
//! * `x` is drawn uniformly from the entry's box `[−w, w]ⁿ` and rejected until it lies in the
//!   entry's sample region and (when a profile is present) `b²` lies in the profile's `b²` range.
//! * `y` is uniform on the unit `a`-sphere (`y = L^{−T} w` with `a = L Lᵀ` and `w`
//!   uniform on the Euclidean sphere), scaled by a uniform factor in `[0.5, 2]`, and
//!   rejected while `|s| > s_fraction · b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::catalog::{AlphaBetaEntry, Assembled};
use crate::error::{Error, Result};
use crate::phi::PhiDomain;
use crate::riemann::{form_at, metric_at};

/// Rejections tolerated per run before giving up.
pub const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub index: usize,
    pub b2: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("rejection sampling exhausted after {rejections} rejections ({accepted} accepted)")]
    Exhausted { rejections: usize, accepted: usize },
    #[error(transparent)]
    Setup(#[from] Error),
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_sphere(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return w.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// `(b², y)` for an admissible `x`, or `None` if `x` must be rejected.
fn try_point(
    entry: &AlphaBetaEntry,
    domain: Option<&PhiDomain>,
    x: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Option<(f64, Vec<f64>)>> {
    if !entry.in_sample_region(x) {
        return Ok(None);
    }
    let a = match metric_at(entry.alpha.as_ref(), x) {
        Ok(a) => a,
        Err(_) => return Ok(None),
    };
    let Ok(chol) = a.cholesky() else {
        return Ok(None);
    };
    let Ok(b) = form_at(entry.beta.as_ref(), x) else {
        return Ok(None);
    };
    let b2 = chol.inverse_quadratic(&b)?;
    if !(b2 > 0.0) || domain.is_some_and(|d| !d.contains_b2(b2)) {
        return Ok(None);
    }
    let n = x.len();
    let w = unit_sphere(rng, n);
    let scale: f64 = rng.random_range(0.5..=2.0);
    // Lᵀ y = w
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = w[i];
        for (k, yk) in y.iter().enumerate().skip(i + 1) {
            s -= chol.lower(k, i) * yk;
        }
        y[i] = s / chol.lower(i, i);
    }
    for v in &mut y {
        *v *= scale;
    }
    if let Some(d) = domain {
        let beta: f64 = b.iter().zip(&y).map(|(p, q)| p * q).sum();
        if beta.abs() / scale > d.s_fraction * b2.sqrt() {
            return Ok(None);
        }
    }
    Ok(Some((b2, y)))
}

/// Draws `count` admissible `(x, y)` for the assembled selection, which must contain an
/// `(α, β)` pair.
pub fn draw_samples(
    selection: &Assembled,
    count: usize,
    seed: u64,
) -> std::result::Result<Vec<Sample>, SamplingError> {
    let entry = selection
        .alpha_beta
        .as_ref()
        .ok_or_else(|| Error::Parameter("sampling (x, y) needs an (α, β) pair".into()))?;
    let domain = selection.phi.as_ref().map(|p| p.model.domain());
    draw_for_entry(entry, domain.as_ref(), count, seed)
}

pub fn draw_for_entry(
    entry: &AlphaBetaEntry,
    domain: Option<&PhiDomain>,
    count: usize,
    seed: u64,
) -> std::result::Result<Vec<Sample>, SamplingError> {
    let mut rng = rng(seed);
    let n = entry.dim();
    let w = entry.half_width;
    let mut out = Vec::with_capacity(count);
    let mut rejections = 0;
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-w..=w)).collect();
        match try_point(entry, domain, &x, &mut rng)? {
            Some((_, y)) => out.push(Sample {
                index: out.len(),
                x,
                y,
            }),
            None => {
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(SamplingError::Exhausted {
                        rejections,
                        accepted: out.len(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `count` points `(b², s)` uniform over the profile domain.
pub fn draw_profile_points(domain: &PhiDomain, count: usize, seed: u64) -> Vec<ProfilePoint> {
    let mut rng = rng(seed);
    (0..count)
        .map(|index| {
            let b2 = rng.random_range(domain.b2_min..=domain.b2_max);
            let lim = domain.s_fraction * b2.sqrt();
            let s = rng.random_range(-lim..=lim);
            ProfilePoint { index, b2, s }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::parse_selector;
    use crate::riemann::alpha_norm;

    #[test]
    fn samples_are_reproducible_and_admissible() {
        let sel = parse_selector("ex72+ex63c0").unwrap().build(3).unwrap();
        let a = draw_samples(&sel, 20, 7).unwrap();
        let b = draw_samples(&sel, 20, 7).unwrap();
        assert_eq!(a, b);
        let entry = sel.alpha_beta.as_ref().unwrap();
        for s in &a {
            assert!(entry.admissible(&s.x));
            let n = alpha_norm(entry.alpha.as_ref(), &s.x, &s.y).unwrap();
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&n));
        }
        assert_ne!(a, draw_samples(&sel, 20, 8).unwrap());
    }

    #[test]
    fn ex73_samples_avoid_the_boundary() {
        let sel = parse_selector("ex73").unwrap().build(3).unwrap();
        for s in draw_samples(&sel, 200, 3).unwrap() {
            let t: f64 = s.x.iter().map(|v| v * v).sum();
            assert!(t <= crate::catalog::EX73_SAMPLE_LIMIT);
        }
    }

    #[test]
    fn impossible_region_exhausts() {
        let sel = parse_selector("flat(b=2:0:0)+ex61").unwrap().build(3).unwrap();
        assert!(matches!(
            draw_samples(&sel, 1, 0),
            Err(SamplingError::Exhausted { .. })
        ));
    }
}
