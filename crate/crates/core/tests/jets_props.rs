use douglas_core::jets::{Jet, Layout, SquareMatrix};
use douglas_core::Expr;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn polynomials_are_reproduced_exactly(
        coeffs in prop::collection::vec(-2.0f64..2.0, 15),
        p in prop::array::uniform2(-1.0f64..1.0),
        d in prop::array::uniform2(-0.5f64..0.5),
    ) {
        // all monomials x^i y^j with i + j ≤ 4
        let monos: Vec<(i32, i32)> = (0..=4).flat_map(|t| (0..=t).map(move |i| (i, t - i))).collect();
        let poly = |x: f64, y: f64| -> f64 {
            monos.iter().zip(&coeffs).map(|(&(i, j), c)| c * x.powi(i) * y.powi(j)).sum()
        };
        let l = Layout::uniform(2, 4).unwrap();
        let (x, y) = (Jet::variable(&l, p[0], 0), Jet::variable(&l, p[1], 1));
        let mut acc = x.constant_like(0.0);
        for (&(i, j), &c) in monos.iter().zip(&coeffs) {
            acc += &(&x.powi(i as u32) * &y.powi(j as u32)).scale(c);
        }
        let taylor: f64 = (0..l.len())
            .map(|k| {
                let e = l.monomial(k);
                acc.coeffs()[k] * d[0].powi(e[0] as i32) * d[1].powi(e[1] as i32)
            })
            .sum();
        let exact = poly(p[0] + d[0], p[1] + d[1]);
        prop_assert!((taylor - exact).abs() < 1e-12 * (1.0 + exact.abs()));
    }

    #[test]
    fn spd_solves_are_accurate(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = SquareMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
        });
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.mul_vec(&x);
        let got = a.solve_spd(&b).unwrap();
        for (u, v) in got.iter().zip(&x) {
            prop_assert!((u - v).abs() < 1e-11);
        }
    }
}

/// Random expression in `(x, y)` whose every node is defined on all of `ℝ²`.
fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.2) {
        return match rng.random_range(0..3) {
            0 => Expr::var(0),
            1 => Expr::var(1),
            _ => Expr::Const(rng.random_range(-1.5..1.5)),
        };
    }
    let a = random_expr(rng, depth - 1);
    let pos = |e: Expr| 1.0 + e.clone() * e;
    match rng.random_range(0..8) {
        0 => a + random_expr(rng, depth - 1),
        1 => a * random_expr(rng, depth - 1),
        2 => a - random_expr(rng, depth - 1),
        3 => (0.3 * a).exp(),
        4 => pos(a).sqrt(),
        5 => pos(a).ln(),
        6 => random_expr(rng, depth - 1) / pos(a),
        _ => pos(a).pow(rng.random_range(-1.5..1.5)),
    }
}

#[test]
fn random_compositions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let l = Layout::uniform(2, 2).unwrap();
    let mut checked = 0;
    while checked < 1000 {
        let e = random_expr(&mut rng, 4);
        let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let jet = e.eval_jet(&[Jet::variable(&l, p[0], 0), Jet::variable(&l, p[1], 1)]).unwrap();
        let f = |x: f64, y: f64| e.eval(&[x, y]).unwrap();
        let h = 1e-3;
        let scale = 1.0 + jet.value().abs();
        for v in 0..2 {
            let at = |t: f64| if v == 0 { f(p[0] + t, p[1]) } else { f(p[0], p[1] + t) };
            let d1 = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            let d2 = (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h))
                / (12.0 * h * h);
            let (j1, j2) = (jet.partial(&[v]), jet.partial(&[v, v]));
            assert!((d1 - j1).abs() <= 1e-6 * (scale + j1.abs()), "{e:?} ∂{v}: {d1} vs {j1}");
            assert!((d2 - j2).abs() <= 1e-6 * (scale + j2.abs()), "{e:?} ∂²{v}: {d2} vs {j2}");
        }
        checked += 1;
    }
}
