use douglas_core::catalog::{example71, example72, example73, parse_selector, AlphaBetaEntry};
use douglas_core::riemann::{
    alpha_spray, christoffel, covariant_derivative, decompose_beta, fit_condition03, Condition03Outcome,
};
use douglas_core::sampling::draw_for_entry;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn entries() -> Vec<AlphaBetaEntry> {
    vec![
        example71(3, 1.0, 1.0, 0.1, None).unwrap(),
        example71(3, 1.0, 1.0, 0.0, None).unwrap(),
        example71(3, -0.3, 0.7, 0.05, Some(vec![0.2, -0.1, 0.4])).unwrap(),
        example72(3, 1.0).unwrap(),
        example72(3, -0.5).unwrap(),
        example73(3).unwrap(),
        parse_selector("sphsym").unwrap().alpha_beta.unwrap().build(3).unwrap(),
    ]
}

#[test]
fn fits_recover_closed_forms_at_fifty_points() {
    for e in entries() {
        for s in draw_for_entry(&e, None, 50, 11).unwrap() {
            let expect = e.expected_fit(&s.x).unwrap();
            let Condition03Outcome::Fit(fit) =
                fit_condition03(e.alpha.as_ref(), e.beta.as_ref(), &s.x).unwrap()
            else {
                panic!("{}: no fit at {:?}", e.id(), s.x)
            };
            let scale = fit.lambda.abs() + fit.tau.abs() * fit.b2;
            assert!(fit.residual_norm < 1e-10 * scale.max(1.0), "{} residual {}", e.id(), fit.residual_norm);
            assert!(fit.closedness_norm < 1e-10, "{} closedness {}", e.id(), fit.closedness_norm);
            assert!(rel(fit.b2, expect.b2) < 1e-12, "{} b2", e.id());
            assert!(rel(fit.k, expect.k) < 1e-8, "{} k {} vs {}", e.id(), fit.k, expect.k);
            if expect.c != 0.0 {
                assert!(rel(fit.c, expect.c) < 1e-8, "{} c {} vs {}", e.id(), fit.c, expect.c);
            } else {
                assert!(fit.c.abs() < 1e-10, "{} c {}", e.id(), fit.c);
            }
        }
    }
}

#[test]
fn covariant_derivatives_match_closed_forms() {
    for e in entries() {
        for s in draw_for_entry(&e, None, 30, 5).unwrap() {
            let cov = covariant_derivative(e.alpha.as_ref(), e.beta.as_ref(), &s.x).unwrap();
            let expect = e.expected_covariant(&s.x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let (u, v) = (cov.get(i, j), expect.get(i, j));
                    assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()), "{} ({i},{j}): {u} vs {v}", e.id());
                }
            }
        }
    }
}

#[test]
fn example72_b2_fixture() {
    let e = example72(3, 1.0).unwrap();
    let d = decompose_beta(e.alpha.as_ref(), e.beta.as_ref(), &[0.5, 0.0, 0.0]).unwrap();
    assert!((d.b2 - (-0.5f64).exp()).abs() < 1e-14);
    assert!((d.b2 - 0.60653).abs() < 1e-5);
}

#[test]
fn flat_specialization_of_example71() {
    // κ = 0, a = 0: β̃ = δ₁⟨x,y⟩ and b̃² = δ₁²|x|²
    let e = example71(3, 0.0, 2.0, 0.5, Some(vec![0.0; 3])).unwrap();
    let x = [0.3, -0.2, 0.4];
    let t: f64 = x.iter().map(|v| v * v).sum();
    let d = decompose_beta(e.alpha.as_ref(), e.beta.as_ref(), &x).unwrap();
    assert!((d.b2 - (4.0 * t - 0.5)).abs() < 1e-14);
    let scale = ((4.0 * t - 0.5) / (4.0 * t)).sqrt();
    for i in 0..3 {
        assert!((d.b_lower[i] - 2.0 * x[i] * scale).abs() < 1e-14);
    }
}

#[test]
fn christoffel_symbols_are_symmetric_and_match_conformal_formula() {
    let e = example72(3, 1.0).unwrap();
    for s in draw_for_entry(&e, None, 100, 3).unwrap() {
        let g = christoffel(e.alpha.as_ref(), &s.x).unwrap();
        let t: f64 = s.x.iter().map(|v| v * v).sum();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(g.get(i, j, k), g.get(i, k, j));
                    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    let expect = -(s.x[k] * d(i, j) + s.x[j] * d(i, k) - s.x[i] * d(j, k)) / t;
                    assert!((g.get(i, j, k) - expect).abs() < 1e-12);
                }
            }
        }
        let sp = alpha_spray(e.alpha.as_ref(), &s.x, &s.y).unwrap();
        assert_eq!(sp.len(), 3);
    }
}
