use douglas_core::catalog::{constant_curvature_alpha, parse_selector, Assembled};
use douglas_core::finsler::{
    douglas_tensor, douglas_tensor_fd_oracle, fundamental_tensor, projective_deviation,
    spray_douglas_form, spray_contracted, spray_first_principles, fitted_k, GeneralABMetric, FD_ORACLE_STEP,
};
use douglas_core::phi::{ExprPhi, PhiDomain};
use douglas_core::riemann::{alpha_spray, FnForm};
use douglas_core::sampling::{draw_samples, Sample};
use douglas_core::{Expr, Jet};
use std::sync::Arc;

fn assemble(sel: &str) -> (Assembled, GeneralABMetric) {
    let a = parse_selector(sel).unwrap().build(3).unwrap();
    let m = a.metric().unwrap();
    (a, m)
}

fn samples(a: &Assembled, count: usize, seed: u64) -> Vec<Sample> {
    draw_samples(a, count, seed).unwrap()
}

#[test]
fn douglas_pairs_vanish() {
    for sel in ["ex72+ex63c0", "ex71(delta2=0)+ex61", "ex71(delta2=0)+ex62", "sphsym+ex61", "sphsym+lem22", "flat+ex64"] {
        let (a, m) = assemble(sel);
        assert!(a.expected_douglas(), "{sel}");
        let mut worst: f64 = 0.0;
        for s in samples(&a, 100, 42) {
            worst = worst.max(douglas_tensor(&m, &s.x, &s.y).unwrap().sup_norm);
        }
        assert!(worst < 1e-6, "{sel}: {worst}");
    }
}

#[test]
fn perturbed_profile_breaks_douglas() {
    let (a, m) = assemble("ex72+perturbed");
    assert!(!a.expected_douglas());
    let hits = samples(&a, 100, 42)
        .iter()
        .filter(|s| douglas_tensor(&m, &s.x, &s.y).unwrap().sup_norm > 1e-3)
        .count();
    assert!(hits >= 95, "{hits}");
}

#[test]
fn mismatched_c_is_not_expected_douglas() {
    let (a, _) = assemble("ex72+ex61");
    assert!(!a.expected_douglas());
    let (a, _) = assemble("ex71+ex61");
    assert!(!a.expected_douglas());
}

#[test]
fn riemannian_and_berwald_baselines() {
    for kappa in [1.0, -1.0, 0.5] {
        let alpha = Arc::new(constant_curvature_alpha(3, kappa));
        let beta = Arc::new(FnForm::new(|x: &[Jet]| {
            Ok(vec![&x[0].constant_like(0.2) + &x[1], x[0].constant_like(0.1), x[2].clone()])
        }));
        let phi = Arc::new(ExprPhi::new("one", Expr::Const(1.0), PhiDomain::default()));
        let m = GeneralABMetric::new(alpha.clone(), beta, phi);
        let (a, _) = assemble("sphsym+one");
        for s in samples(&a, 20, 1) {
            let x: Vec<f64> = s.x.iter().map(|v| v * 0.5).collect();
            let d = douglas_tensor(&m, &x, &s.y).unwrap();
            assert!(d.sup_norm < 1e-9, "κ={kappa}: {}", d.sup_norm);
            let g = spray_first_principles(&m, &x, &s.y).unwrap().g;
            let ga = alpha_spray(alpha.as_ref(), &x, &s.y).unwrap();
            for (p, q) in g.iter().zip(&ga) {
                assert!((p - q).abs() < 1e-10 * (1.0 + q.abs()));
            }
        }
    }
    for sel in ["flat+ex61(h=1)", "flat+ex62(h=0.5)", "flat+perturbed"] {
        let (a, m) = assemble(sel);
        for s in samples(&a, 30, 2) {
            assert!(douglas_tensor(&m, &s.x, &s.y).unwrap().sup_norm < 1e-9, "{sel}");
        }
    }
}

#[test]
fn three_spray_formulas_agree() {
    for sel in ["ex71+ex62", "ex72+ex64", "ex73+lem22", "ex72+one", "sphsym+ex63"] {
        let (a, m) = assemble(sel);
        for s in samples(&a, 10, 9) {
            let fp = spray_first_principles(&m, &s.x, &s.y).unwrap().g;
            let contracted = spray_contracted(&m, &s.x, &s.y).unwrap().g;
            let norm = fp.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (p, q) in fp.iter().zip(&contracted) {
                assert!((p - q).abs() < 1e-8 * norm.max(1e-300), "{sel}: {p} vs {q}");
            }
            // homogeneity of degree two
            let y2: Vec<f64> = s.y.iter().map(|v| 1.7 * v).collect();
            let g2 = spray_contracted(&m, &s.x, &y2).unwrap().g;
            for (p, q) in contracted.iter().zip(&g2) {
                assert!((1.7f64.powi(2) * p - q).abs() < 1e-10 * norm);
            }
        }
    }
}

#[test]
fn douglas_form_matches_first_principles() {
    for sel in ["ex72+ex63c0", "ex71(delta2=0)+ex62", "sphsym+lem22"] {
        let (a, m) = assemble(sel);
        let params = a.phi.as_ref().unwrap().params.clone().unwrap();
        for s in samples(&a, 20, 4) {
            let k = fitted_k(&m, &s.x).unwrap();
            let df = spray_douglas_form(&m, &params, k, &s.x, &s.y).unwrap().spray.g;
            let fp = spray_first_principles(&m, &s.x, &s.y).unwrap().g;
            let norm = fp.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (p, q) in fp.iter().zip(&df) {
                assert!((p - q).abs() < 1e-8 * norm, "{sel}: {p} vs {q}");
            }
            assert!(projective_deviation(&m, &s.x, &s.y).unwrap() < 1e-8);
        }
    }
    let (a, m) = assemble("ex72+perturbed");
    let params = a.phi.as_ref().unwrap().params.clone().unwrap();
    let s = &samples(&a, 1, 4)[0];
    let k = fitted_k(&m, &s.x).unwrap();
    assert!(spray_douglas_form(&m, &params, k, &s.x, &s.y).is_err());
    let (a2, m2) = assemble("ex72+ex61");
    let s = &samples(&a2, 1, 4)[0];
    let p2 = a2.phi.as_ref().unwrap().params.clone().unwrap();
    assert!(spray_douglas_form(&m2, &p2, fitted_k(&m2, &s.x).unwrap(), &s.x, &s.y).is_err());
    let _ = m;
}

#[test]
fn projective_deviation_detects_perturbation() {
    let (a, m) = assemble("ex72+perturbed");
    let devs: Vec<f64> = samples(&a, 100, 42)
        .iter()
        .map(|s| projective_deviation(&m, &s.x, &s.y).unwrap())
        .collect();
    assert!(devs.iter().cloned().fold(0.0, f64::max) > 1e-3);
    assert!(devs.iter().filter(|&&d| d > 1e-8).count() >= 95);
}

#[test]
fn jet_douglas_matches_finite_differences() {
    for sel in ["ex71+ex61(h=0.5)", "ex72+perturbed", "ex73+ex62", "sphsym+lem22"] {
        let (a, m) = assemble(sel);
        for s in samples(&a, 5, 13) {
            let jet = douglas_tensor(&m, &s.x, &s.y).unwrap();
            let fd = douglas_tensor_fd_oracle(&m, &s.x, &s.y, FD_ORACLE_STEP).unwrap();
            assert!(jet.max_abs_difference(&fd) < 1e-3, "{sel}: {}", jet.max_abs_difference(&fd));
        }
    }
}

#[test]
fn fundamental_tensor_positive_definite_on_samples() {
    for sel in ["ex71+ex62", "ex72+ex63c0", "ex73+ex64", "sphsym+lem23"] {
        let (a, m) = assemble(sel);
        for s in samples(&a, 20, 3) {
            let g = fundamental_tensor(&m, &s.x, &s.y).unwrap();
            assert!(g.cholesky().is_ok(), "{sel}");
        }
    }
}
