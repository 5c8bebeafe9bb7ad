use douglas_core::catalog::{parse_selector, PhiEntry, PhiSpec};
use douglas_core::phi::generator::Anchors;
use douglas_core::phi::{
    aux_quantities, lemma22_reduction, pde02_from_partials, pde02_residual, pde02cor_from_partials,
    pde_ratio_pair, positivity_check, spherical_to_general, zeta, ExprPhi, GeneratorPhi,
    GeneratorSpec, Lemma23Phi, PdeParams, PhiDomain, PhiModel, PositivityMode,
};
use douglas_core::Expr;

fn phi(sel: &str) -> PhiEntry {
    parse_selector(sel).unwrap().phi.unwrap().build().unwrap()
}

fn b2() -> Expr {
    Expr::var(0)
}

#[test]
fn closed_form_values() {
    assert_eq!(phi("ex61(h=1)").model.value(0.4, 0.3).unwrap(), 1.3);
    let v = phi("ex62").model.value(0.5, 0.3).unwrap();
    assert!((v - 0.59f64.sqrt() / 0.5).abs() < 1e-15);
    assert!((v - 1.536229).abs() < 1e-6);
    let v = phi("ex63c0").model.value(0.25, 0.2).unwrap();
    assert!((v - (2.0 + 0.04 / 0.25)).abs() < 1e-15);
}

#[test]
fn pde_residuals_vanish_on_grids() {
    for sel in ["ex61", "ex61(h=1)", "ex62", "ex62(h=0.5)", "ex63", "ex63(c=2,h=0.3)", "ex63c0", "ex64", "ex64(h=1)", "lem22", "one"] {
        let e = phi(sel);
        let params = e.params.as_ref().unwrap();
        let grid = PhiDomain::default().grid(40, 40);
        assert_eq!(grid.len(), 1600);
        let worst = grid
            .iter()
            .map(|&(b2, s)| pde02_residual(e.model.as_ref(), params, b2, s).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "{sel}: {worst}");
        if sel.starts_with("ex61") {
            assert!(worst < 1e-15, "{sel}: {worst}");
        }
    }
    let e = phi("perturbed");
    let params = e.params.as_ref().unwrap();
    let r = pde02_residual(e.model.as_ref(), params, 0.3, 0.2).unwrap();
    assert!(r.abs() > 1e-4);
}

#[test]
fn ratio_form_agrees_with_pde() {
    for sel in ["ex62", "ex63", "ex64", "lem22"] {
        let e = phi(sel);
        let params = e.params.as_ref().unwrap();
        for &(b2, s) in &PhiDomain::default().grid(7, 7) {
            let p = e.model.partials(b2, s).unwrap();
            let (lhs, rhs) = pde_ratio_pair(&p, &params.at(b2).unwrap());
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "{sel} ({b2}, {s}): {lhs} vs {rhs}");
        }
    }
}

#[test]
fn margin_derivative_identity() {
    // ∂_s(φ − sφ₂) = −sφ₂₂, checked by central differences
    for sel in ["ex62(h=0.3)", "ex64", "lem23"] {
        let e = phi(sel);
        for &(b2, s) in &[(0.3, 0.2), (0.6, -0.4), (0.1, 0.05)] {
            let h = 1e-4;
            let m = |t: f64| e.model.partials(b2, t).unwrap().first_margin();
            let fd = (m(s + h) - m(s - h)) / (2.0 * h);
            let p = e.model.partials(b2, s).unwrap();
            assert!((fd + s * p.phi22).abs() < 1e-7, "{sel}: {fd} vs {}", -s * p.phi22);
        }
    }
}

#[test]
fn spherical_parameter_map() {
    let test_phi = ExprPhi::new(
        "probe",
        1.0 + 0.3 * Expr::var(1) + Expr::var(0) * Expr::var(1).pow(2.0) + Expr::var(1).pow(3.0).exp() * 0.1,
        PhiDomain::default(),
    );
    for (f, eta) in [(0.0, 0.0), (0.7, -0.2), (-1.3, 2.5)] {
        let params = spherical_to_general(&Expr::Const(f), &Expr::Const(eta));
        for &(b2, s) in &PhiDomain::default().grid(6, 6) {
            let p = test_phi.partials(b2, s).unwrap();
            let general = pde02_from_partials(&p, &params.at(b2).unwrap());
            let spherical = pde02cor_from_partials(&p, f, eta);
            assert!((general + b2.powf(2.5) * spherical).abs() < 1e-12, "f={f} η={eta}");
        }
    }
    // at f = η = 0 the map is the Randers-type (1, 0, 0)
    let p = test_phi.partials(0.4, 0.2).unwrap();
    let zero = spherical_to_general(&Expr::Const(0.0), &Expr::Const(0.0));
    let a = pde02_from_partials(&p, &zero.at(0.4).unwrap());
    let b = pde02_from_partials(&p, &PdeParams::randers_type().at(0.4).unwrap());
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn lemma22_classification() {
    let r = lemma22_reduction(phi("lem22(iota1=2,iota2=1.5)").model.as_ref(), 0.4, &[0.1, 0.2, -0.3, 0.5]).unwrap();
    assert!(r.riemannian_type);
    assert!((r.iota1 - 2.0).abs() < 1e-10 && (r.iota2 - 1.5).abs() < 1e-14);
    let r = lemma22_reduction(phi("ex61(h=1)").model.as_ref(), 0.4, &[0.1, 0.2, -0.3, 0.5]).unwrap();
    assert!(!r.riemannian_type);
}

#[test]
fn catalog_profiles_are_positive_on_their_grids() {
    for sel in ["ex61", "ex61(h=1)", "ex62", "ex62(h=0.5)", "ex63", "ex63c0", "ex64", "lem22", "lem23", "one"] {
        let e = phi(sel);
        let grid = e.model.domain().grid(20, 20);
        let r = positivity_check(e.model.as_ref(), &grid, PositivityMode::Full).unwrap();
        assert!(r.all_pass && r.min_margin > 0.0, "{sel}: {}", r.min_margin);
    }
}

fn generator(big_phi: Expr, params: PdeParams, anchor: Option<f64>) -> GeneratorPhi {
    let mut spec = GeneratorSpec::new(big_phi, Expr::Const(0.0), params);
    spec.anchors = Anchors { b2: anchor, ..Anchors::default() };
    GeneratorPhi::new("generator", spec)
}

/// Compares a generator profile to a closed form through `φ − sφ₂` and through
/// `φ(s)/s − φ(s′)/s′`.
fn compare(gen: &GeneratorPhi, closed: &dyn PhiModel, label: &str) {
    let grid = PhiDomain::default().grid(8, 8);
    for &(b2, s) in &grid {
        let g = gen.partials(b2, s).unwrap();
        let c = closed.partials(b2, s).unwrap();
        assert!((g.first_margin() - c.first_margin()).abs() < 1e-8, "{label} margin ({b2}, {s})");
        if s.abs() > 1e-3 {
            let sp = 0.3 * b2.sqrt();
            let dg = g.phi / s - gen.value(b2, sp).unwrap() / sp;
            let dc = c.phi / s - closed.value(b2, sp).unwrap() / sp;
            assert!((dg - dc).abs() < 1e-6, "{label} φ/s ({b2}, {s}): {dg} vs {dc}");
        }
        let target = gen.spec.margin_target(b2, s).unwrap();
        assert!((g.first_margin() - target).abs() < 1e-8, "{label} margin target");
    }
}

#[test]
fn generator_reproduces_randers_type() {
    let gen = generator(Expr::var(0).sqrt(), PdeParams::randers_type(), None);
    compare(&gen, phi("ex61").model.as_ref(), "ex61");
}

#[test]
fn generator_reproduces_square_root_family() {
    let z = Expr::var(0);
    let gen = generator((z.clone() / (1.0 - z)).sqrt(), PdeParams::randers_type(), None);
    compare(&gen, phi("ex62").model.as_ref(), "ex62");
    let p = gen.partials(0.5, 0.3).unwrap();
    assert!((p.first_margin() - 1.0 / 0.59f64.sqrt()).abs() < 1e-10);
}

#[test]
fn generator_reproduces_polynomial_family() {
    for c in [0.0, 0.5, 2.0] {
        let z = Expr::var(0);
        let gen = generator((1.0 + z.clone()) * z.sqrt(), PdeParams::constant(c, 0.0, 0.0), Some(1.0));
        let closed = phi(&format!("ex63(c={c})"));
        compare(&gen, closed.model.as_ref(), &format!("ex63 c={c}"));
        let params = PdeParams::constant(c, 0.0, 0.0);
        for &(b2, s) in &[(0.2, 0.1), (0.7, -0.5)] {
            assert!(pde02_residual(&gen, &params, b2, s).unwrap().abs() < 1e-6);
        }
    }
}

#[test]
fn zeta_closed_forms() {
    let z = Expr::var(0);
    let s = GeneratorSpec::new(z.clone().sqrt(), Expr::Const(0.0), PdeParams::randers_type());
    for &(b2, sv) in &[(0.3, 0.1), (0.7, 0.6)] {
        assert!((zeta(&s, b2, sv).unwrap() - (b2 - sv * sv)).abs() < 1e-14);
    }
    let c = 0.4;
    let mut s = GeneratorSpec::new(z.clone().sqrt(), Expr::Const(0.0), PdeParams::constant(c, 0.0, 0.0));
    s.anchors.b2 = Some(0.5);
    let k = 0.5f64.powf(1.0 - c);
    for &(b2, sv) in &[(0.3f64, 0.1), (0.7, 0.6)] {
        let expect = (b2 - sv * sv) * b2.powf(c - 1.0) * k;
        assert!((zeta(&s, b2, sv).unwrap() - expect).abs() < 1e-10);
    }
    // (c, μ, ν) of the exponential family, anchored at b² → 0 with E = I = 1
    let ex64 = phi("ex64").params.unwrap();
    let mut s = GeneratorSpec::new(z.clone().sqrt(), Expr::Const(0.0), ex64);
    s.anchors = Anchors { b2: Some(1e-12), exp_scale: 1.0, inner_offset: 1.0, ..Anchors::default() };
    for &(b2, sv) in &[(0.3, 0.1), (0.7, 0.6), (0.5, 0.0)] {
        let expect = (b2 - sv * sv) * (1.0 - b2) / (1.0 + b2 - sv * sv);
        let got = zeta(&s, b2, sv).unwrap();
        assert!((got - expect).abs() < 1e-9, "({b2}, {sv}): {got} vs {expect}");
    }
}

#[test]
fn lemma23_round_trip() {
    let cases = [
        (Expr::Const(0.1), Expr::Const(0.2), Expr::Const(1.0), 2.0 * b2().pow(-0.5)),
        (Expr::Const(0.3), Expr::Const(0.0), Expr::Const(1.0), 3.0 * b2().pow(-0.5)),
        (0.2 * b2(), Expr::Const(-0.4), Expr::Const(0.7), 1.5 * b2().pow(-0.5)),
    ];
    for (i3, i4, i5, i6) in cases {
        let m = Lemma23Phi::new(i3, i4, i5, i6);
        for &(b2, s) in &PhiDomain::default().grid(8, 8) {
            let psi = aux_quantities(&m, b2, s).unwrap().psi;
            let target = m.target_psi(b2, s).unwrap();
            assert!((psi - target).abs() < 1e-8, "({b2}, {s}): {psi} vs {target}");
        }
    }
    let e = phi("lem23");
    assert!(matches!(e.spec, PhiSpec::Lem23 { .. }) && e.params.is_none());
}
