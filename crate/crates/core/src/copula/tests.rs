use proptest::prelude::*;

use super::*;

fn pt(u: f64, v: f64) -> UnitSquarePoint {
    UnitSquarePoint::new(u, v).unwrap()
}

fn clayton1() -> CopulaSpec {
    CopulaSpec::clayton(1.0).unwrap()
}

#[test]
fn cdf_examples() {
    let ind = CopulaSpec::independence();
    assert!((ind.cdf(pt(0.3, 0.7)).unwrap() - 0.21).abs() < 1e-15);
    assert!((clayton1().cdf(pt(0.5, 0.5)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(CopulaSpec::gumbel(2.0).unwrap().cdf(pt(0.3, 1.0)).unwrap(), 0.3);
    let mo = CopulaSpec::marshall_olkin(0.0, 0.0).unwrap();
    for &(u, v) in &[(0.2, 0.9), (0.5, 0.5), (0.77, 0.13)] {
        assert!((mo.cdf(pt(u, v)).unwrap() - u * v).abs() < 1e-15);
    }
}

#[test]
fn student_t_cdf_matches_high_precision_reference() {
    // Orthant identity for elliptical laws: C(1/2, 1/2) = 1/4 + asin(ρ)/(2π).
    let t = CopulaSpec::student_t(0.5, 3.0).unwrap();
    let orthant = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
    assert!((t.cdf(pt(0.5, 0.5)).unwrap() - orthant).abs() < 1e-10);
    // mpmath double integral of the bivariate t density (30 digits).
    assert!((t.cdf(pt(0.3, 0.7)).unwrap() - 0.259_640_419_013_408_9).abs() < 1e-10);
    let t2 = CopulaSpec::student_t(-0.3, 4.5).unwrap();
    assert!((t2.cdf(pt(0.1, 0.2)).unwrap() - 0.012_916_568_434_964_564).abs() < 1e-10);
    // Symmetric by construction.
    assert_eq!(t.cdf(pt(0.3, 0.7)).unwrap(), t.cdf(pt(0.7, 0.3)).unwrap());
}

#[test]
fn conditional_examples() {
    let ind = CopulaSpec::independence();
    assert_eq!(ind.conditional_cdf(0.4, 0.65).unwrap(), 0.65);
    assert!((clayton1().conditional_cdf(0.5, 0.5).unwrap() - 4.0 / 9.0).abs() < 1e-15);
    let m = CopulaSpec::frechet_m();
    assert_eq!(m.conditional_cdf(0.3, 0.5).unwrap(), 1.0);
    assert_eq!(m.conditional_cdf(0.3, 0.3).unwrap(), 1.0);
    assert_eq!(m.conditional_cdf(0.3, 0.2999).unwrap(), 0.0);
}

#[test]
fn conditional_rejects_bad_arguments() {
    let c = clayton1();
    assert!(c.conditional_cdf(0.0, 0.5).is_err());
    assert!(c.conditional_cdf(1.0, 0.5).is_err());
    assert!(c.conditional_cdf(0.5, 1.5).is_err());
    assert!(c.inverse_conditional(0.5, 0.5, 0.0).is_err());
    assert!(UnitSquarePoint::new(1.2, 0.0).is_err());
}

#[test]
fn density_examples() {
    let d = CopulaSpec::independence().density(pt(0.2, 0.9)).unwrap();
    assert_eq!(d, Density { value: 1.0, singular_part: false });
    let d = clayton1().density(pt(0.5, 0.5)).unwrap();
    assert!((d.value - 32.0 / 27.0).abs() < 1e-14);
    assert!(!d.singular_part);
    let d = CopulaSpec::frechet_m().density(pt(0.4, 0.6)).unwrap();
    assert_eq!(d, Density { value: 0.0, singular_part: true });
    assert!(CopulaSpec::marshall_olkin(0.5, 0.5).unwrap().density(pt(0.3, 0.6)).unwrap().singular_part);
    assert!(!CopulaSpec::marshall_olkin(0.0, 0.5).unwrap().density(pt(0.3, 0.6)).unwrap().singular_part);
}

#[test]
fn density_is_clamped_at_the_boundary() {
    for spec in [clayton1(), CopulaSpec::gumbel(3.0).unwrap(), CopulaSpec::student_t(0.5, 3.0).unwrap()] {
        for &(u, v) in &[(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.3)] {
            let d = spec.density(pt(u, v)).unwrap();
            assert!(d.value.is_finite() && d.value >= 0.0, "{spec} at ({u},{v})");
        }
    }
}

#[test]
fn inverse_examples() {
    let ind = CopulaSpec::independence();
    assert_eq!(ind.inverse_conditional(0.3, 0.81, 1e-12).unwrap(), 0.81);
    let v = clayton1().inverse_conditional(0.5, 4.0 / 9.0, 1e-12).unwrap();
    assert!((v - 0.5).abs() < 1e-12);
    let m = CopulaSpec::frechet_m();
    assert_eq!(m.inverse_conditional(0.3, 0.5, 1e-12).unwrap(), 0.3);
}

#[test]
fn inverse_returns_jump_location() {
    // MO(0.5, 0.5): the conditional law at u jumps at v = u from
    // 0.5·u^{1/2} to u^{1/2}.
    let mo = CopulaSpec::marshall_olkin(0.5, 0.5).unwrap();
    let u: f64 = 0.36;
    let inside = 0.5 * (0.5 * u.sqrt() + u.sqrt());
    let v = mo.inverse_conditional(u, inside, 1e-13).unwrap();
    assert!((v - u).abs() <= 1e-13, "{v}");
    // Mixture with the Fréchet bound has an atom at v = u.
    let mix = CopulaSpec::mixture(&[(0.5, CopulaSpec::independence()), (0.5, CopulaSpec::frechet_m())]).unwrap();
    let v = mix.inverse_conditional(0.4, 0.5, 1e-13).unwrap();
    assert!((v - 0.4).abs() <= 1e-13);
}

#[test]
fn bisection_reports_exhausted_iterations() {
    let g = CopulaSpec::gumbel(2.0).unwrap();
    // A target very close to zero keeps the bracket near 0 where halving stays exact.
    match g.inverse_conditional(0.9, 1e-300, 1e-320) {
        Err(Error::NoConvergence { bracket_width, .. }) => assert!(bracket_width > 1e-320),
        other => panic!("{other:?}"),
    }
}

fn mixed_second_difference(spec: &CopulaSpec, u: f64, v: f64, h: f64) -> f64 {
    let c = |a: f64, b: f64| spec.cdf(pt(a, b)).unwrap();
    (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h)
}

#[test]
fn densities_match_finite_differences_of_the_cdf() {
    let specs = [
        clayton1(),
        CopulaSpec::clayton(3.5).unwrap(),
        CopulaSpec::gumbel(2.0).unwrap(),
        CopulaSpec::gumbel(1.3).unwrap(),
        CopulaSpec::student_t(0.5, 3.0).unwrap(),
        CopulaSpec::student_t(-0.4, 7.0).unwrap(),
        CopulaSpec::marshall_olkin(0.3, 0.6).unwrap(),
    ];
    let points: [(f64, f64); 4] = [(0.2, 0.7), (0.5, 0.45), (0.8, 0.9), (0.1, 0.15)];
    for spec in &specs {
        for &(u, v) in &points {
            if let Family::MarshallOlkin { alpha, beta } = spec.family() {
                // stay away from the singular curve
                if (u.powf(*beta) - v.powf(*alpha)).abs() < 0.05 {
                    continue;
                }
            }
            let fd = mixed_second_difference(spec, u, v, 1e-4);
            let d = spec.density(pt(u, v)).unwrap().value;
            assert!((fd - d).abs() < 1e-5 * d.max(1.0), "{spec} at ({u},{v}): fd={fd} d={d}");
        }
    }
}

#[test]
fn conditionals_match_finite_differences_of_the_cdf() {
    let specs = [
        clayton1(),
        CopulaSpec::gumbel(2.0).unwrap(),
        CopulaSpec::student_t(0.5, 3.0).unwrap(),
        CopulaSpec::marshall_olkin(0.3, 0.6).unwrap(),
    ];
    let h = 1e-6;
    for spec in &specs {
        for &(u, v) in &[(0.2, 0.7), (0.5, 0.45), (0.85, 0.3)] {
            let fd = (spec.cdf(pt(u + h, v)).unwrap() - spec.cdf(pt(u - h, v)).unwrap()) / (2.0 * h);
            let h1 = spec.conditional_cdf(u, v).unwrap();
            assert!((fd - h1).abs() < 1e-7, "{spec} at ({u},{v}): fd={fd} h={h1}");
        }
    }
}

#[test]
fn extreme_parameters_do_not_overflow() {
    let c = CopulaSpec::clayton(200.0).unwrap();
    let v = c.cdf(pt(1e-3, 2e-3)).unwrap();
    assert!(v > 0.0 && v <= 1e-3);
    let g = CopulaSpec::gumbel(400.0).unwrap();
    let v = g.cdf(pt(1e-12, 0.5)).unwrap();
    assert!(v > 0.0 && v <= 1e-12);
    assert!(g.conditional_cdf(1e-12, 0.5).unwrap().is_finite());
}

// ---- properties -------------------------------------------------------------

fn plain_family() -> impl Strategy<Value = CopulaSpec> {
    prop_oneof![
        Just(CopulaSpec::independence()),
        Just(CopulaSpec::frechet_m()),
        (0.05f64..12.0).prop_map(|t| CopulaSpec::clayton(t).unwrap()),
        (1.0f64..8.0).prop_map(|b| CopulaSpec::gumbel(b).unwrap()),
        (-0.9f64..0.9, 2.1f64..30.0).prop_map(|(r, n)| CopulaSpec::student_t(r, n).unwrap()),
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| CopulaSpec::marshall_olkin(a, b).unwrap()),
    ]
}

fn any_copula() -> impl Strategy<Value = CopulaSpec> {
    prop_oneof![
        3 => plain_family(),
        1 => (plain_family(), plain_family(), 0.0f64..=1.0)
            .prop_map(|(a, b, w)| CopulaSpec::mixture(&[(w, a), (1.0 - w, b)]).unwrap()),
    ]
}

/// Families without atoms in the conditional law, with moderate dependence.
fn atomless() -> impl Strategy<Value = CopulaSpec> {
    prop_oneof![
        Just(CopulaSpec::independence()),
        (0.05f64..12.0).prop_map(|t| CopulaSpec::clayton(t).unwrap()),
        (1.0f64..3.0).prop_map(|b| CopulaSpec::gumbel(b).unwrap()),
        (-0.9f64..0.9, 2.1f64..30.0).prop_map(|(r, n)| CopulaSpec::student_t(r, n).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn copula_boundary_conditions(spec in any_copula(), u in 0.0f64..=1.0) {
        prop_assert_eq!(spec.cdf(pt(u, 0.0)).unwrap(), 0.0);
        prop_assert_eq!(spec.cdf(pt(0.0, u)).unwrap(), 0.0);
        prop_assert!((spec.cdf(pt(u, 1.0)).unwrap() - u).abs() < 1e-10);
        prop_assert!((spec.cdf(pt(1.0, u)).unwrap() - u).abs() < 1e-10);
    }

    #[test]
    fn rectangles_have_nonnegative_mass(
        spec in any_copula(),
        a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0,
    ) {
        let (u1, u2) = (a.min(b), a.max(b));
        let (v1, v2) = (c.min(d), c.max(d));
        let f = |u, v| spec.cdf(pt(u, v)).unwrap();
        let vol = f(u2, v2) - f(u1, v2) - f(u2, v1) + f(u1, v1);
        prop_assert!(vol >= -1e-12, "{} volume {}", spec, vol);
    }

    #[test]
    fn conditional_is_monotone(spec in any_copula(), u in 0.001f64..0.999) {
        let mut prev = 0.0;
        for k in 0..=1000 {
            let h = spec.conditional_cdf(u, k as f64 / 1000.0).unwrap();
            prop_assert!(h >= prev - 1e-15 && h <= 1.0 + 1e-15, "{} at v={}", spec, k);
            prev = h;
        }
        prop_assert_eq!(spec.conditional_cdf(u, 0.0).unwrap(), 0.0);
        prop_assert_eq!(spec.conditional_cdf(u, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn inverse_round_trips(spec in atomless(), u in 0.02f64..0.98, p in 0.02f64..0.98) {
        let tol = 1e-12;
        let v = spec.inverse_conditional(u, p, tol).unwrap();
        let back = spec.conditional_cdf(u, v).unwrap();
        prop_assert!((back - p).abs() <= 10.0 * tol, "{}: u={} p={} v={} back={}", spec, u, p, v, back);
    }

    #[test]
    fn inverse_is_leftmost_crossing(spec in any_copula(), u in 0.02f64..0.98, p in 0.0f64..=1.0) {
        let tol = 1e-10;
        let v = spec.inverse_conditional(u, p, tol).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        if p > 0.0 {
            prop_assert!(spec.conditional_cdf(u, (v + tol).min(1.0)).unwrap() >= p - 1e-12);
            if v > 2.0 * tol {
                prop_assert!(spec.conditional_cdf(u, v - 2.0 * tol).unwrap() <= p + 1e-12);
            }
        }
    }

    #[test]
    fn mixture_is_linear(a in plain_family(), b in plain_family(), w in 0.0f64..=1.0,
                         u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let mix = CopulaSpec::mixture(&[(w, a.clone()), (1.0 - w, b.clone())]).unwrap();
        let direct = w * a.cdf(pt(u, v)).unwrap() + (1.0 - w) * b.cdf(pt(u, v)).unwrap();
        prop_assert!((mix.cdf(pt(u, v)).unwrap() - direct).abs() <= 1e-14);
    }

    #[test]
    fn exchangeable(spec in any_copula(), u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let symmetric = match spec.family() {
            Family::MarshallOlkin { alpha, beta } => alpha == beta,
            Family::Mixture { components, .. } => components.iter().all(|c| match c.family() {
                Family::MarshallOlkin { alpha, beta } => alpha == beta,
                _ => true,
            }),
            _ => true,
        };
        if symmetric {
            let d = spec.cdf(pt(u, v)).unwrap() - spec.cdf(pt(v, u)).unwrap();
            prop_assert!(d.abs() <= 1e-12);
        }
    }
}
