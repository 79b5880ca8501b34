use proptest::prelude::*;

use super::*;
use crate::special::GaussLegendre;

fn u(m: usize) -> TransitionMatrix {
    TransitionMatrix::independence(m)
}

fn eye(m: usize) -> TransitionMatrix {
    TransitionMatrix::identity(m)
}

fn half_half(m: usize) -> TransitionMatrix {
    mix(&[(0.5, &u(m)), (0.5, &eye(m))]).unwrap()
}

fn max_diff(a: &TransitionMatrix, b: &TransitionMatrix) -> f64 {
    (a.entries() - b.entries()).amax()
}

fn cdf_families() -> Vec<CopulaSpec> {
    vec![
        CopulaSpec::independence(),
        CopulaSpec::frechet_m(),
        CopulaSpec::clayton(1.0).unwrap(),
        CopulaSpec::clayton(4.0).unwrap(),
        CopulaSpec::gumbel(2.0).unwrap(),
        CopulaSpec::marshall_olkin(0.5, 0.5).unwrap(),
        CopulaSpec::marshall_olkin(0.2, 0.9).unwrap(),
        CopulaSpec::mixture(&[
            (0.3, CopulaSpec::clayton(1.0).unwrap()),
            (0.7, CopulaSpec::gumbel(2.0).unwrap()),
        ])
        .unwrap(),
    ]
}

#[test]
fn cell_volume_examples() {
    let ind = CopulaSpec::independence();
    let m_spec = CopulaSpec::frechet_m();
    let mix_spec = CopulaSpec::mixture(&[(0.5, ind.clone()), (0.5, m_spec.clone())]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((cell_volume(&ind, i, j, 4).unwrap() - 1.0 / 16.0).abs() < 1e-16);
            let expected = if i == j { 0.25 } else { 0.0 };
            assert_eq!(cell_volume(&m_spec, i, j, 4).unwrap(), expected);
        }
        assert!((cell_volume(&mix_spec, i, i, 4).unwrap() - 5.0 / 32.0).abs() < 1e-16);
    }
    assert!(cell_volume(&ind, 4, 0, 4).is_err());
}

#[test]
fn discretize_examples() {
    let p = discretize(&CopulaSpec::independence(), 4).unwrap();
    assert!(p.entries().iter().all(|&x| x == 0.25));
    assert_eq!(discretize(&CopulaSpec::frechet_m(), 4).unwrap().entries(), eye(4).entries());
    let c = discretize(&CopulaSpec::clayton(1.0).unwrap(), 64).unwrap();
    assert!(c.row_sums().iter().all(|s| (s - 1.0).abs() <= 1e-12));
    assert_eq!(c.provenance().method, Construction::CdfDifference);
    assert_eq!(c.provenance().spec_id, "clayton(theta=1)");
    assert!(discretize(&CopulaSpec::independence(), 1).is_err());
    assert!(discretize(&CopulaSpec::independence(), MAX_RESOLUTION + 1).is_err());
}

#[test]
fn mixture_matrix_equals_mix_of_components() {
    let a = CopulaSpec::clayton(2.0).unwrap();
    let b = CopulaSpec::marshall_olkin(0.5, 0.5).unwrap();
    let spec = CopulaSpec::mixture(&[(0.25, a.clone()), (0.75, b.clone())]).unwrap();
    let direct = discretize(&spec, 16).unwrap();
    let pa = discretize(&a, 16).unwrap();
    let pb = discretize(&b, 16).unwrap();
    let combined = mix(&[(0.25, &pa), (0.75, &pb)]).unwrap();
    assert!(max_diff(&direct, &combined) < 1e-15);
    for i in 0..16 {
        for j in 0..16 {
            let vol = cell_volume(&spec, i, j, 16).unwrap();
            assert!((16.0 * vol - direct.get(i, j)).abs() < 1e-13);
        }
    }
}

#[test]
fn every_family_is_doubly_stochastic() {
    let mut specs = cdf_families();
    specs.push(CopulaSpec::student_t(0.5, 3.0).unwrap());
    specs.push(CopulaSpec::student_t(-0.7, 10.0).unwrap());
    for spec in &specs {
        for m in [7, 64] {
            let p = discretize(spec, m).unwrap();
            assert!(p.entries().iter().all(|&x| x >= 0.0));
            assert!(p.marginal_error() <= MARGINAL_TOL, "{spec} m={m}: {:e}", p.marginal_error());
            assert!((p.total_mass() - 1.0).abs() <= 1e-12);
            // every listed family is exchangeable
            let symmetric = !matches!(spec.family(), Family::MarshallOlkin { alpha, beta } if alpha != beta);
            if symmetric {
                assert!(p.max_asymmetry() <= 1e-12, "{spec}: {:e}", p.max_asymmetry());
            }
        }
    }
}

#[test]
fn singular_component_is_preserved() {
    // MO(0.5, 0.5) puts mass αβ/(α+β-αβ) = 1/3 on the curve u = v.
    let p = discretize(&CopulaSpec::marshall_olkin(0.5, 0.5).unwrap(), 128).unwrap();
    assert!(p.is_doubly_stochastic(1e-12));
    let diagonal: f64 = (0..128).map(|i| p.get(i, i)).sum::<f64>() / 128.0;
    assert!(diagonal > 1.0 / 3.0);
}

#[test]
fn aggregation_coherence() {
    for spec in cdf_families() {
        for m in [8, 32, 64] {
            let fine = discretize(&spec, 2 * m).unwrap();
            let coarse = discretize(&spec, m).unwrap();
            let merged = fine.coarsen().unwrap();
            assert!(max_diff(&merged, &coarse) <= 1e-12, "{spec} m={m}");
        }
    }
}

#[test]
fn fold_examples() {
    let p = discretize(&CopulaSpec::gumbel(2.0).unwrap(), 8).unwrap();
    assert!(max_diff(&fold(&u(8), &p).unwrap(), &u(8)) < 1e-15);
    assert!(max_diff(&fold(&eye(8), &p).unwrap(), &p) == 0.0);
    let h = half_half(4);
    let expected = mix(&[(0.75, &u(4)), (0.25, &eye(4))]).unwrap();
    assert!(max_diff(&fold(&h, &h).unwrap(), &expected) < 1e-15);
    assert!(matches!(fold(&u(4), &u(8)), Err(Error::ResolutionMismatch { left: 4, right: 8 })));
}

#[test]
fn fold_is_associative_and_distributive() {
    let m = 32;
    let a = discretize(&CopulaSpec::clayton(1.0).unwrap(), m).unwrap();
    let b = discretize(&CopulaSpec::gumbel(2.0).unwrap(), m).unwrap();
    let c = discretize(&CopulaSpec::marshall_olkin(0.5, 0.5).unwrap(), m).unwrap();
    let left = fold(&fold(&a, &b).unwrap(), &c).unwrap();
    let right = fold(&a, &fold(&b, &c).unwrap()).unwrap();
    assert!(max_diff(&left, &right) <= 1e-13);
    let bc = mix(&[(0.3, &b), (0.7, &c)]).unwrap();
    let lhs = fold(&a, &bc).unwrap();
    let rhs = mix(&[(0.3, &fold(&a, &b).unwrap()), (0.7, &fold(&a, &c).unwrap())]).unwrap();
    assert!(max_diff(&lhs, &rhs) <= 1e-13);
}

#[test]
fn power_examples() {
    let p = discretize(&CopulaSpec::clayton(2.0).unwrap(), 16).unwrap();
    assert_eq!(power(&p, 1).unwrap().entries(), p.entries());
    assert!(max_diff(&power(&u(16), 9).unwrap(), &u(16)) < 1e-15);
    let expected = mix(&[(0.75, &u(4)), (0.25, &eye(4))]).unwrap();
    assert!(max_diff(&power(&half_half(4), 2).unwrap(), &expected) < 1e-15);
    let mut seq = p.clone();
    for _ in 1..7 {
        seq = fold(&seq, &p).unwrap();
    }
    assert!(max_diff(&power(&p, 7).unwrap(), &seq) < 1e-14);
    assert!(power(&p, 0).is_err());
    assert!(power(&p, MAX_POWER + 1).is_err());
}

#[test]
fn mix_examples() {
    let p = discretize(&CopulaSpec::clayton(1.0).unwrap(), 8).unwrap();
    assert_eq!(mix(&[(1.0, &p)]).unwrap().entries(), p.entries());
    let h = half_half(4);
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(h.get(i, j), if i == j { 0.625 } else { 0.125 });
        }
    }
    assert!(matches!(mix(&[(0.6, &u(4)), (0.5, &eye(4))]), Err(Error::BadWeights { .. })));
    assert!(matches!(mix(&[(1.5, &u(4)), (-0.5, &eye(4))]), Err(Error::BadWeights { .. })));
    assert!(matches!(mix(&[(0.5, &u(4)), (0.5, &eye(8))]), Err(Error::ResolutionMismatch { .. })));
    assert!(mix(&[]).is_err());
}

#[test]
fn checkerboard_cdf_examples() {
    let ind = u(8);
    for &(a, b) in &[(0.3, 0.7), (0.01, 0.99), (0.5, 0.5), (0.123, 0.456)] {
        let pt = UnitSquarePoint::new(a, b).unwrap();
        assert!((ind.checkerboard_cdf(pt) - a * b).abs() < 1e-15);
    }
    let p = discretize(&CopulaSpec::gumbel(2.0).unwrap(), 16).unwrap();
    for &a in &[0.0, 0.1, 0.37, 0.5, 1.0] {
        let v = p.checkerboard_cdf(UnitSquarePoint::new(a, 1.0).unwrap());
        assert!((v - a).abs() < 1e-14);
    }
    // at grid nodes it reproduces the cumulative cell masses, i.e. the copula itself
    let spec = CopulaSpec::gumbel(2.0).unwrap();
    for (i, j) in [(3, 5), (8, 8), (15, 2)] {
        let pt = UnitSquarePoint::new(i as f64 / 16.0, j as f64 / 16.0).unwrap();
        let cum: f64 = (0..i).flat_map(|a| (0..j).map(move |b| (a, b))).map(|(a, b)| p.get(a, b)).sum::<f64>() / 16.0;
        assert!((p.checkerboard_cdf(pt) - cum).abs() < 1e-15);
        assert!((cum - spec.cdf(pt).unwrap()).abs() < 1e-14);
    }
}

/// Independent oracle: tensor Gauss–Legendre of the copula density over a cell.
fn density_cell_mass(spec: &CopulaSpec, i: usize, j: usize, m: usize) -> f64 {
    let rule = GaussLegendre::new(40);
    let h = 1.0 / m as f64;
    let (u0, v0) = (i as f64 * h, j as f64 * h);
    let mut acc = 0.0;
    for (a, wa) in rule.nodes.iter().zip(&rule.weights) {
        for (b, wb) in rule.nodes.iter().zip(&rule.weights) {
            let pt = UnitSquarePoint::new(u0 + 0.5 * h * (1.0 + a), v0 + 0.5 * h * (1.0 + b)).unwrap();
            acc += wa * wb * spec.density(pt).unwrap().value;
        }
    }
    acc * 0.25 * h * h
}

#[test]
fn student_t_cells_match_density_quadrature() {
    let spec = CopulaSpec::student_t(0.5, 3.0).unwrap();
    let m = 8;
    for i in 1..m - 1 {
        for j in 1..m - 1 {
            let vol = cell_volume(&spec, i, j, m).unwrap();
            let oracle = density_cell_mass(&spec, i, j, m);
            assert!((vol - oracle).abs() < 1e-11, "({i},{j}): {vol} vs {oracle}");
        }
    }
    // the quadrature route agrees with the CDF second difference as well
    let c = |a: f64, b: f64| spec.cdf(UnitSquarePoint::new(a, b).unwrap()).unwrap();
    let diff = (c(0.25, 0.5) - c(0.125, 0.5)) - (c(0.25, 0.375) - c(0.125, 0.375));
    assert!((cell_volume(&spec, 1, 3, 8).unwrap() - diff).abs() < 1e-12);
}

#[test]
fn student_t_before_and_after_balancing() {
    let spec = CopulaSpec::student_t(0.5, 3.0).unwrap();
    let m = 64;
    let raw = student_t_unbalanced(&spec, m).unwrap();
    let total: f64 = raw.iter().sum::<f64>() / m as f64;
    assert!((total - 1.0).abs() < 1e-8);
    for j in 0..m {
        let s: f64 = raw.column(j).iter().sum();
        assert!((s - 1.0).abs() < 1e-8, "column {j}: {s}");
    }
    let p = discretize(&spec, m).unwrap();
    assert!((p.total_mass() - 1.0).abs() < 1e-12);
    assert!(p.is_doubly_stochastic(1e-12));
    assert_eq!(p.provenance().method, Construction::Quadrature);
    // balancing only nudges the entries
    assert!((p.entries() - raw).amax() < 1e-10);
}

#[test]
fn balance_fixes_a_perturbed_kernel() {
    let p = discretize(&CopulaSpec::clayton(1.0).unwrap(), 16).unwrap();
    let mut a = p.entries().clone();
    a[(3, 4)] *= 1.001;
    a[(4, 3)] *= 1.001;
    let b = balance(a, 1e-12).unwrap();
    let q = TransitionMatrix::from_parts(b, "x".into(), Construction::Algebra);
    assert!(q.is_doubly_stochastic(1e-12));
}

#[test]
fn grid_file_round_trip_is_bitwise() {
    let p = discretize(&CopulaSpec::student_t(0.3, 4.0).unwrap(), 16).unwrap();
    let mut buf = Vec::new();
    write_grid(&p, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("m=16\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 17);
    let back = read_grid(buf.as_slice(), p.provenance().spec_id.as_str()).unwrap();
    assert_eq!(back.entries(), p.entries());
    assert_eq!(back.provenance().method, Construction::Imported);
}

#[test]
fn grid_file_errors() {
    assert!(matches!(read_grid("".as_bytes(), "x"), Err(Error::Parse(_))));
    assert!(matches!(read_grid("n=2\n".as_bytes(), "x"), Err(Error::Parse(_))));
    assert!(matches!(read_grid("m=2\n0.5 0.5\n".as_bytes(), "x"), Err(Error::Parse(_))));
    assert!(matches!(read_grid("m=2\n0.5 0.5\n0.5\n".as_bytes(), "x"), Err(Error::Parse(_))));
    assert!(matches!(read_grid("m=2\n0.5 0.5\n0.5 abc\n".as_bytes(), "x"), Err(Error::Parse(_))));
    assert!(matches!(read_grid("m=2\n0.9 0.5\n0.5 0.5\n".as_bytes(), "x"), Err(Error::InvalidArgument(_))));
    assert!(read_grid("m=2\n0.5 0.5\n0.5 0.5\n".as_bytes(), "x").is_ok());
}

fn any_cdf_family() -> impl Strategy<Value = CopulaSpec> {
    prop_oneof![
        (0.05f64..15.0).prop_map(|t| CopulaSpec::clayton(t).unwrap()),
        (1.0f64..10.0).prop_map(|b| CopulaSpec::gumbel(b).unwrap()),
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| CopulaSpec::marshall_olkin(a, b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn discretized_kernels_are_doubly_stochastic(spec in any_cdf_family(), m in 2usize..80) {
        let p = discretize(&spec, m).unwrap();
        prop_assert!(p.entries().iter().all(|&x| x >= 0.0));
        prop_assert!(p.marginal_error() <= MARGINAL_TOL, "{} m={} err={:e}", spec, m, p.marginal_error());
    }

    #[test]
    fn checkerboard_cdf_has_uniform_margins(spec in any_cdf_family(), a in 0.0f64..=1.0) {
        let p = discretize(&spec, 12).unwrap();
        let at = |u, v| p.checkerboard_cdf(UnitSquarePoint::new(u, v).unwrap());
        prop_assert!((at(a, 1.0) - a).abs() < 1e-13);
        prop_assert!((at(1.0, a) - a).abs() < 1e-13);
        prop_assert_eq!(at(a, 0.0), 0.0);
    }
}
