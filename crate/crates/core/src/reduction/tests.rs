use super::*;
use crate::geometry::standard_structure;
use crate::sampling::{random_geometry, rng_from_seed};
use proptest::prelude::*;

fn span(d: usize, vs: &[&[f64]]) -> Subspace {
    Subspace::from_vectors(d, &vs.iter().map(|x| DVector::from_column_slice(x)).collect::<Vec<_>>()).unwrap()
}

fn pt(pairs: &[(&str, f64)]) -> Binding {
    Binding::from_pairs(pairs.iter().map(|(k, v)| (k.to_string(), *v)))
}

fn constraint(kind: Kind, n: usize, phis: &[&str]) -> ConstraintManifold {
    let c = phis.iter().map(|s| Expression::parse(s).unwrap()).collect();
    ConstraintManifold::new(kind, n, c, Binding::new()).unwrap()
}

#[test]
fn symplectic_three_plane() {
    let g = standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap();
    // chart order q1, q2, p1, p2
    let w = Subspace::coordinate(4, &[0, 2, 1]);
    let r = linear_reduce(&g, &w).unwrap();
    assert_eq!(r.orthogonal, Subspace::coordinate(4, &[1]));
    assert_eq!((r.quotient_dim, r.expected_dim), (2, 2));
    assert_eq!(r.reduced_kind, Some(Kind::Symplectic));
    assert!(r.passed(), "{:?}", r.failed_checks());

    let l = Subspace::coordinate(4, &[0, 1]);
    let p = project_through_reduction(&g, &l, &w).unwrap();
    assert_eq!(p.intersection_dim, 2);
    assert_eq!(p.projected.dim(), 1);
    assert!(p.lagrangian);
    // the class of ∂q1 spans the image
    let e = r.quotient.project(&DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]));
    assert!(p.projected.contains_vector(&e.column(0).into_owned()));
}

#[test]
fn identity_reductions() {
    let g = standard_structure(Kind::Cosymplectic, 1, &Binding::new()).unwrap();
    let r = linear_reduce(&g, &Subspace::full(3)).unwrap();
    assert_eq!((r.verticality_case, r.quotient_dim, r.expected_dim), (Case::Vertical, 3, 3));
    assert!(r.orthogonal.is_zero() && r.passed());

    let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", 0.3)])).unwrap();
    let r = linear_reduce(&g, &Subspace::full(3)).unwrap();
    assert_eq!((r.verticality_case, r.quotient_dim, r.expected_dim), (Case::Vertical, 3, 3));
    assert_eq!(r.reduced_kind, Some(Kind::Contact));

    let line = span(3, &[&[1.0, 0.0, 0.3]]);
    let p = project_through_reduction(&g, &line, &Subspace::full(3)).unwrap();
    assert!(p.lagrangian);
    assert_eq!(p.projected.dim(), 1);
}

#[test]
fn cocontact_tz_horizontal_reduces_to_a_point() {
    let g = standard_structure(Kind::Cocontact, 1, &pt(&[("p1", -0.4)])).unwrap();
    let w = span(4, &[&[1.0, 0.0, -0.4, 0.0]]);
    let r = linear_reduce(&g, &w).unwrap();
    assert_eq!(r.verticality_case, Case::TzHorizontal);
    assert_eq!((r.quotient_dim, r.expected_dim), (0, 0));
    assert!(r.reduced.is_none() && r.passed());
}

#[test]
fn reduction_errors() {
    let g = standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap();
    let iso = Subspace::coordinate(4, &[0]);
    assert!(matches!(linear_reduce(&g, &iso), Err(GeomError::NotCoisotropic { .. })));
    let w = Subspace::coordinate(4, &[0, 2, 1]);
    let not_lag = Subspace::coordinate(4, &[0, 2]);
    assert!(matches!(project_through_reduction(&g, &not_lag, &w), Err(GeomError::NotLagrangian(_))));

    // a coisotropic plane tilted off both ℋ and the Reeb line
    let g = standard_structure(Kind::Cosymplectic, 1, &Binding::new()).unwrap();
    let w = span(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 1.0]]);
    assert!(matches!(linear_reduce(&g, &w), Err(GeomError::CaseUnsupported { .. })));

    // ℋ of a contact structure is coisotropic but not integral
    let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", 0.0)])).unwrap();
    let h = g.horizontal();
    assert!(g.classify(&h).unwrap().coisotropic);
    assert!(matches!(linear_reduce(&g, &h), Err(GeomError::HypothesisViolated(_))));
}

#[test]
fn tangent_spaces() {
    let s3 = sphere(1);
    let t = s3.tangent_space_at(&[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(t, Subspace::coordinate(4, &[1, 2, 3]));
    assert!(matches!(s3.tangent_space_at(&[1.0, 1.0, 0.0, 0.0]), Err(GeomError::NotOnManifold { .. })));
    let leaf = constraint(Kind::Cosymplectic, 1, &["t - 0"]);
    assert_eq!(leaf.tangent_space_at(&[0.2, -0.7, 0.0]).unwrap(), Subspace::coordinate(3, &[0, 1]));
    let twice = constraint(Kind::Symplectic, 1, &["q1", "2*q1"]);
    assert!(matches!(
        twice.tangent_space_at(&[0.0, 0.5]),
        Err(GeomError::DegenerateConstraints { rank: 1, count: 2 })
    ));
}

#[test]
fn sphere_reduction_report() {
    let r = sphere(1).reduce_at(&[1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(r.quotient_dim, 2);
    assert!(r.passed());
    assert!(r.point.as_ref().unwrap().get("q1") == Some(1.0));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["quotient_dim"], 2);
    assert_eq!(json["verticality_case"], "symplectic");
}

#[test]
fn hopf_generator_at_base_point() {
    let v = hopf_generator(&[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(v.as_slice(), &[0.0, 0.0, -1.0, 0.0]);
}

#[test]
fn complex_projective_spaces() {
    let mut rng = rng_from_seed(3);
    let one = cp_example(1, 100, &mut rng).unwrap();
    assert!(one.passed(), "{one:?}");
    assert!(one.quotient_dims.iter().all(|&m| m == 2));
    let two = cp_example(2, 50, &mut rng).unwrap();
    assert!(two.passed() && two.quotient_dims[0] == 4);
    assert!(matches!(cp_example(0, 1, &mut rng), Err(GeomError::InvalidDimension(_))));
}

#[test]
fn involutivity_on_codim_one_and_two() {
    let mut rng = rng_from_seed(5);
    let s3 = sphere(1);
    for _ in 0..20 {
        let v = gaussian_vector(&mut rng, 4);
        let x = &v / v.norm();
        assert!(involutivity_residual(&s3, x.as_slice(), 1e-4).unwrap() <= 1e-5);
    }
    let leaf = constraint(Kind::Cosymplectic, 1, &["t"]);
    assert!(involutivity_residual(&leaf, &[0.3, 0.1, 0.0], 1e-4).unwrap() <= 1e-12);
    // product of two circles: a rank-2 orthogonal distribution
    let torus = constraint(Kind::Symplectic, 3, &["q1^2 + p1^2 - 1", "q2^2 + p2^2 - 1"]);
    let x = [0.6, 0.8, 0.3, 0.8, -0.6, 0.1];
    let coarse = involutivity_residual(&torus, &x, 1e-3).unwrap();
    let fine = involutivity_residual(&torus, &x, 1e-4).unwrap();
    assert!(fine <= 0.2 * coarse + 1e-10, "{coarse} {fine}");
    // non-commuting constraints span a non-involutive distribution
    let skew = constraint(Kind::Symplectic, 2, &["q1 + q2^2", "p1 + q2*p2"]);
    assert!(involutivity_residual(&skew, &[-0.25, 0.5, 0.0, 0.0], 1e-4).unwrap() > 1e-2);
}

/// Random Lagrangian of a symplectic form on R^m, built greedily.
fn random_form_lagrangian(rng: &mut SeededRng, m_form: &DMatrix<f64>) -> Subspace {
    let m = m_form.nrows();
    let full = Subspace::full(m);
    let mut l = Subspace::zero(m);
    for _ in 0..m / 2 {
        let room = crate::geometry::form_orthogonal(m_form, &full, &l);
        let v = room.basis() * gaussian_vector(rng, room.dim());
        l = l.sum(&Subspace::from_vectors(m, &[v]).unwrap()).unwrap();
    }
    l
}

#[test]
fn lagrangians_containing_the_orthogonal() {
    let mut rng = rng_from_seed(17);
    let g = standard_structure(Kind::Symplectic, 3, &Binding::new()).unwrap();
    for _ in 0..100 {
        let w = random_case_subspace(&mut rng, &g, Case::Symplectic);
        let r = linear_reduce(&g, &w).unwrap();
        let Some(red) = r.reduced.as_ref() else {
            assert_eq!(r.quotient_dim, 0);
            continue;
        };
        let lam = random_form_lagrangian(&mut rng, red.two_form());
        let lifted = if lam.dim() == 0 {
            r.orthogonal.clone()
        } else {
            r.orthogonal.sum(&Subspace::from_columns(&(&r.quotient.representatives * lam.basis()))).unwrap()
        };
        let p = project_through_reduction(&g, &lifted, &w).unwrap();
        assert!(p.lagrangian);
        assert_eq!(2 * p.projected.dim(), r.quotient_dim);
        assert!(p.projected.max_principal_angle(&lam) <= 1e-8);
    }
}

fn kinds() -> impl Strategy<Value = Kind> {
    prop_oneof![
        Just(Kind::Symplectic),
        Just(Kind::Cosymplectic),
        Just(Kind::Contact),
        Just(Kind::Cocontact),
        Just(Kind::Shs)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn quotient_dimensions_match_closed_forms(seed in any::<u64>(), kind in kinds(), n in 1usize..4, pick in 0usize..4) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let cases = Case::reducible(kind);
        let case = cases[pick % cases.len()];
        let w = random_case_subspace(&mut rng, &g, case);
        let r = linear_reduce(&g, &w).unwrap();
        prop_assert_eq!(r.verticality_case, case);
        prop_assert_eq!(r.quotient_dim, r.expected_dim);
        prop_assert!(r.passed(), "{:?}", r.failed_checks());
        prop_assert!(representative_independence(&g, &r, &mut rng) <= 1e-9);
        if let Some(red) = &r.reduced {
            prop_assert_eq!(red.dim(), r.quotient_dim);
            prop_assert_eq!(Some(red.kind()), r.reduced_kind);
        }
    }

    #[test]
    fn projections_are_lagrangian(seed in any::<u64>(), kind in kinds(), n in 1usize..4, pick in 0usize..4) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let cases = Case::reducible(kind);
        let case = cases[pick % cases.len()];
        let w = random_case_subspace(&mut rng, &g, case);
        let l = random_lagrangian(&mut rng, &g);
        let p = project_through_reduction(&g, &l, &w).unwrap();
        prop_assert!(p.lagrangian, "{} {} dim {} expected {}", kind, case, p.projected.dim(), p.expected_dim);
    }

    #[test]
    fn tilted_subspaces_are_unsupported(seed in any::<u64>(), kind in prop_oneof![Just(Kind::Cosymplectic), Just(Kind::Contact), Just(Kind::Cocontact), Just(Kind::Shs)], n in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let w = random_case_subspace(&mut rng, &g, Case::Other);
        prop_assert!(g.classify(&w).unwrap().coisotropic);
        prop_assert_eq!(detect_case(&g, &w), Case::Other);
        let is_unsupported = matches!(linear_reduce(&g, &w), Err(GeomError::CaseUnsupported { .. }));
        prop_assert!(is_unsupported);
    }
}
