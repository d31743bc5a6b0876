use super::*;
use crate::linalg::SPAN_ANGLE_TOL;
use crate::sampling::*;
use proptest::prelude::*;

fn pt(pairs: &[(&str, f64)]) -> Binding {
    Binding::from_pairs(pairs.iter().map(|(k, v)| (k.to_string(), *v)))
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn span(d: usize, vs: &[&[f64]]) -> Subspace {
    Subspace::from_vectors(d, &vs.iter().map(|x| v(x)).collect::<Vec<_>>()).unwrap()
}

fn close(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).amax() <= 1e-12
}

#[test]
fn darboux_forms() {
    let g = standard_structure(Kind::Symplectic, 1, &Binding::new()).unwrap();
    assert_eq!(g.two_form(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", 0.5)])).unwrap();
    assert_eq!(g.eta().unwrap(), &v(&[-0.5, 0.0, 1.0]));
    let g = standard_structure(Kind::Shs, 1, &pt(&[("a1", 0.0), ("b1", 0.0)])).unwrap();
    assert_eq!(g.eta().unwrap(), &v(&[0.0, 0.0, 1.0]));
    assert!(matches!(standard_structure(Kind::Contact, 1, &Binding::new()), Err(GeomError::MissingCoordinate(_))));
    assert!(matches!(standard_structure(Kind::Cosymplectic, 0, &Binding::new()), Err(GeomError::InvalidDimension(_))));
    assert!(matches!(standard_structure(Kind::Shs, 1, &pt(&[("a1", 0.0)])), Err(GeomError::MissingCoordinate(_))));
}

#[test]
fn musical_examples() {
    let g = standard_structure(Kind::Symplectic, 1, &Binding::new()).unwrap();
    assert_eq!(g.musical(Direction::Flat, &v(&[1.0, 0.0])).unwrap(), v(&[0.0, 1.0]));
    for p in [0.0, 0.5, -2.0] {
        let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", p)])).unwrap();
        assert!(close(&g.musical(Direction::Sharp, g.eta().unwrap()).unwrap(), &v(&[0.0, 0.0, 1.0])));
    }
    let g = standard_structure(Kind::Shs, 1, &pt(&[("a1", 1.0), ("b1", 0.0)])).unwrap();
    assert_eq!(g.flat(&v(&[0.0, 0.0, 1.0])), v(&[1.0, 0.0, 1.0]));
    assert!(matches!(g.musical(Direction::Flat, &v(&[1.0])), Err(GeomError::DimensionMismatch { .. })));
}

#[test]
fn shs_musical_table() {
    let (a, b) = (0.7, -0.3);
    let g = standard_structure(Kind::Shs, 1, &pt(&[("a1", a), ("b1", b)])).unwrap();
    // flat(∂q) = dp + a λ, flat(∂p) = −dq + b λ, flat(∂z) = λ
    assert!(close(&g.flat(&v(&[1.0, 0.0, 0.0])), &v(&[a * a, 1.0 + a * b, a])));
    assert!(close(&g.flat(&v(&[0.0, 1.0, 0.0])), &v(&[-1.0 + b * a, b * b, b])));
    // sharp(dq) = −∂p + b∂z, sharp(dp) = ∂q − a∂z, sharp(dz) = ∂z + a∂p − b∂q
    assert!(close(&g.sharp(&v(&[1.0, 0.0, 0.0])), &v(&[0.0, -1.0, b])));
    assert!(close(&g.sharp(&v(&[0.0, 1.0, 0.0])), &v(&[1.0, 0.0, -a])));
    assert!(close(&g.sharp(&v(&[0.0, 0.0, 1.0])), &v(&[-b, a, 1.0])));
    assert!(close(&g.reeb().unwrap(), &v(&[0.0, 0.0, 1.0])));
    let h = g.horizontal();
    assert!(h.contains_vector(&v(&[1.0, 0.0, -a])) && h.contains_vector(&v(&[0.0, 1.0, -b])));
}

#[test]
fn reeb_fields() {
    let g = standard_structure(Kind::Cocontact, 1, &pt(&[("p1", 0.4)])).unwrap();
    assert!(close(&g.reeb_t().unwrap(), &v(&[0.0, 0.0, 0.0, 1.0])));
    assert!(close(&g.reeb_z().unwrap(), &v(&[0.0, 0.0, 1.0, 0.0])));
    let g = standard_structure(Kind::Cosymplectic, 2, &Binding::new()).unwrap();
    assert!(close(&g.reeb().unwrap(), &v(&[0.0, 0.0, 0.0, 0.0, 1.0])));
    assert!(standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap().reeb().is_none());
}

#[test]
fn degenerate_structures_are_rejected() {
    let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    // θ = dq vanishes on ker Ω = ⟨∂t⟩
    let r = LinearGeometry::from_forms(Kind::Cosymplectic, 1, m.clone(), Some(v(&[1.0, 0.0, 0.0])), None);
    assert!(matches!(r, Err(GeomError::SingularStructure(_))));
    assert!(LinearGeometry::from_forms(Kind::Cosymplectic, 1, m, Some(v(&[0.0, 0.0, 2.0])), None).is_ok());
    let mut dl = DMatrix::zeros(3, 3);
    dl[(0, 2)] = 1.0;
    dl[(2, 0)] = -1.0;
    assert!(matches!(LinearGeometry::shs(1, &[0.0], &[0.0], dl), Err(GeomError::SingularStructure(_))));
}

#[test]
fn jacobi_pairs_match_local_forms() {
    // cosymplectic: Λ = ∂q∧∂p, E = 0, ker ♯_Λ = ⟨dt⟩
    let g = standard_structure(Kind::Cosymplectic, 1, &Binding::new()).unwrap();
    let jp = g.jacobi_pair();
    let mut expect = DMatrix::zeros(3, 3);
    expect[(0, 1)] = 1.0;
    expect[(1, 0)] = -1.0;
    assert!(max_abs(&(&jp.lambda - &expect)) <= 1e-14);
    assert_eq!(jp.e_field, DVector::zeros(3));
    let ker = Subspace::from_columns(&linalg::null_space(&jp.lambda.transpose(), RANK_RTOL));
    assert_eq!(ker, span(3, &[&[0.0, 0.0, 1.0]]));
    // ♯_Λ(dq) = Λ(dq,·) = ∂p and ♯_Λ(dp) = −∂q; the opposite slot gives −∂p, ∂q
    assert!(close(&jp.sharp(&v(&[1.0, 0.0, 0.0])), &v(&[0.0, 1.0, 0.0])));
    assert!(close(&(&jp.lambda * v(&[1.0, 0.0, 0.0])), &v(&[0.0, -1.0, 0.0])));

    // contact: Λ = ∂p∧∂q + p ∂p∧∂z, E = −∂z, ker ♯_Λ = ⟨η⟩
    for p in [0.0, 0.8] {
        let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", p)])).unwrap();
        let jp = g.jacobi_pair();
        let mut expect = DMatrix::zeros(3, 3);
        expect[(1, 0)] = 1.0;
        expect[(0, 1)] = -1.0;
        expect[(1, 2)] = p;
        expect[(2, 1)] = -p;
        assert!(max_abs(&(&jp.lambda - &expect)) <= 1e-14);
        assert!(close(&jp.e_field, &v(&[0.0, 0.0, -1.0])));
        let ker = Subspace::from_columns(&linalg::null_space(&jp.lambda.transpose(), RANK_RTOL));
        assert_eq!(ker, span(3, &[g.eta().unwrap().as_slice()]));
    }

    // SHS: Λ = ∂q∧∂p + (a∂p − b∂q)∧∂z
    let (a, b) = (0.6, -1.1);
    let g = standard_structure(Kind::Shs, 1, &pt(&[("a1", a), ("b1", b)])).unwrap();
    let jp = g.jacobi_pair();
    let mut expect = DMatrix::zeros(3, 3);
    expect[(0, 1)] = 1.0;
    expect[(1, 0)] = -1.0;
    expect[(1, 2)] = a;
    expect[(2, 1)] = -a;
    expect[(0, 2)] = -b;
    expect[(2, 0)] = b;
    assert!(max_abs(&(&jp.lambda - &expect)) <= 1e-14);

    // symplectic: ♯_Λ and ♯_ω differ by the slot sign and share their image
    let g = standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap();
    let jp = g.jacobi_pair();
    assert!(max_abs(&(jp.lambda.transpose() + g.sharp_matrix())) <= 1e-14);
    assert_eq!(linalg::rank(&jp.lambda, RANK_RTOL), 4);
}

#[test]
fn kernels_of_sharp_lambda_per_kind() {
    let mut rng = rng_from_seed(11);
    for kind in Kind::ALL {
        for n in 1..=3 {
            let g = random_geometry(&mut rng, kind, n);
            let jp = g.jacobi_pair();
            let ker = Subspace::from_columns(&linalg::null_space(&jp.lambda.transpose(), RANK_RTOL));
            let forms: Vec<DVector<f64>> = g.one_forms().into_iter().cloned().collect();
            assert_eq!(ker, Subspace::from_vectors(g.dim(), &forms).unwrap(), "{kind}");
            let image = Subspace::from_columns(&jp.lambda.transpose());
            assert_eq!(image, g.horizontal(), "{kind}");
            assert!(max_abs(&(&jp.lambda + jp.lambda.transpose())) <= 1e-12);
        }
    }
}

#[test]
fn lambda_orthogonal_examples() {
    let g = standard_structure(Kind::Cosymplectic, 1, &Binding::new()).unwrap();
    let o = g.lambda_orthogonal(&span(3, &[&[0.0, 0.0, 1.0]])).unwrap();
    assert_eq!(o, span(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]));
    assert_eq!(o, g.horizontal());

    let g = standard_structure(Kind::Symplectic, 1, &Binding::new()).unwrap();
    let line = span(2, &[&[1.0, 0.0]]);
    assert_eq!(g.lambda_orthogonal(&line).unwrap(), line);

    let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", 0.0)])).unwrap();
    let full = Subspace::full(3);
    let o = g.lambda_orthogonal(&full).unwrap();
    assert_eq!(o.dim(), 0);
    let ker = Subspace::from_columns(&linalg::null_space(&g.lambda_matrix().transpose(), RANK_RTOL));
    for delta in [full, span(3, &[&[1.0, 0.0, 0.0]]), span(3, &[&[0.0, 0.0, 1.0]])] {
        let o = g.lambda_orthogonal(&delta).unwrap();
        let lost = ker.intersect(&delta.annihilator()).unwrap().dim();
        assert_eq!(o.dim(), 3 - delta.dim() - lost);
    }
    assert!(matches!(g.lambda_orthogonal(&Subspace::full(2)), Err(GeomError::DimensionMismatch { .. })));
}

#[test]
fn classification_examples() {
    let g = standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap();
    let r = g.classify(&Subspace::coordinate(4, &[0, 1])).unwrap();
    assert!(r.lagrangian && r.isotropic && r.coisotropic && r.lagrangian_by_forms);

    let p0 = 0.7;
    let g = standard_structure(Kind::Contact, 1, &pt(&[("p1", p0)])).unwrap();
    let r = g.classify(&span(3, &[&[1.0, 0.0, p0]])).unwrap();
    assert!(r.lagrangian && r.horizontal && r.isotropic && r.lagrangian_by_forms);
    assert_eq!(r.dim, 1);
    let brute = form_orthogonal(g.two_form(), &g.horizontal(), &span(3, &[&[1.0, 0.0, p0]]));
    assert_eq!(brute, span(3, &[&[1.0, 0.0, p0]]));

    // tangent space of S³ at (1,0,0,0)
    let g = standard_structure(Kind::Symplectic, 2, &Binding::new()).unwrap();
    let t = Subspace::coordinate(4, &[1, 2, 3]);
    let r = g.classify(&t).unwrap();
    assert!(r.coisotropic && !r.isotropic && !r.lagrangian);
    assert_eq!(4 - r.dim, 1);
    assert_eq!(r.orthogonal, Subspace::coordinate(4, &[2]));
}

#[test]
fn cosymplectic_sum_identity_can_fail_off_the_leaf() {
    let g = standard_structure(Kind::Cosymplectic, 1, &Binding::new()).unwrap();
    let a = span(3, &[&[1.0, 0.0, 1.0]]);
    let b = span(3, &[&[0.0, 1.0, 1.0]]);
    let lhs = g.lambda_orthogonal(&a.sum(&b).unwrap()).unwrap();
    let rhs = g.lambda_orthogonal(&a).unwrap().intersect(&g.lambda_orthogonal(&b).unwrap()).unwrap();
    assert_eq!((lhs.dim(), rhs.dim()), (1, 2));
    assert!(rhs.contains(&lhs));
}

#[test]
fn shs_compatibility_detection() {
    let params = Binding::new();
    let cos = ShsCoefficients::constant(&[0.0], &[0.0]).unwrap();
    let r = cos.compatibility(&params, &cos.sample_points(8)).unwrap();
    assert!(r.residual() == 0.0);
    assert_eq!(cos.conformal_factor().evaluate(&pt(&[("q1", 0.3), ("p1", 0.1)])).unwrap(), 0.0);
    // contact η = dz − p dq as λ with ω = dη = dq∧dp
    let con = ShsCoefficients::parse(&["-p1"], &["0"]).unwrap();
    assert!(con.require_compatible(&params).unwrap().residual() <= 1e-12);
    assert_eq!(con.conformal_factor().evaluate(&pt(&[("q1", 0.3), ("p1", 0.1)])).unwrap(), 1.0);
    let bad = ShsCoefficients::parse(&["q1*p1"], &["sin(q1)"]).unwrap();
    assert!(matches!(bad.require_compatible(&params), Err(GeomError::JacobiIncompatible { residual }) if residual > 1e-3));
    let g = con.geometry_at(&pt(&[("q1", 0.2), ("p1", -0.4), ("z", 0.0)])).unwrap();
    assert_eq!(g.shs_data().unwrap().f, 1.0);
    assert!(close(&g.jacobi_pair().e_field, &v(&[0.0, 0.0, 1.0])));
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

fn random_pair(seed: u64, kind: Kind, n: usize) -> (LinearGeometry, Subspace, Subspace, SeededRng) {
    let mut rng = rng_from_seed(seed);
    let g = random_geometry(&mut rng, kind, n);
    let d = g.dim();
    let k1 = rng.random_range(0..=d);
    let k2 = rng.random_range(0..=d);
    let a = random_subspace(&mut rng, d, k1);
    let b = random_subspace(&mut rng, d, k2);
    (g, a, b, rng)
}

use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn musical_roundtrip(seed in any::<u64>(), kind in kinds(), n in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let x = gaussian_vector(&mut rng, g.dim());
        let back = g.sharp(&g.flat(&x));
        prop_assert!((back - &x).amax() <= 1e-10 * x.amax().max(1.0));
    }

    #[test]
    fn complement_identities(seed in any::<u64>(), kind in kinds(), n in 1usize..4) {
        let (g, a, b, _) = random_pair(seed, kind, n);
        let oa = g.lambda_orthogonal(&a).unwrap();
        let ob = g.lambda_orthogonal(&b).unwrap();
        let cap = g.lambda_orthogonal(&a.intersect(&b).unwrap()).unwrap();
        prop_assert!(cap.max_principal_angle(&oa.sum(&ob).unwrap()) <= SPAN_ANGLE_TOL);
        let plus = g.lambda_orthogonal(&a.sum(&b).unwrap()).unwrap();
        prop_assert!(oa.intersect(&ob).unwrap().contains(&plus));
        if kind == Kind::Symplectic {
            prop_assert!(plus.max_principal_angle(&oa.intersect(&ob).unwrap()) <= SPAN_ANGLE_TOL);
            prop_assert!(g.lambda_orthogonal(&oa).unwrap().max_principal_angle(&a) <= SPAN_ANGLE_TOL);
            prop_assert_eq!(oa.dim(), g.dim() - a.dim());
        }
        // general dimension law
        let ker = Subspace::from_columns(&linalg::null_space(&g.lambda_matrix().transpose(), RANK_RTOL));
        prop_assert_eq!(oa.dim(), g.dim() - a.dim() - ker.intersect(&a.annihilator()).unwrap().dim());
    }

    #[test]
    fn leafwise_orthogonal(seed in any::<u64>(), kind in prop_oneof![Just(Kind::Cosymplectic), Just(Kind::Contact), Just(Kind::Shs), Just(Kind::Cocontact)], n in 1usize..4) {
        let (g, a, _, _) = random_pair(seed, kind, n);
        let h = g.horizontal();
        let brute = form_orthogonal(g.two_form(), &h, &a.intersect(&h).unwrap());
        prop_assert!(g.lambda_orthogonal(&a).unwrap().max_principal_angle(&brute) <= SPAN_ANGLE_TOL);
        if kind == Kind::Cosymplectic {
            let oa = g.lambda_orthogonal(&a).unwrap();
            prop_assert!(g.lambda_orthogonal(&oa).unwrap().max_principal_angle(&a.intersect(&h).unwrap()) <= SPAN_ANGLE_TOL);
            let expect = if h.contains(&a) { 2 * n - a.dim() } else { 2 * n + 1 - a.dim() };
            prop_assert_eq!(oa.dim(), expect);
        }
    }

    #[test]
    fn cosymplectic_sum_identity_on_leaf_adapted_pairs(seed in any::<u64>(), n in 1usize..4, vertical in any::<bool>()) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, Kind::Cosymplectic, n);
        let h = g.horizontal();
        let r = Subspace::from_vectors(g.dim(), &[g.reeb().unwrap()]).unwrap();
        let pick = |rng: &mut SeededRng| {
            let k = rng.random_range(0..=2 * n);
            let s = random_subspace_in(rng, &h, k);
            if vertical { s.sum(&r).unwrap() } else { s }
        };
        let a = pick(&mut rng);
        let b = pick(&mut rng);
        let plus = g.lambda_orthogonal(&a.sum(&b).unwrap()).unwrap();
        let both = g.lambda_orthogonal(&a).unwrap().intersect(&g.lambda_orthogonal(&b).unwrap()).unwrap();
        prop_assert!(plus.max_principal_angle(&both) <= SPAN_ANGLE_TOL);
    }

    #[test]
    fn contact_orthogonal_vs_deta(seed in any::<u64>(), kind in prop_oneof![Just(Kind::Contact), Just(Kind::Cocontact)], n in 1usize..4, mode in 0u8..3) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let d = g.dim();
        let h = g.horizontal();
        let delta = match mode {
            0 => { let k = rng.random_range(0..=d); random_subspace(&mut rng, d, k) }
            1 => { let k = rng.random_range(0..=2 * n); random_subspace_in(&mut rng, &h, k) }
            _ => { let k = rng.random_range(0..=2 * n); random_subspace_in(&mut rng, &h, k).sum(&g.vertical()).unwrap() }
        };
        let o = g.lambda_orthogonal(&delta).unwrap();
        if kind == Kind::Contact {
            let inner = form_orthogonal(g.two_form(), &h, &delta);
            prop_assert!(o.contains(&inner));
            if mode > 0 {
                prop_assert!(o.max_principal_angle(&inner) <= SPAN_ANGLE_TOL);
            }
        } else {
            let brute = form_orthogonal(g.two_form(), &h, &delta.intersect(&h).unwrap());
            prop_assert!(o.max_principal_angle(&brute) <= SPAN_ANGLE_TOL);
        }
    }

    #[test]
    fn lagrangian_predicates_agree(seed in any::<u64>(), kind in kinds(), n in 1usize..4, extend in any::<bool>()) {
        let mut rng = rng_from_seed(seed);
        let g = random_geometry(&mut rng, kind, n);
        let l = random_graph_lagrangian(&mut rng, &g);
        // cosymplectic and SHS Lagrangians may also be non-horizontal of dim n+1
        let l = if extend && matches!(kind, Kind::Cosymplectic | Kind::Shs) {
            let w = g.reeb().unwrap() + l.basis() * gaussian_vector(&mut rng, n);
            l.sum(&Subspace::from_vectors(g.dim(), &[w]).unwrap()).unwrap()
        } else { l };
        let r = g.classify(&l).unwrap();
        prop_assert!(r.lagrangian && r.lagrangian_by_forms, "{:?}", r.residuals);
        // Δ^⊥Λ ⊆ ℋ, so only horizontal Lagrangians are isotropic
        prop_assert_eq!(r.isotropic, r.horizontal);
        if matches!(kind, Kind::Cosymplectic | Kind::Shs) {
            prop_assert_eq!(r.orthogonal.dim(), n);
        }
        if let Some(lit) = r.shs_literal_lagrangian { prop_assert!(lit); }
        // a generic subspace of the same dimension is not Lagrangian
        let other = random_subspace(&mut rng, g.dim(), l.dim());
        let r = g.classify(&other).unwrap();
        prop_assert_eq!(r.lagrangian, r.lagrangian_by_forms);
    }
}
