use super::*;
use crate::sampling::{random_polynomial, random_shs, rng_from_seed, uniform_vector, SeededRng};
use proptest::prelude::*;
use rand::Rng;

const KINDS: [Kind; 5] = [Kind::Symplectic, Kind::Cosymplectic, Kind::Contact, Kind::Cocontact, Kind::Shs];

fn expr(s: &str) -> Expression {
    Expression::parse(s).unwrap()
}

fn system(kind: Kind, n: usize, h: &str) -> PhaseSystem {
    PhaseSystem::new(kind, n, expr(h), Binding::new()).unwrap()
}

fn damped() -> PhaseSystem {
    let params = Binding::from_pairs([("m", 1.0), ("k", 1.0), ("g", 0.2)]);
    PhaseSystem::new(Kind::Contact, 1, expr("p1^2/(2*m) + k^2*m*q1^2/2 + g*z"), params).unwrap()
}

fn damped_oracle(t: f64) -> f64 {
    let wd = 0.99_f64.sqrt();
    (-0.1 * t).exp() * ((wd * t).cos() + (0.1 / wd) * (wd * t).sin())
}

fn random_system(rng: &mut SeededRng, kind: Kind, n: usize) -> PhaseSystem {
    let chart = Chart::new(kind, n).unwrap();
    let h = random_polynomial(rng, &chart.names(), 6, 3);
    match kind {
        Kind::Shs => PhaseSystem::shs(n, h, Binding::new(), random_shs(rng, n)).unwrap(),
        _ => PhaseSystem::new(kind, n, h, Binding::new()).unwrap(),
    }
}

fn random_point(rng: &mut SeededRng, sys: &PhaseSystem) -> Vec<f64> {
    uniform_vector(rng, sys.dim(), -1.0, 1.0).iter().copied().collect()
}

fn close(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + a.amax().max(b.amax()))
}

#[test]
fn harmonic_oscillator_field() {
    let sys = system(Kind::Symplectic, 1, "(q1^2 + p1^2)/2");
    let x = sys.field_at(FieldKind::Hamiltonian, &[0.3, -0.7]).unwrap();
    assert_eq!(x.as_slice(), &[-0.7, -0.3]);
    assert_eq!(sys.field_at(FieldKind::Gradient, &[0.3, -0.7]).unwrap(), x);
}

#[test]
fn damped_oscillator_momentum_equation() {
    let sys = damped();
    let (q, p, z) = (0.4, -1.3, 2.0);
    let x = sys.field_at(FieldKind::Hamiltonian, &[q, p, z]).unwrap();
    assert!((x[0] - p).abs() < 1e-15);
    assert!((x[1] - (-q - 0.2 * p)).abs() < 1e-15);
    let h = p * p / 2.0 + q * q / 2.0 + 0.2 * z;
    assert!((x[2] - (p * p - h)).abs() < 1e-14);
}

#[test]
fn cosymplectic_evolution_moves_time_at_unit_speed() {
    let sys = system(Kind::Cosymplectic, 2, "q1*p2 + t^2*p1 + sin(q2)");
    let mut rng = rng_from_seed(3);
    for _ in 0..20 {
        let x = random_point(&mut rng, &sys);
        assert_eq!(sys.field_at(FieldKind::Evolution, &x).unwrap()[4], 1.0);
        assert_eq!(sys.field_at(FieldKind::Hamiltonian, &x).unwrap()[4], 0.0);
    }
}

#[test]
fn unsupported_fields() {
    for kind in [Kind::Symplectic, Kind::Cocontact] {
        let sys = system(kind, 1, "q1*p1");
        let err = sys.field_at(FieldKind::Evolution, &vec![0.0; sys.dim()]).unwrap_err();
        assert_eq!(err.name(), "UnsupportedCombination");
    }
    let shs = PhaseSystem::shs(1, expr("p1"), Binding::new(), ShsCoefficients::constant(&[0.0], &[0.0]).unwrap()).unwrap();
    assert!(matches!(shs.field_at(FieldKind::Evolution, &[0.0; 3]), Err(GeomError::UnsupportedCombination(_))));
    assert!(PhaseSystem::new(Kind::Shs, 1, expr("p1"), Binding::new()).is_err());
    let sym = system(Kind::Symplectic, 1, "q1");
    assert!(matches!(
        sym.lift_residual(FieldKind::Hamiltonian, LiftTest::LegendrianLift, &[0.0, 0.0], 1e-5),
        Err(GeomError::UnsupportedCombination(_))
    ));
}

#[test]
fn parameters_are_checked() {
    let clash = PhaseSystem::new(Kind::Contact, 1, expr("z"), Binding::from_pairs([("z", 1.0)]));
    assert!(matches!(clash, Err(GeomError::InvalidInput(_))));
    let missing = PhaseSystem::new(Kind::Contact, 1, expr("k*q1"), Binding::new()).unwrap_err();
    assert_eq!(missing.name(), "MissingBinding");
    let wrong = PhaseSystem::new(Kind::Symplectic, 1, expr("t*q1"), Binding::new()).unwrap_err();
    assert_eq!(wrong.name(), "MissingBinding");
}

#[test]
fn incompatible_shs_has_no_hamiltonian_field() {
    let coeffs = ShsCoefficients::parse(&["q1*p1"], &["sin(q1)"]).unwrap();
    let sys = PhaseSystem::shs(1, expr("p1^2/2"), Binding::new(), coeffs).unwrap();
    let x = [0.2, 0.1, 0.0];
    assert!(matches!(sys.field_at(FieldKind::Hamiltonian, &x), Err(GeomError::JacobiIncompatible { .. })));
    assert!(sys.field_at(FieldKind::Gradient, &x).is_ok());
    assert!(matches!(sys.bracket(&expr("q1"), &expr("p1"), &sys.bind(&x)), Err(GeomError::UnsupportedCombination(_))));
}

#[test]
fn both_constructions_agree() {
    let mut rng = rng_from_seed(11);
    for kind in KINDS {
        for n in 1..=3 {
            for _ in 0..10 {
                let sys = random_system(&mut rng, kind, n);
                for field in FieldKind::ALL {
                    if sys.supports(field).is_err() {
                        continue;
                    }
                    let x = random_point(&mut rng, &sys);
                    let a = sys.field_via_sharp(field, &x).unwrap();
                    let b = sys.field_at(field, &x).unwrap();
                    assert!(close(&a, &b) < 1e-12, "{kind} {field}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn field_relations() {
    let mut rng = rng_from_seed(12);
    for kind in [Kind::Cosymplectic, Kind::Contact] {
        for _ in 0..30 {
            let sys = random_system(&mut rng, kind, 2);
            let x = random_point(&mut rng, &sys);
            let g = sys.geometry_at(&x).unwrap();
            let r = g.reeb().unwrap();
            let rh = sys.differential(&x).unwrap().dot(&r);
            let h = sys.value(&x).unwrap();
            let grad = sys.field_at(FieldKind::Gradient, &x).unwrap();
            let xh = sys.field_at(FieldKind::Hamiltonian, &x).unwrap();
            let ev = sys.field_at(FieldKind::Evolution, &x).unwrap();
            if kind == Kind::Cosymplectic {
                assert!(close(&xh, &(&grad - &r * rh)) < 1e-12);
                assert!(close(&ev, &(&xh + &r)) < 1e-12);
            } else {
                assert!(close(&xh, &(&grad - &r * (rh + h))) < 1e-12);
                assert!(close(&ev, &(&xh + &r * h)) < 1e-12);
            }
        }
    }
}

#[test]
fn shs_jacobi_form_of_the_hamiltonian_field() {
    let mut rng = rng_from_seed(13);
    for _ in 0..30 {
        let sys = random_system(&mut rng, Kind::Shs, 2);
        let x = random_point(&mut rng, &sys);
        let g = sys.geometry_at(&x).unwrap();
        let dh = sys.differential(&x).unwrap();
        let f = sys.conformal_factor_at(&x).unwrap();
        let via_lambda = g.jacobi_pair().sharp(&dh) + g.reeb().unwrap() * (f * sys.value(&x).unwrap());
        assert!(close(&via_lambda, &sys.field_at(FieldKind::Hamiltonian, &x).unwrap()) < 1e-12);
    }
}

#[test]
fn shs_special_cases() {
    let mut rng = rng_from_seed(14);
    let zero = ShsCoefficients::constant(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let contact_like = ShsCoefficients::parse(&["-p1", "-p2"], &["0", "0"]).unwrap();
    for _ in 0..20 {
        let names = Chart::new(Kind::Cosymplectic, 2).unwrap().names();
        let h = random_polynomial(&mut rng, &names, 6, 3);
        let cosym = PhaseSystem::new(Kind::Cosymplectic, 2, h.clone(), Binding::new()).unwrap();
        // relabel t → z
        let hz = Expression::parse(&h.to_string().replace('t', "z")).unwrap();
        let shs = PhaseSystem::shs(2, hz.clone(), Binding::new(), zero.clone()).unwrap();
        let x = random_point(&mut rng, &cosym);
        let cg = cosym.field_at(FieldKind::Gradient, &x).unwrap();
        assert!(close(&cg, &shs.field_at(FieldKind::Gradient, &x).unwrap()) < 1e-12);
        let cx = cosym.field_at(FieldKind::Hamiltonian, &x).unwrap();
        assert!(close(&-cx, &shs.field_at(FieldKind::Hamiltonian, &x).unwrap()) < 1e-12);

        let contact = PhaseSystem::new(Kind::Contact, 2, hz.clone(), Binding::new()).unwrap();
        let as_shs = PhaseSystem::shs(2, hz, Binding::new(), contact_like.clone()).unwrap();
        assert!((as_shs.conformal_factor_at(&x).unwrap() - 1.0).abs() < 1e-15);
        let kg = contact.field_at(FieldKind::Gradient, &x).unwrap();
        assert!(close(&kg, &as_shs.field_at(FieldKind::Gradient, &x).unwrap()) < 1e-12);
        let kx = contact.field_at(FieldKind::Hamiltonian, &x).unwrap();
        assert!(close(&-kx, &as_shs.field_at(FieldKind::Hamiltonian, &x).unwrap()) < 1e-12);
    }
}

#[test]
fn bracket_examples() {
    let sym = system(Kind::Symplectic, 1, "0");
    for x in [[0.0, 0.0], [1.5, -2.0]] {
        assert_eq!(sym.bracket(&expr("q1"), &expr("p1"), &sym.bind(&x)).unwrap(), 1.0);
    }
    let contact = system(Kind::Contact, 1, "0");
    let at = Binding::from_pairs([("q1", 0.0), ("p1", 0.0), ("z", 1.0)]);
    assert_eq!(contact.bracket(&expr("z"), &expr("q1"), &at).unwrap(), 0.0);
    // away from q1 = 0 the same pair gives q1
    let at = at.with("q1", 0.75);
    assert!((contact.bracket(&expr("z"), &expr("q1"), &at).unwrap() - 0.75).abs() < 1e-15);
    let cosym = system(Kind::Cosymplectic, 1, "0");
    let at = Binding::from_pairs([("q1", 0.3), ("p1", -0.2), ("t", 0.9)]);
    assert_eq!(cosym.bracket(&expr("t"), &expr("q1*p1*t"), &at).unwrap(), 0.0);
    let a = cosym.bracket(&expr("q1^2*t"), &expr("p1"), &at).unwrap();
    assert!((a - 2.0 * 0.3 * 0.9).abs() < 1e-15);
}

#[test]
fn brackets_match_closed_forms() {
    let mut rng = rng_from_seed(15);
    for kind in KINDS {
        let sys = random_system(&mut rng, kind, 2);
        let names = sys.chart().names();
        for _ in 0..20 {
            let f = random_polynomial(&mut rng, &names, 5, 3);
            let g = random_polynomial(&mut rng, &names, 5, 3);
            let b = sys.bind(&random_point(&mut rng, &sys));
            let numeric = sys.bracket(&f, &g, &b).unwrap();
            let closed = sys.bracket_expression(&f, &g).unwrap().evaluate(&b).unwrap();
            assert!((numeric - closed).abs() <= 1e-12 * (1.0 + numeric.abs()), "{kind}: {numeric} vs {closed}");
        }
    }
}

#[test]
fn energy_rates_flag_foreign_trajectories() {
    let sys = damped();
    let traj = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0, 0.0], 0.0, 0.1, Stepper::rk4(1e-2)).unwrap();
    let other = system(Kind::Contact, 1, "p1^2/2");
    assert!(matches!(other.energy_rates(&traj), Err(GeomError::MismatchedSystem(_))));
}

#[test]
fn harmonic_oscillator_period() {
    let sys = system(Kind::Symplectic, 1, "(q1^2 + p1^2)/2");
    let traj = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0], 0.0, 2.0 * std::f64::consts::PI, Stepper::default()).unwrap();
    let end = traj.final_state();
    assert!((end[0] - 1.0).abs() < 1e-6 && end[1].abs() < 1e-6, "{end:?}");
    let drift = traj.energy.iter().map(|h| (h - 0.5).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "{drift}");
    assert!(!traj.adaptive);
    assert_eq!(*traj.times.last().unwrap(), 2.0 * std::f64::consts::PI);
    let rates = sys.energy_rates(&traj).unwrap();
    assert!(rates.max_residual < 1e-12);
}

#[test]
fn damped_oscillator_matches_oracle() {
    let sys = damped();
    let traj = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0, 0.0], 0.0, 10.0, Stepper::default()).unwrap();
    assert_eq!(traj.len(), 10_001);
    let err = traj.times.iter().zip(&traj.states).map(|(t, s)| (s[0] - damped_oracle(*t)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
    let rates = sys.energy_rates(&traj).unwrap();
    assert!(rates.max_residual <= 1e-7);
    assert!(traj.energy.last().unwrap() < &traj.energy[0]);

    let adaptive = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0, 0.0], 0.0, 10.0, Stepper::adaptive()).unwrap();
    assert!(adaptive.adaptive && adaptive.len() < 2000);
    let err = adaptive.times.iter().zip(&adaptive.states).map(|(t, s)| (s[0] - damped_oracle(*t)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-7, "{err}");
}

#[test]
fn rk4_is_fourth_order() {
    let sys = damped();
    let err = |h: f64| {
        let traj = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0, 0.0], 0.0, 10.0, Stepper::rk4(h)).unwrap();
        (traj.final_state()[0] - damped_oracle(10.0)).abs()
    };
    let ratio = err(0.1) / err(0.05);
    assert!((12.0..=20.0).contains(&ratio), "{ratio}");
}

#[test]
fn evolution_laws() {
    let sys = damped();
    let traj = sys.integrate(FieldKind::Evolution, &[1.0, 0.3, -0.5], 0.0, 5.0, Stepper::rk4(1e-2)).unwrap();
    let rates = sys.energy_rates(&traj).unwrap();
    assert!(rates.rate.iter().all(|r| r.abs() <= 1e-7));
    assert!(rates.max_entropy_residual.unwrap() <= 1e-12);
    let drift = traj.energy.iter().map(|h| (h - traj.energy[0]).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-8, "{drift}");

    let cosym = system(Kind::Cosymplectic, 1, "p1^2/2 + q1^2/2*(1 + t^2/10)");
    let traj = cosym.integrate(FieldKind::Evolution, &[1.0, 0.0, 0.25], 0.0, 3.0, Stepper::rk4(1e-2)).unwrap();
    for (lam, s) in traj.times.iter().zip(&traj.states) {
        assert!((s[2] - (0.25 + lam)).abs() < 1e-12);
    }
    let rates = cosym.energy_rates(&traj).unwrap();
    assert!(rates.max_residual < 1e-12);
    assert!(rates.expected.iter().any(|v| v.abs() > 1e-3));
}

#[test]
fn blow_up_reports_last_time() {
    let sys = system(Kind::Symplectic, 1, "p1*q1^2");
    match sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0], 0.0, 2.0, Stepper::rk4(1e-3)) {
        Err(GeomError::NonFiniteState { t }) => assert!(t > 0.9 && t < 1.1, "{t}"),
        other => panic!("{other:?}"),
    }
    assert!(sys.integrate(FieldKind::Hamiltonian, &[f64::NAN, 0.0], 0.0, 1.0, Stepper::default()).is_err());
    assert!(sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0], 0.0, 1.0, Stepper::rk4(0.0)).is_err());
}

#[test]
fn trajectory_columns() {
    let sys = system(Kind::Cocontact, 1, "p1^2/2 + z*t");
    let traj = sys.integrate(FieldKind::Hamiltonian, &[0.0, 1.0, 0.0, 0.0], 0.0, 0.01, Stepper::rk4(1e-3)).unwrap();
    assert_eq!(traj.columns(), ["t", "q1", "p1", "z", "tau", "H", "dHdt"]);
    assert_eq!(traj.rows().next().unwrap().len(), 7);
}

#[test]
fn gradient_images_are_symmetric() {
    let mut rng = rng_from_seed(16);
    for kind in KINDS {
        for _ in 0..10 {
            let sys = random_system(&mut rng, kind, 2);
            let x = random_point(&mut rng, &sys);
            let r = sys.lift_residual(FieldKind::Gradient, LiftTest::GradientImage, &x, 1e-5).unwrap();
            assert!(r <= 1e-12, "{kind}: {r}");
        }
    }
    let sys = system(Kind::Symplectic, 2, "sin(q1*p2) + exp(q2)*p1^3");
    let r = sys.lift_residual(FieldKind::Hamiltonian, LiftTest::GradientImage, &[0.3, -0.2, 0.5, 0.1], 1e-5).unwrap();
    assert!(r <= 1e-12);
    // the contact Hamiltonian field is not a gradient
    let r = damped().lift_residual(FieldKind::Hamiltonian, LiftTest::GradientImage, &[0.5, 0.5, 0.5], 1e-5).unwrap();
    assert!(r > 1e-2, "{r}");
}

#[test]
fn modified_forms_pull_back_to_zero() {
    let mut rng = rng_from_seed(17);
    for kind in KINDS {
        for _ in 0..10 {
            let sys = random_system(&mut rng, kind, 2);
            let x = random_point(&mut rng, &sys);
            for field in FieldKind::ALL {
                if sys.supports(field).is_ok() {
                    let r = sys.lift_residual(field, LiftTest::ModifiedForm, &x, 1e-5).unwrap();
                    assert!(r <= 1e-6, "{kind} {field}: {r}");
                }
            }
        }
    }
}

#[test]
fn unmodified_form_does_not_vanish() {
    let sys = damped();
    let x = [0.5, -0.4, 0.3];
    let without = sys.modified_form_pullback(FieldKind::Hamiltonian, &x, 1e-5).unwrap()
        - sys.correction_form(FieldKind::Hamiltonian, &x).unwrap();
    assert!(max_abs(&without) > 0.1);
}

#[test]
fn legendrian_lifts() {
    let mut rng = rng_from_seed(18);
    for kind in [Kind::Contact, Kind::Cocontact] {
        for _ in 0..20 {
            let sys = random_system(&mut rng, kind, 2);
            let x = random_point(&mut rng, &sys);
            let r = sys.lift_residual(FieldKind::Hamiltonian, LiftTest::LegendrianLift, &x, 1e-5).unwrap();
            assert!(r <= 1e-6, "{kind}: {r}");
        }
    }
    // with e = 0 the η̃ pullback is −R_t(H) θ
    let sys = system(Kind::Cocontact, 1, "p1^2/2 + q1*t + z*t^2");
    let x = [0.2, 0.4, -0.3, 0.7];
    let dh = sys.differential(&x).unwrap();
    let (eta, theta) = sys.lift_pullback(FieldKind::Hamiltonian, &x, dh[2], 0.0, 1e-5).unwrap();
    assert!((eta[3] + dh[3]).abs() < 1e-8 && eta.rows(0, 3).amax() < 1e-8);
    assert!(theta.unwrap().amax() < 1e-12);
}

#[test]
fn musical_roundtrip_along_trajectories() {
    let mut rng = rng_from_seed(19);
    for kind in KINDS {
        let sys = random_system(&mut rng, kind, 1);
        for field in FieldKind::ALL {
            if sys.supports(field).is_err() {
                continue;
            }
            let x0 = random_point(&mut rng, &sys);
            let traj = match sys.integrate(field, &x0, 0.0, 0.2, Stepper::rk4(0.01)) {
                Ok(t) => t,
                Err(GeomError::NonFiniteState { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            for x in traj.states.iter().step_by(5) {
                let g = sys.geometry_at(x).unwrap();
                let flat = g.flat(&sys.field_at(field, x).unwrap());
                let expected = sys.defining_covector(field, x).unwrap();
                assert!(close(&flat, &expected) < 1e-10, "{kind} {field}");
            }
        }
    }
}

fn jacobi_residual(sys: &PhaseSystem, f: &Expression, g: &Expression, h: &Expression, at: &Binding) -> f64 {
    let mut total = 0.0;
    let mut scale = 1.0_f64;
    for (a, b, c) in [(f, g, h), (g, h, f), (h, f, g)] {
        let inner = sys.bracket_expression(b, c).unwrap();
        let v = sys.bracket(a, &inner, at).unwrap();
        total += v;
        scale = scale.max(v.abs());
    }
    total.abs() / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bracket_axioms(seed in any::<u64>(), k in 0usize..5) {
        let kind = KINDS[k];
        let mut rng = rng_from_seed(seed);
        let n = rng.random_range(1..=2);
        let sys = random_system(&mut rng, kind, n);
        let names = sys.chart().names();
        let f = random_polynomial(&mut rng, &names, 4, 2);
        let g = random_polynomial(&mut rng, &names, 4, 2);
        let h = random_polynomial(&mut rng, &names, 4, 2);
        let at = sys.bind(&random_point(&mut rng, &sys));
        let fg = sys.bracket(&f, &g, &at).unwrap();
        let gf = sys.bracket(&g, &f, &at).unwrap();
        prop_assert!((fg + gf).abs() <= 1e-12 * (1.0 + fg.abs()));
        prop_assert!(jacobi_residual(&sys, &f, &g, &h, &at) <= 1e-8);
        let closed = sys.bracket_expression(&f, &g).unwrap().evaluate(&at).unwrap();
        prop_assert!((fg - closed).abs() <= 1e-12 * (1.0 + fg.abs()));
        let gh = mul(g.clone(), h.clone());
        let lhs = sys.bracket(&f, &gh, &at).unwrap();
        let (gv, hv) = (g.evaluate(&at).unwrap(), h.evaluate(&at).unwrap());
        let rhs = fg * hv + gv * sys.bracket(&f, &h, &at).unwrap();
        let poisson = matches!(kind, Kind::Symplectic | Kind::Cosymplectic)
            || (kind == Kind::Shs && sys.conformal_factor_at(&sys.chart().state(&at).unwrap()).unwrap() == 0.0);
        if poisson {
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        } else {
            // Jacobi brackets: {f, gh} = g{f,h} + h{f,g} + gh E(f)
            let pair = sys.geometry_at(&sys.chart().state(&at).unwrap()).unwrap().jacobi_pair();
            let df = DVector::from_vec(names.iter().map(|v| f.differentiate(v).evaluate(&at).unwrap()).collect());
            let ef = pair.e_field.dot(&df);
            prop_assert!((lhs - rhs - gv * hv * ef).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn energy_laws_hold(seed in any::<u64>(), k in 0usize..5) {
        let kind = KINDS[k];
        let mut rng = rng_from_seed(seed);
        let sys = random_system(&mut rng, kind, 1);
        for field in FieldKind::ALL {
            if sys.supports(field).is_err() {
                continue;
            }
            let x0: Vec<f64> = uniform_vector(&mut rng, sys.dim(), -0.5, 0.5).iter().copied().collect();
            let traj = match sys.integrate(field, &x0, 0.0, 0.1, Stepper::rk4(0.01)) {
                Ok(t) => t,
                Err(GeomError::NonFiniteState { .. }) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let rates = sys.energy_rates(&traj).unwrap();
            let scale = rates.rate.iter().fold(1.0_f64, |m, r| m.max(r.abs()));
            prop_assert!(rates.max_residual <= 1e-10 * scale, "{} {}: {}", kind, field, rates.max_residual);
        }
    }
}
