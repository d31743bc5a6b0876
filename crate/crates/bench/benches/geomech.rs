use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use geomech_core::reduction::{random_case_subspace, Case};
use geomech_core::sampling::{random_geometry, rng_from_seed};
use geomech_core::{linear_reduce, Binding, Expression, FieldKind, Kind, LagrangianSystem, PathGrid, PhaseSystem, Stepper};

fn damped() -> PhaseSystem {
    let params = Binding::from_pairs([("m", 1.0), ("k", 1.0), ("g", 0.2)]);
    PhaseSystem::new(Kind::Contact, 1, Expression::parse("p1^2/(2*m) + k^2*m*q1^2/2 + g*z").unwrap(), params).unwrap()
}

fn integrate(c: &mut Criterion) {
    let sys = damped();
    let mut group = c.benchmark_group("integrate");
    group.sample_size(20);
    group.bench_function("rk4_damped_10s", |b| {
        b.iter(|| sys.integrate(FieldKind::Hamiltonian, black_box(&[1.0, 0.0, 0.0]), 0.0, 10.0, Stepper::default()).unwrap())
    });
    group.bench_function("rk45_damped_10s", |b| {
        b.iter(|| sys.integrate(FieldKind::Hamiltonian, black_box(&[1.0, 0.0, 0.0]), 0.0, 10.0, Stepper::adaptive()).unwrap())
    });
    group.finish();
}

fn fields(c: &mut Criterion) {
    let sys = damped();
    let x = [0.3, -0.2, 0.1];
    c.bench_function("field_explicit", |b| b.iter(|| sys.field_at(FieldKind::Hamiltonian, black_box(&x)).unwrap()));
    c.bench_function("field_via_sharp", |b| b.iter(|| sys.field_via_sharp(FieldKind::Hamiltonian, black_box(&x)).unwrap()));
}

fn reduction(c: &mut Criterion) {
    let mut group = c.benchmark_group("linear_reduce");
    for n in [1usize, 3, 6] {
        let mut rng = rng_from_seed(n as u64);
        let g = random_geometry(&mut rng, Kind::Cocontact, n);
        let w = random_case_subspace(&mut rng, &g, Case::TzVertical);
        group.bench_with_input(BenchmarkId::new("cocontact", n), &n, |b, _| b.iter(|| linear_reduce(&g, black_box(&w)).unwrap()));
    }
    group.finish();
}

fn herglotz(c: &mut Criterion) {
    let sys = LagrangianSystem::new(1, Expression::parse("qdot1^2/2 - q1^2/2 - 0.2*z").unwrap(), Binding::new()).unwrap();
    let path = PathGrid::from_fn(0.0, 10.0, 400, 0.0, |t| vec![(-0.1 * t).exp() * t.cos()]).unwrap();
    c.bench_function("herglotz_residual_400", |b| b.iter(|| sys.herglotz_residual(black_box(&path)).unwrap()));
}

criterion_group!(benches, integrate, fields, reduction, herglotz);
criterion_main!(benches);
