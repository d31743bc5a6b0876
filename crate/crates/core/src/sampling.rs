//! Seeded random matrices and subspaces for the property suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chart::{Chart, Kind};
use crate::expr::{Binding, Expression};
use crate::geometry::{LinearGeometry, ShsCoefficients};
use crate::linalg::Subspace;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn split_seed(seed: u64, label: &str) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in label.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn uniform_vector<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Generic k-dimensional subspace of R^d.
pub fn random_subspace<R: Rng>(rng: &mut R, d: usize, k: usize) -> Subspace {
    if k == 0 {
        return Subspace::zero(d);
    }
    let s = Subspace::from_columns(&gaussian_matrix(rng, d, k));
    debug_assert_eq!(s.dim(), k);
    s
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = gaussian_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

/// Random element of Sp(2n) for ω = dq∧dp, built from shears and a block scaling.
pub fn random_symplectic_matrix<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut a = gaussian_matrix(rng, n, n) * 0.3;
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let a_inv_t = a.clone().try_inverse().expect("near-identity block is invertible").transpose();
    let s = random_symmetric(rng, n) * 0.5;
    let t = random_symmetric(rng, n) * 0.5;
    let mut scale = DMatrix::zeros(2 * n, 2 * n);
    scale.view_mut((0, 0), (n, n)).copy_from(&a);
    scale.view_mut((n, n), (n, n)).copy_from(&a_inv_t);
    let mut upper = DMatrix::identity(2 * n, 2 * n);
    upper.view_mut((0, n), (n, n)).copy_from(&s);
    let mut lower = DMatrix::identity(2 * n, 2 * n);
    lower.view_mut((n, 0), (n, n)).copy_from(&t);
    scale * upper * lower
}

/// Random structure of the given kind at a random chart point. SHS samples
/// `a = c − f p/2`, `b = e + f q/2`, so `dλ = f ω` with constant `f`
/// drawn from {0, 1, uniform}.
pub fn random_geometry<R: Rng>(rng: &mut R, kind: Kind, n: usize) -> LinearGeometry {
    let chart = Chart::new(kind, n).expect("n >= 1");
    let x: Vec<f64> = uniform_vector(rng, chart.dim(), -1.5, 1.5).iter().copied().collect();
    let point = chart.bind(&x, &Binding::new());
    match kind {
        Kind::Shs => random_shs(rng, n).geometry_at(&point).expect("compatible SHS"),
        _ => LinearGeometry::standard(kind, n, &point).expect("Darboux structure"),
    }
}

/// Jacobi-compatible SHS coefficients with constant conformal factor.
pub fn random_shs<R: Rng>(rng: &mut R, n: usize) -> ShsCoefficients {
    let f = match rng.random_range(0..3) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(-1.0..1.0),
    };
    shs_with_factor(rng, n, f)
}

pub fn shs_with_factor<R: Rng>(rng: &mut R, n: usize, f: f64) -> ShsCoefficients {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 1..=n {
        let c: f64 = rng.random_range(-1.0..1.0);
        let e: f64 = rng.random_range(-1.0..1.0);
        a.push(Expression::parse(&format!("{c:?} - {:?}*p{i}", f / 2.0)).unwrap());
        b.push(Expression::parse(&format!("{e:?} + {:?}*q{i}", f / 2.0)).unwrap());
    }
    ShsCoefficients::new(a, b).unwrap()
}

/// Columns `P_ℋ ∂q_i, P_ℋ ∂p_i`: a symplectic basis of `(ℋ, M|ℋ)` for a
/// structure in Darboux form, with `P_ℋ = I − Σ R_k α_kᵀ`.
pub fn horizontal_symplectic_basis(g: &LinearGeometry) -> DMatrix<f64> {
    let d = g.dim();
    let n = g.n();
    let chart = g.chart();
    let mut proj = DMatrix::<f64>::identity(d, d);
    if let (Some(r), Some(th)) = (g.reeb_t(), g.theta()) {
        proj -= &r * th.transpose();
    }
    if let (Some(r), Some(et)) = (g.reeb_z(), g.eta()) {
        proj -= &r * et.transpose();
    }
    let mut basis = DMatrix::zeros(d, 2 * n);
    for i in 0..n {
        basis.set_column(i, &proj.column(chart.q(i)));
        basis.set_column(n + i, &proj.column(chart.p(i)));
    }
    basis
}

/// Random coisotropic subspace of `(ℋ, M|ℋ)` of dimension `n + m`, `m ≤ n`:
/// the image of `span{e_q1..e_qn, e_p1..e_pm}` under a random symplectic map.
pub fn random_coisotropic_in_h<R: Rng>(rng: &mut R, g: &LinearGeometry, m: usize) -> Subspace {
    let n = g.n();
    let basis = horizontal_symplectic_basis(g);
    let t = random_symplectic_matrix(rng, n);
    let mut pick = DMatrix::zeros(2 * n, n + m);
    for i in 0..n {
        pick[(i, i)] = 1.0;
    }
    for j in 0..m {
        pick[(n + j, n + j)] = 1.0;
    }
    Subspace::from_columns(&(basis * t * pick))
}

/// Random Lagrangian subspace of `(ℋ, M|ℋ)` (the `m = 0` case).
pub fn random_lagrangian_in_h<R: Rng>(rng: &mut R, g: &LinearGeometry) -> Subspace {
    random_coisotropic_in_h(rng, g, 0)
}

/// Random Lagrangian of `(ℋ, M|ℋ)` as the graph `{x_q + S x_q}` of a
/// symmetric matrix in the horizontal symplectic basis.
pub fn random_graph_lagrangian<R: Rng>(rng: &mut R, g: &LinearGeometry) -> Subspace {
    let n = g.n();
    let basis = horizontal_symplectic_basis(g);
    let s = random_symmetric(rng, n);
    let mut graph = DMatrix::zeros(2 * n, n);
    graph.view_mut((0, 0), (n, n)).fill_with_identity();
    graph.view_mut((n, 0), (n, n)).copy_from(&s);
    Subspace::from_columns(&(basis * graph))
}

/// Random subspace of dimension `k` inside `within`.
pub fn random_subspace_in<R: Rng>(rng: &mut R, within: &Subspace, k: usize) -> Subspace {
    if k == 0 {
        return Subspace::zero(within.ambient_dim());
    }
    Subspace::from_columns(&(within.basis() * gaussian_matrix(rng, within.dim(), k)))
}

/// Sum of `terms` monomials of degree at most `max_degree` in `names`, with
/// coefficients uniform in [-1, 1].
pub fn random_polynomial<R: Rng>(rng: &mut R, names: &[String], terms: usize, max_degree: u32) -> Expression {
    use crate::expr::{add, mul};
    let mut out = Expression::num(0.0);
    for _ in 0..terms {
        let mut m = Expression::num(rng.random_range(-1.0..1.0));
        for _ in 0..rng.random_range(0..=max_degree) {
            m = mul(m, Expression::var(names[rng.random_range(0..names.len())].clone()));
        }
        out = add(out, m);
    }
    out
}
