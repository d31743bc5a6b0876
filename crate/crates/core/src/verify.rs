//! Seeded verification battery.
//!
//! Every check is an independent closure of a seed, so callers may run
//! them on a worker pool and sort the results by `check_id` afterwards.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::chart::{Chart, Kind};
use crate::dynamics::{FieldKind, LiftTest, PhaseSystem, Stepper};
use crate::error::{GeomError, Result};
use crate::expr::{add, mul, Binding, Expression};
use crate::geometry::{form_orthogonal, ShsCoefficients};
use crate::lagrangian::{LagrangianSystem, PathGrid};
use crate::linalg::{self, Subspace, RANK_RTOL};
use crate::reduction::{
    expected_quotient_dim, involutivity_residual, linear_reduce, project_through_reduction, random_case_subspace,
    random_lagrangian, representative_independence, sphere, cp_example, Case, ConstraintManifold,
};
use crate::sampling::{random_geometry, random_polynomial, random_shs, random_subspace, rng_from_seed, split_seed, uniform_vector, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// Whether the residual must stay below or reach the tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check_id: String,
    pub paper_ref: String,
    pub status: Status,
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub seed: u64,
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Measured quantity of one check.
#[derive(Clone, Copy, Debug)]
pub struct Outcome {
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub cases: usize,
}

impl Outcome {
    fn at_most(residual: f64, tolerance: f64, cases: usize) -> Self {
        Outcome { residual, tolerance, bound: Bound::AtMost, cases }
    }

    fn at_least(residual: f64, tolerance: f64, cases: usize) -> Self {
        Outcome { residual, tolerance, bound: Bound::AtLeast, cases }
    }

    /// Integer mismatch count that must be zero.
    fn exact(mismatches: usize, cases: usize) -> Self {
        Outcome::at_most(mismatches as f64, 0.0, cases)
    }

    fn holds(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.residual <= self.tolerance,
            Bound::AtLeast => self.residual >= self.tolerance,
        }
    }
}

type Runner = Box<dyn Fn(u64) -> Result<Outcome> + Send + Sync>;

pub struct Check {
    pub id: String,
    pub criterion: usize,
    pub reference: &'static str,
    run: Runner,
}

impl Check {
    fn new(id: impl Into<String>, criterion: usize, reference: &'static str, run: impl Fn(u64) -> Result<Outcome> + Send + Sync + 'static) -> Self {
        Check { id: id.into(), criterion, reference, run: Box::new(run) }
    }

    /// Runs with a seed derived from the suite seed and the check id.
    pub fn run(&self, suite_seed: u64) -> CheckResult {
        let seed = split_seed(suite_seed, &self.id);
        let (outcome, error) = match (self.run)(seed) {
            Ok(o) => (o, None),
            Err(e) => (Outcome::at_most(f64::MAX, 0.0, 0), Some(e.to_string())),
        };
        // non-finite residuals never pass and are not valid JSON numbers
        let residual = if outcome.residual.is_finite() { outcome.residual } else { f64::MAX };
        let ok = error.is_none() && outcome.residual.is_finite() && outcome.holds();
        CheckResult {
            check_id: self.id.clone(),
            paper_ref: self.reference.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            residual,
            tolerance: outcome.tolerance,
            bound: outcome.bound,
            seed,
            cases: outcome.cases,
            error,
        }
    }
}

/// Suite names accepted by [`checks`], one per acceptance criterion.
pub const SUITES: [&str; 11] = [
    "oscillator",
    "energy",
    "complements",
    "reduction",
    "projection",
    "cpn",
    "lifts",
    "brackets",
    "herglotz",
    "shs",
    "involutivity",
];

/// Checks of the named suite, or of every suite for `"all"`.
pub fn checks(suite: &str) -> Result<Vec<Check>> {
    if suite == "all" {
        return Ok((1..=SUITES.len()).flat_map(criterion_checks).collect());
    }
    match SUITES.iter().position(|s| *s == suite) {
        Some(i) => Ok(criterion_checks(i + 1)),
        None => Err(GeomError::InvalidInput(format!("unknown suite {suite:?}; expected all or one of {}", SUITES.join(", ")))),
    }
}

/// Checks backing acceptance criterion `c` (1-based).
pub fn criterion_checks(c: usize) -> Vec<Check> {
    match c {
        1 => oscillator(),
        2 => energy(),
        3 => complements(),
        4 => reduction(),
        5 => projection(),
        6 => cpn(),
        7 => lifts(),
        8 => brackets(),
        9 => herglotz(),
        10 => shs(),
        11 => involutivity(),
        _ => Vec::new(),
    }
}

/// Runs every check sequentially, ordered by id.
pub fn run_suite(suite: &str, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out: Vec<CheckResult> = checks(suite)?.iter().map(|c| c.run(seed)).collect();
    out.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    Ok(out)
}

fn slug(s: &str) -> String {
    s.replace(['/', '-'], "_")
}

fn parse(s: &str) -> Expression {
    Expression::parse(s).expect("built-in expression parses")
}

fn damped_contact() -> PhaseSystem {
    let params = Binding::from_pairs([("m", 1.0), ("k", 1.0), ("g", 0.2)]);
    PhaseSystem::new(Kind::Contact, 1, parse("p1^2/(2*m) + k^2*m*q1^2/2 + g*z"), params).expect("valid system")
}

/// Closed-form solution of `q'' + 0.2 q' + q = 0`, `q(0) = 1`, `q'(0) = 0`.
pub fn damped_oscillator_solution(t: f64) -> f64 {
    let wd = 0.99_f64.sqrt();
    (-0.1 * t).exp() * ((wd * t).cos() + (0.1 / wd) * (wd * t).sin())
}

/// `q(t)` from `exp(A t) (1, 0)` with `A = [[0, 1], [-1, -0.2]]`.
pub fn damped_oscillator_oracle(t: f64) -> f64 {
    let a = nalgebra::Matrix2::new(0.0, 1.0, -1.0, -0.2);
    (a * t).exp()[(0, 0)]
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn oscillator() -> Vec<Check> {
    vec![Check::new("c01.damped_oscillator.oracle", 1, "damped harmonic oscillator as a contact Hamiltonian system", |_| {
        let traj = damped_contact().integrate(FieldKind::Hamiltonian, &[1.0, 0.0, 0.0], 0.0, 10.0, Stepper::rk4(1e-3))?;
        let err = max_of(traj.times.iter().zip(&traj.states).map(|(t, s)| (s[0] - damped_oscillator_oracle(*t)).abs()));
        Ok(Outcome::at_most(err, 1e-6, traj.len()))
    })]
}

fn energy() -> Vec<Check> {
    let contact_systems = || -> Vec<PhaseSystem> {
        vec![
            damped_contact(),
            PhaseSystem::new(Kind::Contact, 1, parse("p1^2/2 + q1^2/2 + z^2/4"), Binding::new()).expect("valid"),
            PhaseSystem::new(Kind::Contact, 2, parse("(p1^2 + p2^2)/2 + q1^2*q2^2/2 + 0.3*z*p1"), Binding::new()).expect("valid"),
        ]
    };
    vec![
        Check::new("c02.contact_hamiltonian.dissipation", 2, "dissipation of energy along contact Hamiltonian flows", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for sys in contact_systems() {
                let x0: Vec<f64> = uniform_vector(&mut rng, sys.dim(), -0.5, 0.5).iter().copied().collect();
                let traj = sys.integrate(FieldKind::Hamiltonian, &x0, 0.0, 5.0, Stepper::default())?;
                worst = worst.max(sys.energy_rates(&traj)?.max_residual);
                count += traj.len();
            }
            Ok(Outcome::at_most(worst, 1e-7, count))
        }),
        Check::new("c02.contact_evolution.conservation", 2, "contact evolution fields conserve the Hamiltonian", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for sys in contact_systems() {
                let x0: Vec<f64> = uniform_vector(&mut rng, sys.dim(), -0.5, 0.5).iter().copied().collect();
                let traj = sys.integrate(FieldKind::Evolution, &x0, 0.0, 5.0, Stepper::default())?;
                let rates = sys.energy_rates(&traj)?;
                worst = worst.max(max_of(rates.rate.iter().map(|r| r.abs())));
                worst = worst.max(max_of(traj.energy.iter().map(|h| (h - traj.energy[0]).abs())));
                count += traj.len();
            }
            Ok(Outcome::at_most(worst, 1e-7, count))
        }),
        Check::new("c02.contact_evolution.entropy", 2, "contact evolution fields satisfy dz = p dq along the flow", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for sys in contact_systems() {
                let x0: Vec<f64> = uniform_vector(&mut rng, sys.dim(), -0.5, 0.5).iter().copied().collect();
                let traj = sys.integrate(FieldKind::Evolution, &x0, 0.0, 1.0, Stepper::rk4(1e-2))?;
                worst = worst.max(sys.energy_rates(&traj)?.max_entropy_residual.unwrap_or(f64::MAX));
            }
            Ok(Outcome::at_most(worst, 1e-12, 3))
        }),
        Check::new("c02.symplectic.period_drift", 2, "conservation of energy for symplectic Hamiltonian flows", |_| {
            let sys = PhaseSystem::new(Kind::Symplectic, 1, parse("(q1^2 + p1^2)/2"), Binding::new())?;
            let traj = sys.integrate(FieldKind::Hamiltonian, &[1.0, 0.0], 0.0, 2.0 * PI, Stepper::default())?;
            let drift = max_of(traj.energy.iter().map(|h| (h - traj.energy[0]).abs()));
            Ok(Outcome::at_most(drift, 1e-8, traj.len()))
        }),
        Check::new("c02.cosymplectic_evolution.time", 2, "cosymplectic evolution fields advance time at unit rate", |seed| {
            let mut rng = rng_from_seed(seed);
            let sys = PhaseSystem::new(Kind::Cosymplectic, 1, parse("p1^2/2 + q1^2/2*(1 + t^2/10)"), Binding::new())?;
            let x0: Vec<f64> = uniform_vector(&mut rng, 3, -1.0, 1.0).iter().copied().collect();
            let traj = sys.integrate(FieldKind::Evolution, &x0, 0.0, 3.0, Stepper::default())?;
            let t = sys.chart().t().expect("cosymplectic chart has time");
            let err = max_of(traj.times.iter().zip(&traj.states).map(|(lam, s)| (s[t] - x0[t] - lam).abs()));
            Ok(Outcome::at_most(err, 1e-12, traj.len()))
        }),
    ]
}

fn random_pair(rng: &mut SeededRng, kind: Kind) -> (crate::geometry::LinearGeometry, Subspace, Subspace) {
    let n = rng.random_range(1..=3);
    let g = random_geometry(rng, kind, n);
    let d = g.dim();
    let k1 = rng.random_range(0..=d);
    let k2 = rng.random_range(0..=d);
    let a = random_subspace(rng, d, k1);
    let b = random_subspace(rng, d, k2);
    (g, a, b)
}

/// Angle residuals and integer-dimension mismatches for one random pair.
fn complement_residuals(kind: Kind, rng: &mut SeededRng) -> Result<(f64, usize)> {
    let (g, a, b) = random_pair(rng, kind);
    let n = g.n();
    let mut angle: f64 = 0.0;
    let mut dims = 0;
    let oa = g.lambda_orthogonal(&a)?;
    let ob = g.lambda_orthogonal(&b)?;
    let cap = g.lambda_orthogonal(&a.intersect(&b)?)?;
    angle = angle.max(cap.max_principal_angle(&oa.sum(&ob)?));
    let plus = g.lambda_orthogonal(&a.sum(&b)?)?;
    let both = oa.intersect(&ob)?;
    angle = angle.max(both.containment_residual(&plus));
    let ker = Subspace::from_columns(&linalg::null_space(&g.lambda_matrix().transpose(), RANK_RTOL));
    dims += usize::from(oa.dim() != g.dim() - a.dim() - ker.intersect(&a.annihilator())?.dim());
    let h = g.horizontal();
    match kind {
        Kind::Symplectic => {
            angle = angle.max(plus.max_principal_angle(&both));
            angle = angle.max(g.lambda_orthogonal(&oa)?.max_principal_angle(&a));
            dims += usize::from(oa.dim() != g.dim() - a.dim());
        }
        _ => {
            let leafwise = form_orthogonal(g.two_form(), &h, &a.intersect(&h)?);
            angle = angle.max(oa.max_principal_angle(&leafwise));
        }
    }
    match kind {
        Kind::Cosymplectic => {
            angle = angle.max(g.lambda_orthogonal(&oa)?.max_principal_angle(&a.intersect(&h)?));
            let expect = if h.contains(&a) { 2 * n - a.dim() } else { 2 * n + 1 - a.dim() };
            dims += usize::from(oa.dim() != expect);
        }
        Kind::Contact => {
            angle = angle.max(oa.containment_residual(&form_orthogonal(g.two_form(), &h, &a)));
            // for subspaces inside 𝓗 or containing the Reeb line the two agree
            let k = rng.random_range(0..=2 * n);
            let inner = crate::sampling::random_subspace_in(rng, &h, k);
            let delta = if rng.random_bool(0.5) { inner.sum(&g.vertical())? } else { inner };
            let o = g.lambda_orthogonal(&delta)?;
            angle = angle.max(o.max_principal_angle(&form_orthogonal(g.two_form(), &h, &delta)));
        }
        _ => {}
    }
    Ok((angle, dims))
}

fn complements() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in Kind::ALL {
        let label = kind.to_string();
        out.push(Check::new(format!("c03.complements.{label}.angles"), 3, "orthogonal complement identities of linear Jacobi structures", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                worst = worst.max(complement_residuals(kind, &mut rng)?.0);
            }
            Ok(Outcome::at_most(worst, 1e-8, 200))
        }));
        out.push(Check::new(format!("c03.complements.{label}.dimensions"), 3, "dimension laws for orthogonal complements", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut bad = 0;
            for _ in 0..200 {
                bad += complement_residuals(kind, &mut rng)?.1;
            }
            Ok(Outcome::exact(bad, 200))
        }));
    }
    out
}

struct CellStats {
    mismatches: usize,
    independence: f64,
}

fn reduction_cell(kind: Kind, case: Case, seed: u64, cases: usize) -> Result<CellStats> {
    let mut rng = rng_from_seed(seed);
    let mut stats = CellStats { mismatches: 0, independence: 0.0 };
    for _ in 0..cases {
        let n = rng.random_range(1..=3);
        let g = random_geometry(&mut rng, kind, n);
        let w = random_case_subspace(&mut rng, &g, case);
        let r = linear_reduce(&g, &w)?;
        // cocontact closed forms count dim(W ∩ ℋ)
        let k = if kind == Kind::Cocontact { w.intersect(&g.horizontal())?.dim() } else { w.dim() };
        let closed = expected_quotient_dim(kind, case, n, k);
        let structure_ok = match &r.reduced {
            Some(red) => red.dim() == r.quotient_dim && Some(red.kind()) == r.reduced_kind,
            None => r.quotient_dim == 0,
        };
        let ok = r.verticality_case == case && closed == Some(r.quotient_dim) && r.passed() && structure_ok;
        stats.mismatches += usize::from(!ok);
        stats.independence = stats.independence.max(representative_independence(&g, &r, &mut rng));
    }
    Ok(stats)
}

fn reduction() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in Kind::ALL {
        for &case in Case::reducible(kind) {
            let base = format!("c04.reduction.{kind}.{}", slug(case.name()));
            out.push(Check::new(format!("{base}.dimensions"), 4, "quotient dimensions of linear coisotropic reduction", move |seed| {
                Ok(Outcome::exact(reduction_cell(kind, case, seed, 100)?.mismatches, 100))
            }));
            out.push(Check::new(format!("{base}.representatives"), 4, "reduced structure is independent of class representatives", move |seed| {
                Ok(Outcome::at_most(reduction_cell(kind, case, seed, 100)?.independence, 1e-9, 100))
            }));
        }
    }
    out
}

fn projection() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in Kind::ALL {
        for &case in Case::reducible(kind) {
            out.push(Check::new(
                format!("c05.projection.{kind}.{}", slug(case.name())),
                5,
                "Lagrangian and Legendrian subspaces project to Lagrangian and Legendrian subspaces",
                move |seed| {
                    let mut rng = rng_from_seed(seed);
                    let mut bad = 0;
                    for _ in 0..100 {
                        let n = rng.random_range(1..=3);
                        let g = random_geometry(&mut rng, kind, n);
                        let w = random_case_subspace(&mut rng, &g, case);
                        let l = random_lagrangian(&mut rng, &g);
                        let p = project_through_reduction(&g, &l, &w)?;
                        bad += usize::from(!p.lagrangian || p.projected.dim() != p.expected_dim);
                    }
                    Ok(Outcome::exact(bad, 100))
                },
            ));
        }
    }
    out
}

fn cpn() -> Vec<Check> {
    let mut out = Vec::new();
    for n in [1usize, 2] {
        out.push(Check::new(format!("c06.cpn.n{n}.generator"), 6, "complex projective space as a reduced sphere: orthogonal line", move |seed| {
            let s = cp_example(n, 50, &mut rng_from_seed(seed))?;
            Ok(Outcome::at_most(s.max_generator_angle, 1e-8, s.samples))
        }));
        out.push(Check::new(format!("c06.cpn.n{n}.dimension"), 6, "complex projective space as a reduced sphere: dimension", move |seed| {
            let s = cp_example(n, 50, &mut rng_from_seed(seed))?;
            let bad = s.quotient_dims.iter().filter(|&&m| m != 2 * n).count() + usize::from(!s.all_nondegenerate);
            Ok(Outcome::exact(bad, s.samples))
        }));
    }
    out
}

/// Random polynomial Hamiltonian system; SHS structures are compatible.
pub fn random_system(rng: &mut SeededRng, kind: Kind, n: usize) -> Result<PhaseSystem> {
    let chart = Chart::new(kind, n)?;
    let h = random_polynomial(rng, &chart.names(), 6, 3);
    match kind {
        Kind::Shs => PhaseSystem::shs(n, h, Binding::new(), random_shs(rng, n)),
        _ => PhaseSystem::new(kind, n, h, Binding::new()),
    }
}

fn random_state(rng: &mut SeededRng, sys: &PhaseSystem) -> Vec<f64> {
    uniform_vector(rng, sys.dim(), -1.0, 1.0).iter().copied().collect()
}

const LIFT_SAMPLES: usize = 40;

fn lifts() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in Kind::ALL {
        out.push(Check::new(format!("c07.gradient_image.{kind}"), 7, "gradient fields have symmetric flat images", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..LIFT_SAMPLES {
                let n = rng.random_range(1..=2);
                let sys = random_system(&mut rng, kind, n)?;
                let x = random_state(&mut rng, &sys);
                worst = worst.max(sys.lift_residual(FieldKind::Gradient, LiftTest::GradientImage, &x, 1e-5)?);
                if kind == Kind::Symplectic {
                    worst = worst.max(sys.lift_residual(FieldKind::Hamiltonian, LiftTest::GradientImage, &x, 1e-5)?);
                }
            }
            Ok(Outcome::at_most(worst, 1e-12, LIFT_SAMPLES))
        }));
    }
    for kind in [Kind::Cosymplectic, Kind::Contact, Kind::Cocontact, Kind::Shs] {
        out.push(Check::new(format!("c07.modified_form.{kind}"), 7, "Hamiltonian fields are Lagrangian for the modified two-form", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for _ in 0..LIFT_SAMPLES {
                let n = rng.random_range(1..=2);
                let sys = random_system(&mut rng, kind, n)?;
                let x = random_state(&mut rng, &sys);
                for field in FieldKind::ALL {
                    if sys.supports(field).is_ok() {
                        worst = worst.max(sys.lift_residual(field, LiftTest::ModifiedForm, &x, 1e-5)?);
                        count += 1;
                    }
                }
            }
            Ok(Outcome::at_most(worst, 1e-6, count))
        }));
    }
    for kind in [Kind::Contact, Kind::Cocontact] {
        out.push(Check::new(format!("c07.legendrian_lift.{kind}"), 7, "Hamiltonian fields lift to Legendrian submanifolds", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..LIFT_SAMPLES {
                let n = rng.random_range(1..=2);
                let sys = random_system(&mut rng, kind, n)?;
                let x = random_state(&mut rng, &sys);
                worst = worst.max(sys.lift_residual(FieldKind::Hamiltonian, LiftTest::LegendrianLift, &x, 1e-5)?);
            }
            Ok(Outcome::at_most(worst, 1e-6, LIFT_SAMPLES))
        }));
    }
    out
}

/// `|{f,{g,h}} + {g,{h,f}} + {h,{f,g}}|` over the largest term.
pub fn jacobi_identity_residual(sys: &PhaseSystem, f: &Expression, g: &Expression, h: &Expression, at: &Binding) -> Result<f64> {
    let mut total = 0.0;
    let mut scale = 1.0_f64;
    for (a, b, c) in [(f, g, h), (g, h, f), (h, f, g)] {
        let inner = sys.bracket_expression(b, c)?;
        let v = sys.bracket(a, &inner, at)?;
        total += v;
        scale = scale.max(v.abs());
    }
    Ok((total / scale).abs())
}

fn brackets() -> Vec<Check> {
    let mut out = Vec::new();
    for kind in Kind::ALL {
        out.push(Check::new(format!("c08.jacobi_identity.{kind}"), 8, "Jacobi identity for the bracket of the Jacobi structure", move |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let n = rng.random_range(1..=2);
                let sys = random_system(&mut rng, kind, n)?;
                let names = sys.chart().names();
                let f = random_polynomial(&mut rng, &names, 4, 2);
                let g = random_polynomial(&mut rng, &names, 4, 2);
                let h = random_polynomial(&mut rng, &names, 4, 2);
                let at = sys.bind(&random_state(&mut rng, &sys));
                worst = worst.max(jacobi_identity_residual(&sys, &f, &g, &h, &at)?);
            }
            Ok(Outcome::at_most(worst, 1e-8, 200))
        }));
    }
    out.push(Check::new("c08.contact_bracket.closed_form", 8, "contact bracket in Darboux coordinates", |seed| {
        let mut rng = rng_from_seed(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let n = rng.random_range(1..=3);
            let sys = random_system(&mut rng, Kind::Contact, n)?;
            let names = sys.chart().names();
            let f = random_polynomial(&mut rng, &names, 5, 3);
            let g = random_polynomial(&mut rng, &names, 5, 3);
            let at = sys.bind(&random_state(&mut rng, &sys));
            let numeric = sys.bracket(&f, &g, &at)?;
            let closed = contact_bracket_terms(n, &f, &g, &at)?;
            worst = worst.max((numeric - closed).abs() / (1.0 + numeric.abs()));
        }
        Ok(Outcome::at_most(worst, 1e-12, 200))
    }));
    out
}

/// `Σ [p_i(f_p g_z − f_z g_p) + f_p g_q − f_q g_p] + g f_z − f g_z`,
/// evaluated term by term.
fn contact_bracket_terms(n: usize, f: &Expression, g: &Expression, at: &Binding) -> Result<f64> {
    let d = |e: &Expression, v: &str| e.differentiate(v).evaluate(at);
    let (fz, gz) = (d(f, "z")?, d(g, "z")?);
    let mut total = g.evaluate(at)? * fz - f.evaluate(at)? * gz;
    for i in 1..=n {
        let (q, p) = (format!("q{i}"), format!("p{i}"));
        let pv = at.get(&p).ok_or_else(|| GeomError::MissingCoordinate(p.clone()))?;
        let (fq, fp, gq, gp) = (d(f, &q)?, d(f, &p)?, d(g, &q)?, d(g, &p)?);
        total += pv * (fp * gz - fz * gp) + fp * gq - fq * gp;
    }
    Ok(total)
}

fn damped_lagrangian(gamma: f64) -> LagrangianSystem {
    LagrangianSystem::new(1, parse("qdot1^2/2 - q1^2/2 - gamma*z"), Binding::from_pairs([("gamma", gamma)])).expect("regular Lagrangian")
}

fn damped_path(count: usize, shift: impl Fn(f64) -> f64) -> Result<PathGrid> {
    PathGrid::from_fn(0.0, 10.0, count, 0.0, |t| vec![damped_oscillator_solution(t) + shift(t)])
}

fn max_gradient(sys: &LagrangianSystem, path: &PathGrid) -> Result<f64> {
    Ok(max_of(sys.action_gradient(path)?.iter().flatten().map(|g| g.abs())))
}

fn herglotz() -> Vec<Check> {
    vec![
        Check::new("c09.herglotz.undamped_equals_euler_lagrange", 9, "Herglotz equations without action dependence", |seed| {
            let mut rng = rng_from_seed(seed);
            let sys = damped_lagrangian(0.0);
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
                let path = PathGrid::from_fn(0.0, 10.0, 400, rng.random_range(-1.0..1.0), |t| vec![a * (b * t).sin() + t * t / 50.0])?;
                let h = sys.herglotz_residual(&path)?;
                let e = sys.euler_lagrange_residual(&path)?;
                for (x, y) in h.residual.iter().zip(&e.residual) {
                    worst = worst.max((x[0] - y[0]).abs());
                }
            }
            Ok(Outcome::at_most(worst, 1e-12, 10))
        }),
        Check::new("c09.herglotz.damped_solution", 9, "Herglotz equations for the damped oscillator", |_| {
            let r = damped_lagrangian(0.2).herglotz_residual(&damped_path(400, |_| 0.0)?)?;
            Ok(Outcome::at_most(r.max_residual, 1e-4, 400))
        }),
        Check::new("c09.herglotz.grid_convergence", 9, "second-order discretisation of the Herglotz equations", |_| {
            let sys = damped_lagrangian(0.2);
            let coarse = sys.herglotz_residual(&damped_path(201, |_| 0.0)?)?.max_residual;
            let fine = sys.herglotz_residual(&damped_path(401, |_| 0.0)?)?.max_residual;
            // halving the step divides the residual by four
            Ok(Outcome::at_most((coarse / fine - 4.0).abs(), 0.5, 2))
        }),
        Check::new("c09.herglotz.action_critical", 9, "Herglotz action is critical on solutions", |_| {
            let g = max_gradient(&damped_lagrangian(0.2), &damped_path(400, |_| 0.0)?)?;
            Ok(Outcome::at_most(g, 1e-3, 398))
        }),
        Check::new("c09.herglotz.action_not_critical", 9, "Herglotz action is not critical off solutions", |_| {
            let g = max_gradient(&damped_lagrangian(0.2), &damped_path(400, |t| 0.5 * (16.0 * PI * t / 10.0).sin())?)?;
            Ok(Outcome::at_least(g, 1e-1, 398))
        }),
    ]
}

/// `a = ∂φ/∂q + shift_a`, `b = ∂φ/∂p` for a random potential φ(q, p).
fn exact_plus(rng: &mut SeededRng, n: usize, shift_a: impl Fn(usize) -> Expression, shift_b: impl Fn(usize) -> Expression) -> Result<ShsCoefficients> {
    let names: Vec<String> = (1..=n).flat_map(|i| [format!("q{i}"), format!("p{i}")]).collect();
    let phi = random_polynomial(rng, &names, 5, 3);
    let a = (1..=n).map(|i| add(phi.differentiate(&format!("q{i}")), shift_a(i))).collect();
    let b = (1..=n).map(|i| add(phi.differentiate(&format!("p{i}")), shift_b(i))).collect();
    ShsCoefficients::new(a, b)
}

/// Largest `|f − expected|` over the sample points, plus the compatibility residual.
fn factor_error(coeffs: &ShsCoefficients, expected: f64) -> Result<f64> {
    let chart = Chart::new(Kind::Shs, coeffs.n())?;
    let f = coeffs.conformal_factor();
    let points = coeffs.sample_points(16);
    let mut worst = coeffs.compatibility(&Binding::new(), &points)?.residual();
    for x in &points {
        worst = worst.max((f.evaluate(&chart.bind(x, &Binding::new()))? - expected).abs());
    }
    Ok(worst)
}

fn shs() -> Vec<Check> {
    vec![
        Check::new("c10.shs.cosymplectic_factor", 10, "cosymplectic structures as stable Hamiltonian structures", |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let n = rng.random_range(1..=3);
                let c = exact_plus(&mut rng, n, |_| Expression::num(0.0), |_| Expression::num(0.0))?;
                worst = worst.max(factor_error(&c, 0.0)?);
            }
            Ok(Outcome::at_most(worst, 1e-12, 20))
        }),
        Check::new("c10.shs.contact_factor", 10, "contact structures as stable Hamiltonian structures", |seed| {
            let mut rng = rng_from_seed(seed);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let n = rng.random_range(1..=3);
                let c = exact_plus(&mut rng, n, |i| mul(Expression::num(-1.0), parse(&format!("p{i}"))), |_| Expression::num(0.0))?;
                worst = worst.max(factor_error(&c, 1.0)?);
            }
            Ok(Outcome::at_most(worst, 1e-12, 20))
        }),
        Check::new("c10.shs.incompatible_rejected", 10, "Jacobi compatibility of stable Hamiltonian structures", |seed| {
            let mut rng = rng_from_seed(seed);
            let n = rng.random_range(1..=2);
            let names: Vec<String> = (1..=n).flat_map(|i| [format!("q{i}"), format!("p{i}")]).collect();
            // cubic coefficients give a non-constant, non-vertical f
            let a = (0..n).map(|_| mul(parse("q1*p1"), random_polynomial(&mut rng, &names, 3, 2))).collect();
            let b = (0..n).map(|_| random_polynomial(&mut rng, &names, 4, 3)).collect();
            let c = ShsCoefficients::new(a, b)?;
            match c.require_compatible(&Binding::new()) {
                Err(GeomError::JacobiIncompatible { residual }) => Ok(Outcome::at_least(residual, 1e-9, 1)),
                Err(e) => Err(e),
                Ok(r) => Ok(Outcome::at_least(r.residual(), 1e-9, 1)),
            }
        }),
    ]
}

fn ratio_excess(manifold: &ConstraintManifold, x: &[f64]) -> Result<f64> {
    let coarse = involutivity_residual(manifold, x, 1e-3)?;
    let fine = involutivity_residual(manifold, x, 1e-4)?;
    Ok(fine - 0.2 * coarse)
}

fn involutivity() -> Vec<Check> {
    vec![
        Check::new("c11.involutivity.sphere", 11, "involutivity of the orthogonal distribution of the three-sphere", |seed| {
            let mut rng = rng_from_seed(seed);
            let s3 = sphere(1);
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..20 {
                let v = crate::sampling::gaussian_vector(&mut rng, 4);
                worst = worst.max(ratio_excess(&s3, (&v / v.norm()).as_slice())?);
            }
            Ok(Outcome::at_most(worst, 1e-10, 20))
        }),
        Check::new("c11.involutivity.cosymplectic_vertical", 11, "involutivity of the orthogonal distribution of a vertical cosymplectic constraint", |seed| {
            let mut rng = rng_from_seed(seed);
            let phi = parse("q1^2 + p2^2 + q2*p1 - 1");
            let m = ConstraintManifold::new(Kind::Cosymplectic, 2, vec![phi], Binding::new())?;
            let mut worst = f64::NEG_INFINITY;
            let mut count = 0;
            while count < 20 {
                let (q2, p1, p2, t) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-1.0..1.0));
                let rest: f64 = 1.0 - p2 * p2 - q2 * p1;
                if rest < 0.1 {
                    continue;
                }
                worst = worst.max(ratio_excess(&m, &[rest.sqrt(), q2, p1, p2, t])?);
                count += 1;
            }
            Ok(Outcome::at_most(worst, 1e-10, 20))
        }),
        Check::new("c11.involutivity.torus", 11, "involutivity of a rank-two orthogonal distribution", |seed| {
            let mut rng = rng_from_seed(seed);
            let phis = vec![parse("q1^2 + p1^2 - 1"), parse("q2^2 + p2^2 - 1")];
            let m = ConstraintManifold::new(Kind::Symplectic, 3, phis, Binding::new())?;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..10 {
                let (a, b) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
                let (q3, p3) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                worst = worst.max(ratio_excess(&m, &[a.cos(), b.cos(), q3, a.sin(), b.sin(), p3])?);
            }
            Ok(Outcome::at_most(worst, 1e-10, 10))
        }),
    ]
}
