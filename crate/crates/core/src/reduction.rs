//! Linear coisotropic reduction at a point, projection of Lagrangian and
//! Legendrian subspaces, and constraint-defined submanifolds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::chart::{Chart, Kind};
use crate::error::{GeomError, Result};
use crate::expr::{Binding, Expression};
use crate::geometry::{ClassificationReport, GeometryDescriptor, LinearGeometry, ShsCoefficients, CONTAIN_TOL};
use crate::linalg::{self, max_abs, quotient, restrict_form, QuotientBasis, Subspace, RANK_RTOL};
use crate::sampling::{gaussian_matrix, gaussian_vector, random_coisotropic_in_h, random_subspace_in, SeededRng};

/// Tolerance for the well-definedness checks on the reduced forms.
pub const DESCENT_TOL: f64 = 1e-9;

/// Position of a coisotropic subspace relative to the Reeb fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    Symplectic,
    Vertical,
    Horizontal,
    TzVertical,
    #[serde(rename = "t-vertical/z-horizontal")]
    TVerticalZHorizontal,
    #[serde(rename = "z-vertical/t-horizontal")]
    ZVerticalTHorizontal,
    TzHorizontal,
    Other,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Symplectic => "symplectic",
            Case::Vertical => "vertical",
            Case::Horizontal => "horizontal",
            Case::TzVertical => "tz-vertical",
            Case::TVerticalZHorizontal => "t-vertical/z-horizontal",
            Case::ZVerticalTHorizontal => "z-vertical/t-horizontal",
            Case::TzHorizontal => "tz-horizontal",
            Case::Other => "other",
        }
    }

    /// Cases with a reduction theorem for the kind.
    pub fn reducible(kind: Kind) -> &'static [Case] {
        match kind {
            Kind::Symplectic => &[Case::Symplectic],
            Kind::Cosymplectic | Kind::Contact | Kind::Shs => &[Case::Vertical, Case::Horizontal],
            Kind::Cocontact => {
                &[Case::TzVertical, Case::TVerticalZHorizontal, Case::ZVerticalTHorizontal, Case::TzHorizontal]
            }
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), passed: residual <= tolerance, residual, tolerance }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Check { name: name.into(), passed: ok, residual: if ok { 0.0 } else { 1.0 }, tolerance: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub point: Option<Binding>,
    pub tangent: Subspace,
    pub orthogonal: Subspace,
    pub classification: ClassificationReport,
    pub verticality_case: Case,
    pub quotient: QuotientBasis,
    pub quotient_dim: usize,
    pub expected_dim: usize,
    /// Kind of the reduced structure; `None` when the quotient is a point.
    pub reduced_kind: Option<Kind>,
    pub reduced_structure: Option<GeometryDescriptor>,
    #[serde(skip)]
    pub reduced: Option<LinearGeometry>,
    pub checks: Vec<Check>,
}

impl ReductionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Classifies `w` against the Reeb fields of `g`.
pub fn detect_case(g: &LinearGeometry, w: &Subspace) -> Case {
    match g.kind() {
        Kind::Symplectic => Case::Symplectic,
        Kind::Cosymplectic | Kind::Contact | Kind::Shs => {
            if w.contains_vector(&g.reeb().unwrap()) {
                Case::Vertical
            } else if g.horizontal().contains(w) {
                Case::Horizontal
            } else {
                Case::Other
            }
        }
        Kind::Cocontact => {
            let tv = w.contains_vector(&g.reeb_t().unwrap());
            let zv = w.contains_vector(&g.reeb_z().unwrap());
            let th = g.ker_theta().unwrap().contains(w);
            let zh = g.ker_eta().unwrap().contains(w);
            match (tv, zv, th, zh) {
                (true, true, _, _) => Case::TzVertical,
                (true, _, _, true) => Case::TVerticalZHorizontal,
                (_, true, true, _) => Case::ZVerticalTHorizontal,
                (_, _, true, true) => Case::TzHorizontal,
                _ => Case::Other,
            }
        }
    }
}

/// Quotient dimension promised for the case. `k` is `dim W` except for
/// cocontact, where it is `dim(W ∩ ℋ_tz)`.
pub fn expected_quotient_dim(kind: Kind, case: Case, n: usize, k: usize) -> Option<usize> {
    let (n, k) = (n as i64, k as i64);
    let v = match (kind, case) {
        (Kind::Symplectic, Case::Symplectic) => 2 * k - 2 * n,
        (Kind::Cosymplectic | Kind::Contact | Kind::Shs, Case::Vertical) => 2 * (k - n - 1) + 1,
        (Kind::Cosymplectic | Kind::Shs, Case::Horizontal) => 2 * k - 2 * n,
        (Kind::Contact, Case::Horizontal) => 0,
        (Kind::Cocontact, Case::TzVertical) => 2 * (k - n) + 2,
        (Kind::Cocontact, Case::TVerticalZHorizontal) => 1,
        (Kind::Cocontact, Case::ZVerticalTHorizontal) => 2 * (k - n) + 1,
        (Kind::Cocontact, Case::TzHorizontal) => 0,
        _ => return None,
    };
    usize::try_from(v).ok()
}

/// Kind of `W / W^⊥Λ` for the case, `None` for a point.
fn reduced_kind(kind: Kind, case: Case) -> Option<Kind> {
    match (kind, case) {
        (Kind::Symplectic, _) => Some(Kind::Symplectic),
        (Kind::Cosymplectic, Case::Vertical) => Some(Kind::Cosymplectic),
        (Kind::Cosymplectic | Kind::Shs, Case::Horizontal) => Some(Kind::Symplectic),
        (Kind::Contact, Case::Vertical) => Some(Kind::Contact),
        (Kind::Cocontact, Case::TzVertical) => Some(Kind::Cocontact),
        (Kind::Cocontact, Case::TVerticalZHorizontal) => Some(Kind::Cosymplectic),
        (Kind::Cocontact, Case::ZVerticalTHorizontal) => Some(Kind::Contact),
        (Kind::Shs, Case::Vertical) => Some(Kind::Shs),
        _ => None,
    }
}

fn dlambda_of(g: &LinearGeometry) -> Option<&DMatrix<f64>> {
    g.shs_data().map(|s| &s.dlambda)
}

/// `Aᵀ M B`, or an empty 0 when either side is empty.
fn pairing(m: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        0.0
    } else {
        max_abs(&(a.transpose() * m * b))
    }
}

fn covector_on(alpha: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    if basis.ncols() == 0 {
        0.0
    } else {
        (basis.transpose() * alpha).amax()
    }
}

/// Reduces a coisotropic subspace `w` of `(R^d, g)` by its Λ-orthogonal.
pub fn linear_reduce(g: &LinearGeometry, w: &Subspace) -> Result<ReductionReport> {
    let classification = g.classify(w)?;
    if !classification.coisotropic {
        return Err(GeomError::NotCoisotropic { residual: classification.residuals.coisotropic });
    }
    let kind = g.kind();
    let n = g.n();
    let case = detect_case(g, w);
    let h = g.horizontal();
    let w_h = w.intersect(&h)?;
    if case == Case::Other {
        return Err(GeomError::CaseUnsupported {
            case: format!("{kind} {case}"),
            detail: format!(
                "dim W = {}, dim(W ∩ ℋ) = {}; reduction is only defined leafwise on W ∩ ℋ",
                w.dim(),
                w_h.dim()
            ),
        });
    }
    let scale = max_abs(g.two_form()).max(1.0);
    let mut checks = Vec::new();

    // integrability surrogates and hypotheses of the horizontal-type theorems
    let deta = g.two_form();
    match (kind, case) {
        (Kind::Contact, Case::Horizontal)
        | (Kind::Cocontact, Case::TVerticalZHorizontal)
        | (Kind::Cocontact, Case::TzHorizontal) => {
            let r = pairing(deta, w.basis(), w.basis());
            if r > DESCENT_TOL * scale {
                return Err(GeomError::HypothesisViolated(format!(
                    "{kind} {case} subspace is not integral to the contact distribution (|dη|W| = {r:.3e})"
                )));
            }
            checks.push(Check::new("deta_vanishes_on_w", r, DESCENT_TOL * scale));
        }
        (Kind::Shs, Case::Horizontal) => {
            let r = pairing(dlambda_of(g).unwrap(), w.basis(), w.basis());
            if r > DESCENT_TOL * scale {
                return Err(GeomError::HypothesisViolated(format!(
                    "horizontal SHS subspace is not integral to ker λ (|dλ|W| = {r:.3e})"
                )));
            }
            checks.push(Check::new("dlambda_vanishes_on_w", r, DESCENT_TOL * scale));
        }
        (Kind::Shs, Case::Vertical) => {
            let r = pairing(dlambda_of(g).unwrap(), w_h.basis(), w_h.basis());
            if r > DESCENT_TOL * scale {
                return Err(GeomError::HypothesisViolated(format!(
                    "i*dλ does not vanish on W ∩ ℋ ({r:.3e})"
                )));
            }
            checks.push(Check::new("dlambda_vanishes_on_w_cap_h", r, DESCENT_TOL * scale));
        }
        _ => {}
    }

    let orth = classification.orthogonal.clone();
    let kernel = orth.intersect(w)?;
    let q = quotient(w, &kernel)?;
    let m = q.dim();
    let k = if kind == Kind::Cocontact { w_h.dim() } else { w.dim() };
    let expected_dim = expected_quotient_dim(kind, case, n, k).unwrap_or(usize::MAX);

    checks.push(Check::new("orthogonal_in_w", classification.residuals.coisotropic, CONTAIN_TOL));
    checks.push(Check::new("kernel_kills_two_form", pairing(g.two_form(), kernel.basis(), w.basis()), DESCENT_TOL * scale));
    if let Some(th) = g.theta() {
        checks.push(Check::new("kernel_kills_theta", covector_on(th, kernel.basis()), DESCENT_TOL));
    }
    if let Some(et) = g.eta() {
        checks.push(Check::new("kernel_kills_eta", covector_on(et, kernel.basis()), DESCENT_TOL));
    }
    if let Some(dl) = dlambda_of(g) {
        if case == Case::Vertical {
            checks.push(Check::new("kernel_kills_dlambda", pairing(dl, kernel.basis(), w.basis()), DESCENT_TOL * scale));
        }
    }
    if matches!(case, Case::Vertical | Case::TzVertical | Case::TVerticalZHorizontal | Case::ZVerticalTHorizontal) {
        // horizontal parts of tangent vectors stay tangent
        let mut proj = DMatrix::<f64>::identity(g.dim(), g.dim());
        for (r, a) in g.reeb_vectors().iter().zip(g.one_forms()) {
            proj -= r * a.transpose();
        }
        let moved = Subspace::from_columns(&(proj * w.basis()));
        checks.push(Check::new("horizontal_projection_tangent", w.containment_residual(&moved), CONTAIN_TOL));
    }
    checks.push(Check::new("expected_dim", (m as f64 - expected_dim as f64).abs(), 0.0));

    let target = reduced_kind(kind, case);
    let reps = &q.representatives;
    let mut reduced = None;
    if let Some(rk) = target.filter(|_| m > 0) {
        let two = restrict_form(g.two_form(), reps);
        let theta_n = g.theta().map(|t| reps.transpose() * t);
        let eta_n = g.eta().map(|e| reps.transpose() * e);
        let n_red = (m - (rk.has_z() as usize) - (rk.has_t() as usize)) / 2;
        let built = match rk {
            Kind::Symplectic => LinearGeometry::from_forms(rk, n_red, two, None, None),
            Kind::Cosymplectic => LinearGeometry::from_forms(rk, n_red, two, theta_n, None),
            Kind::Contact => LinearGeometry::from_forms(rk, n_red, two, None, eta_n),
            Kind::Cocontact => LinearGeometry::from_forms(rk, n_red, two, theta_n, eta_n),
            Kind::Shs => {
                let dl = restrict_form(dlambda_of(g).unwrap(), reps);
                LinearGeometry::shs_from_forms(n_red, two, eta_n.unwrap(), dl)
            }
        };
        let parity_ok = (m - (rk.has_z() as usize) - (rk.has_t() as usize)) % 2 == 0;
        match built {
            Ok(red) if parity_ok => {
                // construction already rejected rank-deficient forms at RANK_RTOL
                checks.push(Check::new("reduced_nondegenerate", red.condition_number(), 1.0 / RANK_RTOL));
                reduced = Some(red);
            }
            _ => checks.push(Check::flag("reduced_nondegenerate", false)),
        }
    }
    if target.is_none() || m == 0 {
        // a point: the restricted forms must vanish identically
        checks.push(Check::new("reduced_point", m as f64, 0.0));
    }

    Ok(ReductionReport {
        point: None,
        tangent: w.clone(),
        orthogonal: orth,
        classification,
        verticality_case: case,
        quotient_dim: m,
        expected_dim,
        reduced_kind: target.filter(|_| m > 0),
        reduced_structure: reduced.as_ref().map(|r| r.descriptor()),
        reduced,
        quotient: q,
        checks,
    })
}

/// Largest discrepancy between the reduced forms computed on the stored
/// representatives and on `R1·G + K·X` for random invertible `G` and random `X`.
pub fn representative_independence<R: Rng>(g: &LinearGeometry, report: &ReductionReport, rng: &mut R) -> f64 {
    let q = &report.quotient;
    let m = q.dim();
    if m == 0 {
        return 0.0;
    }
    let r1 = &q.representatives;
    let mut gm = gaussian_matrix(rng, m, m) * 0.3;
    for i in 0..m {
        gm[(i, i)] += 1.0;
    }
    let kb = q.kernel.basis();
    let r2 = if kb.ncols() > 0 { r1 * &gm + kb * gaussian_matrix(rng, kb.ncols(), m) } else { r1 * &gm };
    let mut worst = max_abs(&(restrict_form(g.two_form(), &r2) - gm.transpose() * restrict_form(g.two_form(), r1) * &gm));
    for alpha in g.one_forms() {
        let a1 = gm.transpose() * (r1.transpose() * alpha);
        let a2 = r2.transpose() * alpha;
        worst = worst.max((a2 - a1).amax());
    }
    if let (Some(dl), Case::Vertical) = (dlambda_of(g), report.verticality_case) {
        worst = worst.max(max_abs(&(restrict_form(dl, &r2) - gm.transpose() * restrict_form(dl, r1) * &gm)));
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    pub reduction: ReductionReport,
    /// `π(L ∩ W)` in class coordinates.
    pub projected: Subspace,
    pub intersection_dim: usize,
    pub expected_dim: usize,
    /// Classification in the reduced structure; `None` when the quotient is a point.
    pub classification: Option<ClassificationReport>,
    pub lagrangian: bool,
}

/// Projects `L ∩ W` to `W / W^⊥Λ` and classifies the image.
pub fn project_through_reduction(g: &LinearGeometry, l: &Subspace, w: &Subspace) -> Result<ProjectionReport> {
    let lc = g.classify(l)?;
    if !lc.lagrangian {
        return Err(GeomError::NotLagrangian(format!(
            "subspace of dim {} is not Lagrangian/Legendrian (angle {:.3e})",
            l.dim(),
            lc.residuals.lagrangian
        )));
    }
    let reduction = linear_reduce(g, w)?;
    let cap = l.intersect(w)?;
    let m = reduction.quotient_dim;
    let projected = if cap.dim() == 0 || m == 0 {
        Subspace::zero(m)
    } else {
        Subspace::from_columns(&reduction.quotient.project(cap.basis()))
    };
    let (classification, lagrangian, expected_dim) = match &reduction.reduced {
        Some(red) => {
            let c = red.classify(&projected)?;
            let base = red.n();
            let expected = match red.kind() {
                Kind::Cosymplectic | Kind::Shs if !c.horizontal => base + 1,
                _ => base,
            };
            let ok = c.lagrangian && c.lagrangian_by_forms;
            (Some(c), ok, expected)
        }
        None => (None, projected.dim() == 0, 0),
    };
    Ok(ProjectionReport {
        intersection_dim: cap.dim(),
        lagrangian: lagrangian && projected.dim() == expected_dim,
        expected_dim,
        projected,
        classification,
        reduction,
    })
}

/// Random coisotropic subspace of `g` realizing `case`. Horizontal-type cases
/// whose theorems need an integral subspace, and SHS vertical cases with
/// `f ≠ 0`, use a Lagrangian core.
pub fn random_case_subspace(rng: &mut SeededRng, g: &LinearGeometry, case: Case) -> Subspace {
    let n = g.n();
    let f = g.shs_data().map_or(0.0, |s| s.f);
    let integral = match (g.kind(), case) {
        (Kind::Contact, Case::Horizontal) => true,
        (Kind::Cocontact, Case::TVerticalZHorizontal | Case::TzHorizontal) => true,
        (Kind::Shs, _) => f.abs() > 1e-12,
        _ => false,
    };
    let m = match case {
        // C must leave room in ℋ for the tilt
        Case::Other => rng.random_range(0..n),
        _ if integral => 0,
        _ => rng.random_range(0..=n),
    };
    let c = random_coisotropic_in_h(rng, g, m);
    let d = g.dim();
    let add = |s: Subspace, v: DVector<f64>| s.sum(&Subspace::from_vectors(d, &[v]).unwrap()).unwrap();
    match case {
        Case::Symplectic | Case::Horizontal | Case::TzHorizontal => c,
        Case::Vertical => add(c, g.reeb().unwrap()),
        Case::TzVertical => add(add(c, g.reeb_t().unwrap()), g.reeb_z().unwrap()),
        Case::TVerticalZHorizontal => add(c, g.reeb_t().unwrap()),
        Case::ZVerticalTHorizontal => add(c, g.reeb_z().unwrap()),
        Case::Other => {
            // tilt a Reeb direction by a horizontal vector outside C
            let h = g.horizontal();
            let mut tilt = g.reeb_vectors().iter().fold(DVector::zeros(d), |acc, r| acc + r);
            let extra = random_subspace_in(rng, &h, 1).basis().column(0).into_owned();
            let out = &extra - c.projector() * &extra;
            tilt += &out / out.norm();
            add(c, tilt)
        }
    }
}

/// Random Lagrangian/Legendrian subspace of `g`; for cosymplectic and SHS
/// structures it is non-horizontal with probability one half.
pub fn random_lagrangian(rng: &mut SeededRng, g: &LinearGeometry) -> Subspace {
    let l = crate::sampling::random_graph_lagrangian(rng, g);
    if matches!(g.kind(), Kind::Cosymplectic | Kind::Shs) && rng.random_bool(0.5) {
        let v = g.reeb().unwrap() + g.horizontal().basis() * gaussian_vector(rng, 2 * g.n());
        return l.sum(&Subspace::from_vectors(g.dim(), &[v]).unwrap()).unwrap();
    }
    l
}

/// Submanifold `N = {Φ_a = 0}` of a Darboux chart.
#[derive(Clone, Debug)]
pub struct ConstraintManifold {
    pub chart: Chart,
    pub constraints: Vec<Expression>,
    pub params: Binding,
    pub shs: Option<ShsCoefficients>,
    jacobian: Vec<Vec<Expression>>,
}

impl ConstraintManifold {
    pub fn new(kind: Kind, n: usize, constraints: Vec<Expression>, params: Binding) -> Result<Self> {
        let chart = Chart::new(kind, n)?;
        if constraints.is_empty() {
            return Err(GeomError::InvalidInput("at least one constraint is required".into()));
        }
        let names = chart.names();
        let jacobian = constraints.iter().map(|c| names.iter().map(|v| c.differentiate(v)).collect()).collect();
        Ok(ConstraintManifold { chart, constraints, params, shs: None, jacobian })
    }

    pub fn with_shs(mut self, shs: ShsCoefficients) -> Self {
        self.shs = Some(shs);
        self
    }

    fn bind(&self, x: &[f64]) -> Binding {
        self.chart.bind(x, &self.params)
    }

    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let b = self.bind(x);
        Ok(self.constraints.iter().map(|c| c.evaluate(&b)).collect::<std::result::Result<_, _>>()?)
    }

    /// Rows are `dΦ_a` at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let b = self.bind(x);
        let d = self.chart.dim();
        let mut jac = DMatrix::zeros(self.constraints.len(), d);
        for (a, row) in self.jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                jac[(a, j)] = e.evaluate(&b)?;
            }
        }
        Ok(jac)
    }

    /// Structure of the ambient kind at `x`.
    pub fn geometry_at(&self, x: &[f64]) -> Result<LinearGeometry> {
        let b = self.bind(x);
        match (&self.shs, self.chart.kind) {
            (Some(shs), Kind::Shs) => shs.geometry_at(&b),
            (None, Kind::Shs) => Err(GeomError::InvalidInput("SHS manifold needs coefficients a, b".into())),
            (_, kind) => LinearGeometry::standard(kind, self.chart.n, &b),
        }
    }

    fn full_rank_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let jac = self.jacobian(x)?;
        let rank = linalg::rank(&jac, RANK_RTOL);
        if rank < self.constraints.len() {
            return Err(GeomError::DegenerateConstraints { rank, count: self.constraints.len() });
        }
        Ok(jac)
    }

    pub fn tangent_space_at(&self, x: &[f64]) -> Result<Subspace> {
        if x.len() != self.chart.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.chart.dim(), found: x.len() });
        }
        let residual = self.values(x)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual > 1e-8 {
            return Err(GeomError::NotOnManifold { residual });
        }
        let jac = self.full_rank_jacobian(x)?;
        let rows: Vec<DVector<f64>> = jac.row_iter().map(|r| r.transpose()).collect();
        Subspace::kernel_of(&rows, self.chart.dim())
    }

    pub fn reduce_at(&self, x: &[f64]) -> Result<ReductionReport> {
        let tangent = self.tangent_space_at(x)?;
        let g = self.geometry_at(x)?;
        let mut report = linear_reduce(&g, &tangent)?;
        report.point = Some(self.bind(x));
        Ok(report)
    }

    /// Orthonormal basis of `♯_Λ(span dΦ_a)`, the extension of `(TN)^⊥Λ`
    /// to the level sets through `x`.
    fn orthogonal_frame(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.geometry_at(x)?;
        let jac = self.full_rank_jacobian(x)?;
        Ok(linalg::orth(&(g.lambda_matrix().transpose() * jac.transpose()), RANK_RTOL))
    }
}

/// Largest component of `[X_i, X_j]` outside `(TN)^⊥Λ` at `x`, for frame
/// fields obtained by projecting the frame at `x` onto the distribution at
/// nearby points. Brackets use central differences with step `h`.
pub fn involutivity_residual(manifold: &ConstraintManifold, x: &[f64], h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(GeomError::InvalidInput(format!("step must be positive, got {h}")));
    }
    manifold.tangent_space_at(x)?;
    let reference = manifold.orthogonal_frame(x)?;
    let r = reference.ncols();
    let d = x.len();
    if r == 0 {
        return Ok(0.0);
    }
    let frame = |y: &DVector<f64>| -> Result<DMatrix<f64>> {
        let basis = manifold.orthogonal_frame(y.as_slice())?;
        if basis.ncols() != r {
            return Err(GeomError::RankJump { expected: r, found: basis.ncols() });
        }
        let p = &basis * basis.transpose();
        Ok(linalg::reorthonormalize_ordered(&(p * &reference)))
    };
    let x0 = DVector::from_column_slice(x);
    let at_x = frame(&x0)?;
    // derivative of field j along field i
    let directional = |j: usize, dir: &DVector<f64>| -> Result<DVector<f64>> {
        let plus = frame(&(&x0 + dir * h))?;
        let minus = frame(&(&x0 - dir * h))?;
        Ok((plus.column(j) - minus.column(j)) / (2.0 * h))
    };
    let outside = DMatrix::<f64>::identity(d, d) - &at_x * at_x.transpose();
    let mut worst: f64 = 0.0;
    for i in 0..r {
        for j in i..r {
            let xi = at_x.column(i).into_owned();
            let xj = at_x.column(j).into_owned();
            let bracket = directional(j, &xi)? - directional(i, &xj)?;
            worst = worst.max((&outside * bracket).amax());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct CpSummary {
    pub n: usize,
    pub samples: usize,
    pub max_generator_angle: f64,
    pub quotient_dims: Vec<usize>,
    pub all_dims_ok: bool,
    pub all_nondegenerate: bool,
    pub max_condition_number: f64,
}

impl CpSummary {
    pub fn passed(&self) -> bool {
        self.all_dims_ok && self.all_nondegenerate && self.max_generator_angle <= linalg::SPAN_ANGLE_TOL
    }
}

/// `Σ (p_i ∂q_i − q_i ∂p_i)` at `x` in a symplectic chart.
pub fn hopf_generator(x: &[f64]) -> DVector<f64> {
    let n = x.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { x[n + i] } else { -x[i - n] })
}

/// Sphere `Σ q_i² + p_i² = 1` in symplectic `R^{2(n+1)}`.
pub fn sphere(n: usize) -> ConstraintManifold {
    let dof = n + 1;
    let sum: Vec<String> = (1..=dof).flat_map(|i| [format!("q{i}^2"), format!("p{i}^2")]).collect();
    let phi = Expression::parse(&format!("{} - 1", sum.join(" + "))).expect("sphere constraint parses");
    ConstraintManifold::new(Kind::Symplectic, dof, vec![phi], Binding::new()).expect("n + 1 >= 1")
}

/// Reduction of `S^{2n+1} ⊂ R^{2n+2}` at random sphere points.
pub fn cp_example(n: usize, samples: usize, rng: &mut SeededRng) -> Result<CpSummary> {
    if n < 1 {
        return Err(GeomError::InvalidDimension(format!("n must be at least 1, got {n}")));
    }
    let s = sphere(n);
    let mut max_angle: f64 = 0.0;
    let mut dims = Vec::with_capacity(samples);
    let mut nondegenerate = true;
    let mut max_cond: f64 = 0.0;
    for _ in 0..samples {
        let v = gaussian_vector(rng, 2 * n + 2);
        let x = &v / v.norm();
        let report = s.reduce_at(x.as_slice())?;
        let gen = Subspace::from_vectors(2 * n + 2, &[hopf_generator(x.as_slice())])?;
        max_angle = max_angle.max(report.orthogonal.max_principal_angle(&gen));
        dims.push(report.quotient_dim);
        match &report.reduced {
            Some(red) if report.passed() => max_cond = max_cond.max(red.condition_number()),
            _ => nondegenerate = false,
        }
    }
    Ok(CpSummary {
        n,
        samples,
        max_generator_angle: max_angle,
        all_dims_ok: dims.iter().all(|&m| m == 2 * n),
        quotient_dims: dims,
        all_nondegenerate: nondegenerate,
        max_condition_number: max_cond,
    })
}

#[cfg(test)]
mod tests;
