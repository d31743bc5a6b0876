//! The five linear structures at a chart point.
//!
//! A structure is a 2-form matrix `M` (with `ω(u, v) = uᵀ M v`) and up to two
//! one-forms. The flat map is `v ↦ i_v M + Σ α(v) α`, i.e. the matrix
//! `Mᵀ + Σ α αᵀ`; nondegeneracy of every kind reduces to its invertibility.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chart::{Chart, Kind};
use crate::error::{GeomError, Result};
use crate::expr::{Binding, Expression};
use crate::linalg::{self, max_abs, Subspace, RANK_RTOL};

/// Tolerance for containment and restriction tests on orthonormal bases.
pub const CONTAIN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Flat,
    Sharp,
}

/// Bivector `Λ` and vector field `E` at a point.
#[derive(Clone, Debug, Serialize)]
pub struct JacobiPair {
    #[serde(serialize_with = "crate::linalg::ser::rows")]
    pub lambda: DMatrix<f64>,
    #[serde(serialize_with = "crate::linalg::ser::vector")]
    pub e_field: DVector<f64>,
}

impl JacobiPair {
    /// `♯_Λ(α) = Λ(α, ·)`.
    pub fn sharp(&self, alpha: &DVector<f64>) -> DVector<f64> {
        self.lambda.transpose() * alpha
    }

    /// `Λ(df, dg) + f E(g) − g E(f)` from values and differentials.
    pub fn bracket(&self, f: f64, df: &DVector<f64>, g: f64, dg: &DVector<f64>) -> f64 {
        df.dot(&(&self.lambda * dg)) + f * self.e_field.dot(dg) - g * self.e_field.dot(df)
    }
}

/// SHS data at a point: the coefficients of `λ = a dq + b dp + dz` and `dλ`.
#[derive(Clone, Debug, Serialize)]
pub struct ShsPoint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(serialize_with = "crate::linalg::ser::rows")]
    pub dlambda: DMatrix<f64>,
    /// `dλ(∂q1, ∂p1)`, the candidate conformal factor.
    pub f: f64,
    /// `max |dλ − f ω|`.
    pub conformal_residual: f64,
}

#[derive(Clone, Debug)]
pub struct LinearGeometry {
    chart: Chart,
    two_form: DMatrix<f64>,
    theta: Option<DVector<f64>>,
    eta: Option<DVector<f64>>,
    shs: Option<ShsPoint>,
    flat: DMatrix<f64>,
    sharp: DMatrix<f64>,
    condition: f64,
}

fn darboux_two_form(chart: &Chart) -> DMatrix<f64> {
    let d = chart.dim();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..chart.n {
        m[(chart.q(i), chart.p(i))] = 1.0;
        m[(chart.p(i), chart.q(i))] = -1.0;
    }
    m
}

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

fn coordinate(point: &Binding, name: &str) -> Result<f64> {
    point.get(name).ok_or_else(|| GeomError::MissingCoordinate(name.to_string()))
}

/// `η = dz − p_i dq^i` at the point.
fn contact_form(chart: &Chart, point: &Binding) -> Result<DVector<f64>> {
    let mut eta = unit(chart.dim(), chart.z().expect("chart has z"));
    for i in 0..chart.n {
        eta[chart.q(i)] = -coordinate(point, &format!("p{}", i + 1))?;
    }
    Ok(eta)
}

fn shs_lambda(chart: &Chart, a: &[f64], b: &[f64]) -> DVector<f64> {
    let mut l = unit(chart.dim(), chart.z().expect("chart has z"));
    for i in 0..chart.n {
        l[chart.q(i)] = a[i];
        l[chart.p(i)] = b[i];
    }
    l
}

impl LinearGeometry {
    /// Darboux structure of the given kind. Contact kinds read `p_i` from the
    /// point; SHS reads constant coefficients `a1..an`, `b1..bn` (so `dλ = 0`).
    pub fn standard(kind: Kind, n: usize, point: &Binding) -> Result<Self> {
        let chart = Chart::new(kind, n)?;
        let d = chart.dim();
        let two_form = darboux_two_form(&chart);
        match kind {
            Kind::Symplectic => Self::assemble(chart, two_form, None, None, None),
            Kind::Cosymplectic => Self::assemble(chart, two_form, Some(unit(d, chart.t().unwrap())), None, None),
            Kind::Contact => {
                let eta = contact_form(&chart, point)?;
                Self::assemble(chart, two_form, None, Some(eta), None)
            }
            Kind::Cocontact => {
                let eta = contact_form(&chart, point)?;
                Self::assemble(chart, two_form, Some(unit(d, chart.t().unwrap())), Some(eta), None)
            }
            Kind::Shs => {
                let a = (1..=n).map(|i| coordinate(point, &format!("a{i}"))).collect::<Result<Vec<_>>>()?;
                let b = (1..=n).map(|i| coordinate(point, &format!("b{i}"))).collect::<Result<Vec<_>>>()?;
                Self::shs(n, &a, &b, DMatrix::zeros(d, d))
            }
        }
    }

    /// SHS in Darboux-like coordinates with explicit `dλ`.
    pub fn shs(n: usize, a: &[f64], b: &[f64], dlambda: DMatrix<f64>) -> Result<Self> {
        let chart = Chart::new(Kind::Shs, n)?;
        let d = chart.dim();
        if a.len() != n || b.len() != n {
            return Err(GeomError::DimensionMismatch { expected: n, found: a.len().min(b.len()) });
        }
        if dlambda.shape() != (d, d) {
            return Err(GeomError::DimensionMismatch { expected: d, found: dlambda.nrows() });
        }
        let omega = darboux_two_form(&chart);
        let z = chart.z().unwrap();
        // ker ω = ⟨∂z⟩ must lie in ker dλ
        let leak = dlambda.row(z).amax().max(dlambda.column(z).amax());
        if leak > CONTAIN_TOL * max_abs(&dlambda).max(1.0) {
            return Err(GeomError::SingularStructure(format!("ker ω ⊄ ker dλ (|i_∂z dλ| = {leak:.3e})")));
        }
        let f = if n > 0 { dlambda[(chart.q(0), chart.p(0))] } else { 0.0 };
        let conformal_residual = max_abs(&(&dlambda - &omega * f));
        let lambda = shs_lambda(&chart, a, b);
        let data = ShsPoint { a: a.to_vec(), b: b.to_vec(), dlambda, f, conformal_residual };
        Self::assemble(chart, omega, None, Some(lambda), Some(data))
    }

    /// Structure from raw forms in an arbitrary (not necessarily Darboux)
    /// basis of R^d. Used for reduced structures on quotients.
    pub fn from_forms(
        kind: Kind,
        n: usize,
        two_form: DMatrix<f64>,
        theta: Option<DVector<f64>>,
        eta: Option<DVector<f64>>,
    ) -> Result<Self> {
        let chart = Chart { kind, n };
        let need = (kind == Kind::Cosymplectic || kind == Kind::Cocontact, kind.has_z());
        if need != (theta.is_some(), eta.is_some()) {
            return Err(GeomError::InvalidInput(format!("wrong one-forms for a {kind} structure")));
        }
        let shs = (kind == Kind::Shs).then(|| {
            let d = chart.dim();
            ShsPoint { a: vec![], b: vec![], dlambda: DMatrix::zeros(d, d), f: 0.0, conformal_residual: 0.0 }
        });
        Self::assemble(chart, two_form, theta, eta, shs)
    }

    /// SHS from raw forms with an explicit `dλ`; checks `ker ω ⊆ ker dλ`.
    pub fn shs_from_forms(n: usize, two_form: DMatrix<f64>, lambda: DVector<f64>, dlambda: DMatrix<f64>) -> Result<Self> {
        let mut g = Self::from_forms(Kind::Shs, n, two_form, None, Some(lambda))?;
        let d = g.dim();
        if dlambda.shape() != (d, d) {
            return Err(GeomError::DimensionMismatch { expected: d, found: dlambda.nrows() });
        }
        let r = g.reeb_z().unwrap();
        let leak = (&dlambda * &r).amax();
        if leak > CONTAIN_TOL * max_abs(&dlambda).max(1.0) {
            return Err(GeomError::SingularStructure(format!("ker ω ⊄ ker dλ (|i_R dλ| = {leak:.3e})")));
        }
        // least-squares conformal factor dλ ≈ f ω
        let norm = g.two_form.norm_squared();
        let f = if norm > 0.0 { g.two_form.dot(&dlambda) / norm } else { 0.0 };
        let conformal_residual = max_abs(&(&dlambda - &g.two_form * f));
        g.shs = Some(ShsPoint { a: vec![], b: vec![], dlambda, f, conformal_residual });
        Ok(g)
    }

    fn assemble(
        chart: Chart,
        two_form: DMatrix<f64>,
        theta: Option<DVector<f64>>,
        eta: Option<DVector<f64>>,
        shs: Option<ShsPoint>,
    ) -> Result<Self> {
        let d = chart.dim();
        if two_form.shape() != (d, d) {
            return Err(GeomError::DimensionMismatch { expected: d, found: two_form.nrows() });
        }
        for form in theta.iter().chain(eta.iter()) {
            if form.len() != d {
                return Err(GeomError::DimensionMismatch { expected: d, found: form.len() });
            }
        }
        let asym = max_abs(&(&two_form + two_form.transpose()));
        if asym > 1e-12 * max_abs(&two_form).max(1.0) {
            return Err(GeomError::InvalidInput(format!("2-form is not antisymmetric ({asym:.3e})")));
        }
        let mut flat = two_form.transpose();
        for form in theta.iter().chain(eta.iter()) {
            flat += form * form.transpose();
        }
        if d == 0 {
            return Ok(LinearGeometry { chart, two_form, theta, eta, shs, sharp: flat.clone(), flat, condition: 1.0 });
        }
        let s = linalg::singular_values(&flat);
        let top = s.first().copied().unwrap_or(0.0);
        let bottom = s.last().copied().unwrap_or(0.0);
        if s.len() < d || bottom <= linalg::rank_threshold(top, RANK_RTOL) {
            return Err(GeomError::SingularStructure(format!(
                "{} flat map has rank {} < {d}",
                chart.kind,
                linalg::rank(&flat, RANK_RTOL)
            )));
        }
        let sharp = flat.clone().try_inverse().ok_or_else(|| GeomError::SingularStructure("flat map not invertible".into()))?;
        Ok(LinearGeometry { chart, two_form, theta, eta, shs, flat, sharp, condition: top / bottom })
    }

    pub fn kind(&self) -> Kind {
        self.chart.kind
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn two_form(&self) -> &DMatrix<f64> {
        &self.two_form
    }

    pub fn theta(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    /// η for contact kinds, λ for SHS.
    pub fn eta(&self) -> Option<&DVector<f64>> {
        self.eta.as_ref()
    }

    pub fn one_forms(&self) -> Vec<&DVector<f64>> {
        self.theta.iter().chain(self.eta.iter()).collect()
    }

    pub fn shs_data(&self) -> Option<&ShsPoint> {
        self.shs.as_ref()
    }

    pub fn flat_matrix(&self) -> &DMatrix<f64> {
        &self.flat
    }

    pub fn sharp_matrix(&self) -> &DMatrix<f64> {
        &self.sharp
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn flat(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.flat * v
    }

    pub fn sharp(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.sharp * alpha
    }

    pub fn musical(&self, direction: Direction, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != self.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.dim(), found: input.len() });
        }
        Ok(match direction {
            Direction::Flat => self.flat(input),
            Direction::Sharp => self.sharp(input),
        })
    }

    /// `R_t = ♯θ` for the time-dependent kinds.
    pub fn reeb_t(&self) -> Option<DVector<f64>> {
        self.theta.as_ref().map(|th| self.sharp(th))
    }

    /// `R = ♯η` (contact kinds) or `♯λ` (SHS).
    pub fn reeb_z(&self) -> Option<DVector<f64>> {
        self.eta.as_ref().map(|et| self.sharp(et))
    }

    /// The distinguished Reeb field: `∂t` for cosymplectic, `∂z` otherwise.
    pub fn reeb(&self) -> Option<DVector<f64>> {
        match self.kind() {
            Kind::Cosymplectic => self.reeb_t(),
            _ => self.reeb_z(),
        }
    }

    pub fn reeb_vectors(&self) -> Vec<DVector<f64>> {
        self.reeb_t().into_iter().chain(self.reeb_z()).collect()
    }

    /// Common kernel of the one-forms (`ℋ`, or `ℋ_tz` for cocontact).
    pub fn horizontal(&self) -> Subspace {
        let forms: Vec<DVector<f64>> = self.one_forms().into_iter().cloned().collect();
        Subspace::kernel_of(&forms, self.dim()).expect("forms have chart length")
    }

    pub fn ker_theta(&self) -> Option<Subspace> {
        self.theta.as_ref().map(|t| Subspace::kernel_of(std::slice::from_ref(t), self.dim()).unwrap())
    }

    pub fn ker_eta(&self) -> Option<Subspace> {
        self.eta.as_ref().map(|e| Subspace::kernel_of(std::slice::from_ref(e), self.dim()).unwrap())
    }

    /// Span of the Reeb fields.
    pub fn vertical(&self) -> Subspace {
        Subspace::from_vectors(self.dim(), &self.reeb_vectors()).unwrap()
    }

    /// `Λ(α, β) = σ·M(♯α, ♯β)`, with σ = −1 for the contact kinds.
    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        let sign = if matches!(self.kind(), Kind::Contact | Kind::Cocontact) { -1.0 } else { 1.0 };
        self.sharp.transpose() * &self.two_form * &self.sharp * sign
    }

    pub fn jacobi_pair(&self) -> JacobiPair {
        let d = self.dim();
        let e_field = match self.kind() {
            Kind::Symplectic | Kind::Cosymplectic => DVector::zeros(d),
            Kind::Contact | Kind::Cocontact => -self.reeb_z().unwrap(),
            Kind::Shs => self.reeb_z().unwrap() * self.shs.as_ref().map_or(0.0, |s| s.f),
        };
        JacobiPair { lambda: self.lambda_matrix(), e_field }
    }

    /// `♯_Λ(Δ⁰)`.
    pub fn lambda_orthogonal(&self, delta: &Subspace) -> Result<Subspace> {
        self.check(delta)?;
        let ann = delta.annihilator();
        if ann.dim() == 0 {
            return Ok(Subspace::zero(self.dim()));
        }
        Ok(Subspace::from_columns(&(self.lambda_matrix().transpose() * ann.basis())))
    }

    /// `{v ∈ within : M(v, w) = 0 ∀ w ∈ delta}` for this structure's 2-form.
    pub fn form_orthogonal(&self, within: &Subspace, delta: &Subspace) -> Result<Subspace> {
        self.check(within)?;
        self.check(delta)?;
        Ok(form_orthogonal(&self.two_form, within, delta))
    }

    fn check(&self, s: &Subspace) -> Result<()> {
        if s.ambient_dim() != self.dim() {
            return Err(GeomError::DimensionMismatch { expected: self.dim(), found: s.ambient_dim() });
        }
        Ok(())
    }

    pub fn classify(&self, delta: &Subspace) -> Result<ClassificationReport> {
        classify_subspace(self, delta)
    }

    pub fn descriptor(&self) -> GeometryDescriptor {
        GeometryDescriptor {
            kind: self.kind(),
            n: self.n(),
            dim: self.dim(),
            two_form: linalg::ser::to_rows(&self.two_form),
            theta: self.theta.as_ref().map(|v| v.iter().copied().collect()),
            eta: self.eta.as_ref().map(|v| v.iter().copied().collect()),
            reeb: self.reeb_vectors().iter().map(|v| v.iter().copied().collect()).collect(),
            condition_number: self.condition,
        }
    }
}

/// Serializable summary of a structure.
#[derive(Clone, Debug, Serialize)]
pub struct GeometryDescriptor {
    pub kind: Kind,
    pub n: usize,
    pub dim: usize,
    pub two_form: Vec<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub reeb: Vec<Vec<f64>>,
    pub condition_number: f64,
}

pub fn standard_structure(kind: Kind, n: usize, point: &Binding) -> Result<LinearGeometry> {
    LinearGeometry::standard(kind, n, point)
}

pub fn musical(g: &LinearGeometry, direction: Direction, input: &DVector<f64>) -> Result<DVector<f64>> {
    g.musical(direction, input)
}

pub fn jacobi_pair(g: &LinearGeometry) -> JacobiPair {
    g.jacobi_pair()
}

pub fn lambda_orthogonal(g: &LinearGeometry, delta: &Subspace) -> Result<Subspace> {
    g.lambda_orthogonal(delta)
}

/// Orthogonal of `delta` for the bilinear form `m`, taken inside `within`.
pub fn form_orthogonal(m: &DMatrix<f64>, within: &Subspace, delta: &Subspace) -> Subspace {
    if delta.dim() == 0 || within.dim() == 0 {
        return within.clone();
    }
    let constraint = delta.basis().transpose() * m.transpose() * within.basis();
    let coeffs = linalg::null_space(&constraint, RANK_RTOL);
    Subspace::from_columns(&(within.basis() * coeffs))
}

/// Cocontact-only horizontality and verticality flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CocontactFlags {
    pub t_horizontal: bool,
    pub z_horizontal: bool,
    pub t_vertical: bool,
    pub z_vertical: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationResiduals {
    /// Escape of Δ from Δ^⊥Λ.
    pub isotropic: f64,
    /// Escape of Δ^⊥Λ from Δ.
    pub coisotropic: f64,
    /// Principal angle between the two sides of the Lagrangian predicate.
    pub lagrangian: f64,
    /// Norms of the one-forms and 2-form restricted to Δ.
    pub restricted_one_forms: Vec<f64>,
    pub restricted_two_form: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub kind: Kind,
    pub dim: usize,
    pub ambient_dim: usize,
    pub orthogonal: Subspace,
    pub isotropic: bool,
    pub coisotropic: bool,
    /// Lagrangian (Poisson kinds, SHS) or Legendrian (contact kinds) via Λ-orthogonals:
    /// symplectic Δ^⊥ = Δ; cosymplectic and SHS Δ^⊥Λ = Δ ∩ ℋ; contact kinds Δ^⊥Λ = Δ.
    pub lagrangian: bool,
    /// The same property from restrictions of the structure forms and dimensions.
    pub lagrangian_by_forms: bool,
    /// SHS only: the literal predicate Δ^⊥Λ = Δ^⊥Λ ∩ ℋ.
    pub shs_literal_lagrangian: Option<bool>,
    pub symplectic_subspace: bool,
    pub horizontal: bool,
    pub vertical: bool,
    pub cocontact: Option<CocontactFlags>,
    pub residuals: ClassificationResiduals,
}

fn restricted_norm(form: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    if basis.ncols() == 0 {
        0.0
    } else {
        (basis.transpose() * form).amax()
    }
}

fn restricted_two(m: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    if basis.ncols() == 0 {
        0.0
    } else {
        max_abs(&linalg::restrict_form(m, basis))
    }
}

pub fn classify_subspace(g: &LinearGeometry, delta: &Subspace) -> Result<ClassificationReport> {
    let orth = g.lambda_orthogonal(delta)?;
    let n = g.n();
    let h = g.horizontal();
    let iso_res = orth.containment_residual(delta);
    let coiso_res = delta.containment_residual(&orth);
    let isotropic = delta.dim() <= orth.dim() && iso_res <= CONTAIN_TOL;
    let coisotropic = orth.dim() <= delta.dim() && coiso_res <= CONTAIN_TOL;

    let basis = delta.basis();
    let one_res: Vec<f64> = g.one_forms().iter().map(|f| restricted_norm(f, basis)).collect();
    let two_res = restricted_two(g.two_form(), basis);
    let scale = max_abs(g.two_form()).max(1.0);
    let kills = |r: f64| r <= CONTAIN_TOL * scale;

    let horizontal = h.contains(delta);
    let reebs = g.reeb_vectors();
    let vertical = !reebs.is_empty() && reebs.iter().all(|r| delta.contains_vector(r));
    let delta_h = delta.intersect(&h)?;

    let (lagrangian, lag_angle) = match g.kind() {
        Kind::Symplectic | Kind::Contact | Kind::Cocontact => {
            let a = orth.max_principal_angle(delta);
            (a <= crate::linalg::SPAN_ANGLE_TOL, a)
        }
        Kind::Cosymplectic | Kind::Shs => {
            let a = orth.max_principal_angle(&delta_h);
            (a <= crate::linalg::SPAN_ANGLE_TOL, a)
        }
    };

    let k = delta.dim();
    let lagrangian_by_forms = match g.kind() {
        Kind::Symplectic => k == n && kills(two_res),
        Kind::Cosymplectic | Kind::Shs => {
            // ω restricted to Δ ∩ ℋ vanishes and Δ has the leafwise dimension
            let leaf_two = restricted_two(g.two_form(), delta_h.basis());
            kills(leaf_two) && ((horizontal && k == n) || (!horizontal && k == n + 1))
        }
        Kind::Contact | Kind::Cocontact => k == n && one_res.iter().all(|&r| kills(r)) && kills(two_res),
    };

    let shs_literal_lagrangian = (g.kind() == Kind::Shs).then(|| h.contains(&orth));
    let symplectic_subspace = delta.intersect(&orth)?.is_zero();

    let cocontact = (g.kind() == Kind::Cocontact).then(|| CocontactFlags {
        t_horizontal: g.ker_theta().unwrap().contains(delta),
        z_horizontal: g.ker_eta().unwrap().contains(delta),
        t_vertical: delta.contains_vector(&g.reeb_t().unwrap()),
        z_vertical: delta.contains_vector(&g.reeb_z().unwrap()),
    });

    Ok(ClassificationReport {
        kind: g.kind(),
        dim: k,
        ambient_dim: g.dim(),
        orthogonal: orth,
        isotropic,
        coisotropic,
        lagrangian,
        lagrangian_by_forms,
        shs_literal_lagrangian,
        symplectic_subspace,
        horizontal,
        vertical,
        cocontact,
        residuals: ClassificationResiduals {
            isotropic: iso_res,
            coisotropic: coiso_res,
            lagrangian: lag_angle,
            restricted_one_forms: one_res,
            restricted_two_form: two_res,
        },
    })
}

/// Symbolic SHS coefficients `a_i(q, p)`, `b^i(q, p)`.
#[derive(Clone, Debug)]
pub struct ShsCoefficients {
    pub a: Vec<Expression>,
    pub b: Vec<Expression>,
}

/// Result of the Jacobi-compatibility test `dλ = f ω`, `♯(df) ∈ 𝒱`.
#[derive(Clone, Debug, Serialize)]
pub struct ShsCompatibility {
    pub f: String,
    pub conformal_residual: f64,
    pub df_vertical_residual: f64,
    pub samples: usize,
}

impl ShsCompatibility {
    pub fn residual(&self) -> f64 {
        self.conformal_residual.max(self.df_vertical_residual)
    }
}

impl ShsCoefficients {
    pub fn new(a: Vec<Expression>, b: Vec<Expression>) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(GeomError::DimensionMismatch { expected: a.len().max(1), found: b.len() });
        }
        Ok(ShsCoefficients { a, b })
    }

    pub fn parse(a: &[&str], b: &[&str]) -> Result<Self> {
        let p = |v: &[&str]| v.iter().map(|s| Expression::parse(s)).collect::<std::result::Result<Vec<_>, _>>();
        Self::new(p(a)?, p(b)?)
    }

    pub fn constant(a: &[f64], b: &[f64]) -> Result<Self> {
        Self::new(a.iter().map(|&v| Expression::num(v)).collect(), b.iter().map(|&v| Expression::num(v)).collect())
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Components of λ as expressions, in chart order.
    pub fn lambda_components(&self) -> Vec<Expression> {
        let mut v: Vec<Expression> = self.a.clone();
        v.extend(self.b.iter().cloned());
        v.push(Expression::num(1.0));
        v
    }

    /// `f = (1/n) Σ (∂b^i/∂q^i − ∂a_i/∂p_i)`, the average over the
    /// `(q^i, p_i)` blocks of `dλ`; exact whenever `dλ = f ω`.
    pub fn conformal_factor(&self) -> Expression {
        use crate::expr::{add, div, sub};
        let mut f = Expression::num(0.0);
        for i in 0..self.n() {
            let term = sub(self.b[i].differentiate(&format!("q{}", i + 1)), self.a[i].differentiate(&format!("p{}", i + 1)));
            f = add(f, term);
        }
        if self.n() > 1 {
            f = div(f, Expression::num(self.n() as f64));
        }
        f
    }

    /// `dλ` matrix with `M_jk = ∂_j λ_k − ∂_k λ_j`.
    pub fn dlambda_at(&self, point: &Binding) -> Result<DMatrix<f64>> {
        let chart = Chart::new(Kind::Shs, self.n())?;
        let names = chart.names();
        let comps = self.lambda_components();
        let d = chart.dim();
        let mut jac = DMatrix::zeros(d, d);
        for (k, c) in comps.iter().enumerate() {
            for (j, name) in names.iter().enumerate() {
                jac[(j, k)] = c.differentiate(name).evaluate(point)?;
            }
        }
        Ok(&jac - jac.transpose())
    }

    pub fn geometry_at(&self, point: &Binding) -> Result<LinearGeometry> {
        let a = self.a.iter().map(|e| e.evaluate(point)).collect::<std::result::Result<Vec<_>, _>>()?;
        let b = self.b.iter().map(|e| e.evaluate(point)).collect::<std::result::Result<Vec<_>, _>>()?;
        LinearGeometry::shs(self.n(), &a, &b, self.dlambda_at(point)?)
    }

    /// Evaluates both compatibility conditions at the sample points.
    pub fn compatibility(&self, params: &Binding, samples: &[Vec<f64>]) -> Result<ShsCompatibility> {
        let chart = Chart::new(Kind::Shs, self.n())?;
        let f = self.conformal_factor();
        let names = chart.names();
        let df: Vec<Expression> = names.iter().map(|v| f.differentiate(v)).collect();
        let omega = darboux_two_form(&chart);
        let mut conformal: f64 = 0.0;
        let mut vertical: f64 = 0.0;
        for x in samples {
            let b = chart.bind(x, params);
            let fv = f.evaluate(&b)?;
            conformal = conformal.max(max_abs(&(self.dlambda_at(&b)? - &omega * fv)));
            let fz = df[chart.z().unwrap()].evaluate(&b)?;
            for i in 0..self.n() {
                let a = self.a[i].evaluate(&b)?;
                let bb = self.b[i].evaluate(&b)?;
                let fq = df[chart.q(i)].evaluate(&b)?;
                let fp = df[chart.p(i)].evaluate(&b)?;
                vertical = vertical.max((fq - a * fz).abs()).max((-fp + bb * fz).abs());
            }
        }
        Ok(ShsCompatibility { f: f.to_string(), conformal_residual: conformal, df_vertical_residual: vertical, samples: samples.len() })
    }

    /// Deterministic sample points in `[-1, 1]^d` for the compatibility test.
    pub fn sample_points(&self, count: usize) -> Vec<Vec<f64>> {
        let d = 2 * self.n() + 1;
        let mut rng = crate::sampling::rng_from_seed(0x5e5);
        (0..count).map(|_| crate::sampling::uniform_vector(&mut rng, d, -1.0, 1.0).iter().copied().collect()).collect()
    }

    /// Fails with `JacobiIncompatible` when either condition is violated.
    pub fn require_compatible(&self, params: &Binding) -> Result<ShsCompatibility> {
        let report = self.compatibility(params, &self.sample_points(8))?;
        if report.residual() > 1e-9 {
            return Err(GeomError::JacobiIncompatible { residual: report.residual() });
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests;
