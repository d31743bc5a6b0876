//! Subspaces of R^d held as orthonormal bases, with spans, intersections,
//! sums, annihilators and quotient bases.
//!
//! Covectors share the coordinate array form of vectors; pairing is the dot
//! product, so the annihilator of a span is its Euclidean complement.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeomError, Result};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-9;

/// Absolute cutoff for a matrix whose largest singular value is `sigma_max`.
pub fn rank_threshold(sigma_max: f64, rtol: f64) -> f64 {
    rtol * sigma_max.max(1.0)
}

/// Singular values and left singular vectors, largest first.
///
/// Computed from the symmetric eigenproblem of `[[0, M], [Mᵀ, 0]]`, whose
/// eigenpairs are `±σ` with vectors `(u, ±v)/√2`. nalgebra's bidiagonal SVD
/// loses accuracy on strongly rank-deficient input, the eigen solver does not.
fn sorted_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (r, c) = m.shape();
    let mut aug = DMatrix::zeros(r + c, r + c);
    aug.view_mut((0, r), (r, c)).copy_from(m);
    aug.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    let eig = aug.symmetric_eigen();
    let mut order: Vec<usize> = (0..r + c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = r.min(c);
    let vals: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut u = DMatrix::zeros(r, k);
    for (j, &i) in order[..k].iter().enumerate() {
        let col = eig.eigenvectors.column(i).rows(0, r) * std::f64::consts::SQRT_2;
        u.set_column(j, &col);
    }
    (u, vals)
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    sorted_svd(m).1
}

pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    let tau = rank_threshold(top, rtol);
    s.iter().filter(|&&x| x > tau).count()
}

/// Orthonormal basis of the column span.
pub fn orth(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let (u, s) = sorted_svd(m);
    let tau = rank_threshold(s[0], rtol);
    let k = s.iter().filter(|&&x| x > tau).count();
    reorthonormalize(u.columns(0, k).into_owned())
}

/// Householder QR pass to push `uᵀu` back to the identity at roundoff level.
fn reorthonormalize(u: DMatrix<f64>) -> DMatrix<f64> {
    if u.ncols() == 0 {
        return u;
    }
    let k = u.ncols();
    let q = u.qr().q();
    q.columns(0, k).into_owned()
}

/// The `k` dominant left singular vectors.
fn leading(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    if k == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let (u, _) = sorted_svd(m);
    reorthonormalize(u.columns(0, k).into_owned())
}

/// Orthonormal basis of the Euclidean complement of the orthonormal columns `q`.
fn complement_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let k = q.ncols();
    if k == 0 {
        return DMatrix::identity(d, d);
    }
    if k >= d {
        return DMatrix::zeros(d, 0);
    }
    let p = DMatrix::identity(d, d) - q * q.transpose();
    let eig = p.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<DVector<f64>> = order[..d - k].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

/// Orthonormal basis of `{x : m x = 0}`.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return DMatrix::identity(m.ncols(), m.ncols());
    }
    complement_basis(&orth(&m.transpose(), rtol))
}

/// Linear subspace of R^d with orthonormal basis columns.
#[derive(Clone, Debug, Serialize)]
pub struct Subspace {
    ambient: usize,
    #[serde(serialize_with = "serialize_columns")]
    basis: DMatrix<f64>,
}

fn serialize_columns<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.ncols()))?;
    for c in m.column_iter() {
        seq.serialize_element(&c.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

impl PartialEq for Subspace {
    /// Equality of spans up to [`SPAN_ANGLE_TOL`].
    fn eq(&self, other: &Self) -> bool {
        self.same_span(other, SPAN_ANGLE_TOL)
    }
}

/// Default principal-angle tolerance for span equality.
pub const SPAN_ANGLE_TOL: f64 = 1e-8;

impl Subspace {
    pub fn zero(d: usize) -> Self {
        Subspace { ambient: d, basis: DMatrix::zeros(d, 0) }
    }

    pub fn full(d: usize) -> Self {
        Subspace { ambient: d, basis: DMatrix::identity(d, d) }
    }

    /// Span of the columns of `m` (rank by [`RANK_RTOL`]).
    pub fn from_columns(m: &DMatrix<f64>) -> Self {
        Self::from_columns_tol(m, RANK_RTOL)
    }

    pub fn from_columns_tol(m: &DMatrix<f64>, rtol: f64) -> Self {
        Subspace { ambient: m.nrows(), basis: orth(m, rtol) }
    }

    pub fn from_vectors(d: usize, vectors: &[DVector<f64>]) -> Result<Self> {
        for v in vectors {
            if v.len() != d {
                return Err(GeomError::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        if vectors.is_empty() {
            return Ok(Self::zero(d));
        }
        Ok(Self::from_columns(&DMatrix::from_columns(vectors)))
    }

    /// Span of the standard basis vectors with the given indices.
    pub fn coordinate(d: usize, indices: &[usize]) -> Self {
        let mut m = DMatrix::zeros(d, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        Self::from_columns(&m)
    }

    /// Kernel of a single covector (its annihilated hyperplane).
    pub fn kernel_of(covectors: &[DVector<f64>], d: usize) -> Result<Self> {
        Ok(Self::from_vectors(d, covectors)?.annihilator())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_vectors(&self) -> Vec<DVector<f64>> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        if self.dim() == 0 {
            return v.norm();
        }
        (v - &self.basis * (self.basis.transpose() * v)).norm()
    }

    pub fn contains_vector(&self, v: &DVector<f64>) -> bool {
        self.residual(v) <= RANK_RTOL * v.norm().max(1.0) * 10.0
    }

    /// Largest residual of `other`'s basis against `self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        other.basis.column_iter().map(|c| self.residual(&c.into_owned())).fold(0.0, f64::max)
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Subspace) -> bool {
        self.ambient == other.ambient && self.containment_residual(other) <= RANK_RTOL * 10.0
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    fn check_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient != other.ambient {
            return Err(GeomError::DimensionMismatch { expected: self.ambient, found: other.ambient });
        }
        Ok(())
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        let mut cols = self.basis_vectors();
        cols.extend(other.basis_vectors());
        Subspace::from_vectors(self.ambient, &cols)
    }

    /// Kernel of the stacked `[I - P_A; I - P_B]`.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        self.check_ambient(other)?;
        let d = self.ambient;
        let eye = DMatrix::<f64>::identity(d, d);
        let a = &eye - self.projector();
        let b = &eye - other.projector();
        let mut stacked = DMatrix::zeros(2 * d, d);
        stacked.rows_mut(0, d).copy_from(&a);
        stacked.rows_mut(d, d).copy_from(&b);
        Ok(Subspace { ambient: d, basis: null_space(&stacked, RANK_RTOL) })
    }

    /// Covectors vanishing on the subspace, in dual coordinates.
    pub fn annihilator(&self) -> Subspace {
        Subspace { ambient: self.ambient, basis: complement_basis(&self.basis) }
    }

    /// Largest principal angle; `π/2` when the dimensions differ.
    pub fn max_principal_angle(&self, other: &Subspace) -> f64 {
        if self.ambient != other.ambient || self.dim() != other.dim() {
            return std::f64::consts::FRAC_PI_2;
        }
        if self.dim() == 0 {
            return 0.0;
        }
        let off = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        let s = singular_values(&off).first().copied().unwrap_or(0.0);
        s.min(1.0).asin()
    }

    pub fn same_span(&self, other: &Subspace, angle_tol: f64) -> bool {
        self.max_principal_angle(other) <= angle_tol
    }

    /// Image under a linear map.
    pub fn image(&self, map: &DMatrix<f64>) -> Subspace {
        Subspace::from_columns(&(map * &self.basis))
    }
}

pub fn subspace_from_vectors(ambient_dim: usize, vectors: &[DVector<f64>]) -> Result<Subspace> {
    Subspace::from_vectors(ambient_dim, vectors)
}

pub fn intersect(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    a.intersect(b)
}

pub fn sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    a.sum(b)
}

pub fn annihilator(a: &Subspace) -> Subspace {
    a.annihilator()
}

/// Class coordinates for `total / kernel`.
#[derive(Clone, Debug, Serialize)]
pub struct QuotientBasis {
    pub total: Subspace,
    pub kernel: Subspace,
    /// d×m, orthonormal, orthogonal to the kernel.
    #[serde(serialize_with = "serialize_columns")]
    pub representatives: DMatrix<f64>,
    /// m×d, sends a vector of `total` to its class coordinates.
    #[serde(skip)]
    pub projection: DMatrix<f64>,
}

impl QuotientBasis {
    pub fn dim(&self) -> usize {
        self.representatives.ncols()
    }

    /// Class coordinates of each column of `vectors` (columns must lie in `total`).
    pub fn project(&self, vectors: &DMatrix<f64>) -> DMatrix<f64> {
        &self.projection * vectors
    }
}

pub fn quotient(total: &Subspace, kernel: &Subspace) -> Result<QuotientBasis> {
    total.check_ambient(kernel)?;
    let residual = total.containment_residual(kernel);
    if residual > RANK_RTOL * 10.0 {
        return Err(GeomError::NotASubspace { residual });
    }
    let d = total.ambient;
    let m = total.dim() - kernel.dim();
    let reps = if m == 0 {
        DMatrix::zeros(d, 0)
    } else {
        let eye = DMatrix::<f64>::identity(d, d);
        leading(&((eye - kernel.projector()) * &total.basis), m)
    };
    let projection = reps.transpose();
    Ok(QuotientBasis { total: total.clone(), kernel: kernel.clone(), representatives: reps, projection })
}

/// Modified Gram–Schmidt on the columns in order. Smooth in the input as
/// long as the columns stay independent, unlike a Householder QR.
pub fn reorthonormalize_ordered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let ci = q.column(i).into_owned();
            q.column_mut(j).axpy(-proj, &ci, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

/// `Bᵀ Ω B`: a bilinear form restricted to the columns of `basis`.
pub fn restrict_form(form: &DMatrix<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis.transpose() * form * basis
}

/// Covector restricted to the columns of `basis`.
pub fn restrict_covector(alpha: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    basis.transpose() * alpha
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}


/// Serde helpers writing matrices as nested row arrays.
pub mod ser {
    use nalgebra::{DMatrix, DVector};
    use serde::Serializer;

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(to_rows(m))
    }

    pub fn vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }
}
