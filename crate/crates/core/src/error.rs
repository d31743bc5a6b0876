use crate::expr::ExprError;

/// Domain errors raised by the geometry, reduction, dynamics and
/// Lagrangian layers. `name()` is the stable identifier printed by the CLI.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernel is not contained in the total space (residual {residual:.3e})")]
    NotASubspace { residual: f64 },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("missing coordinate `{0}`")]
    MissingCoordinate(String),
    #[error("structure is degenerate: {0}")]
    SingularStructure(String),
    #[error("subspace is not coisotropic (orthogonal escapes by {residual:.3e})")]
    NotCoisotropic { residual: f64 },
    #[error("unsupported reduction case `{case}`: {detail}")]
    CaseUnsupported { case: String, detail: String },
    #[error("subspace is not Lagrangian/Legendrian: {0}")]
    NotLagrangian(String),
    #[error("point is off the constraint set (max |phi| = {residual:.3e})")]
    NotOnManifold { residual: f64 },
    #[error("constraint Jacobian has rank {rank} < {count}")]
    DegenerateConstraints { rank: usize, count: usize },
    #[error("distribution rank changes on the stencil ({expected} -> {found})")]
    RankJump { expected: usize, found: usize },
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("stable Hamiltonian structure is not Jacobi compatible (residual {residual:.3e})")]
    JacobiIncompatible { residual: f64 },
    #[error("state became non-finite after t = {t}")]
    NonFiniteState { t: f64 },
    #[error("trajectory does not match the system: {0}")]
    MismatchedSystem(String),
    #[error("Lagrangian is singular at the state (|det W| = {det:.3e})")]
    SingularLagrangian { det: f64 },
    #[error("theorem hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GeomError {
    pub fn name(&self) -> &'static str {
        match self {
            GeomError::Expr(e) => e.name(),
            GeomError::DimensionMismatch { .. } => "DimensionMismatch",
            GeomError::NotASubspace { .. } => "NotASubspace",
            GeomError::InvalidDimension(_) => "InvalidDimension",
            GeomError::MissingCoordinate(_) => "MissingCoordinate",
            GeomError::SingularStructure(_) => "SingularStructure",
            GeomError::NotCoisotropic { .. } => "NotCoisotropic",
            GeomError::CaseUnsupported { .. } => "CaseUnsupported",
            GeomError::NotLagrangian(_) => "NotLagrangian",
            GeomError::NotOnManifold { .. } => "NotOnManifold",
            GeomError::DegenerateConstraints { .. } => "DegenerateConstraints",
            GeomError::RankJump { .. } => "RankJump",
            GeomError::UnsupportedCombination(_) => "UnsupportedCombination",
            GeomError::JacobiIncompatible { .. } => "JacobiIncompatible",
            GeomError::NonFiniteState { .. } => "NonFiniteState",
            GeomError::MismatchedSystem(_) => "MismatchedSystem",
            GeomError::SingularLagrangian { .. } => "SingularLagrangian",
            GeomError::HypothesisViolated(_) => "HypothesisViolated",
            GeomError::InvalidInput(_) => "InvalidInput",
        }
    }
}

pub type Result<T, E = GeomError> = std::result::Result<T, E>;
