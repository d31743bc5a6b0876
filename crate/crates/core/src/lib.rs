//! Geometric mechanics on explicit Darboux charts.
//!
//! Symplectic, cosymplectic, contact, cocontact and stable Hamiltonian
//! structures at a point, their vector fields and brackets, Herglotz
//! Lagrangian dynamics, and linear coisotropic reduction.

pub mod expr;

pub use expr::{Binding, Expression, ExprError};
pub mod chart;
pub mod error;
pub mod geometry;
pub mod lagrangian;
pub mod linalg;
pub mod dynamics;
pub mod reduction;
pub mod sampling;
pub mod verify;

pub use chart::{Chart, Kind};
pub use error::GeomError;
pub use geometry::{ClassificationReport, JacobiPair, LinearGeometry};
pub use lagrangian::{LagrangianSystem, PathGrid};
pub use linalg::{QuotientBasis, Subspace};
pub use dynamics::{FieldKind, LiftTest, PhaseSystem, Stepper, Trajectory};
pub use reduction::{linear_reduce, project_through_reduction, ConstraintManifold, ReductionReport};
