//! Hamiltonians in the electric multiplet basis: the single plaquette at cutoff Λ,
//! its CP-even projection, and Gauss-projected plaquette chains.

mod chain;
mod plaquette;
mod sparse;
mod symmetry;

use thiserror::Error;

pub use chain::{
    build_chain_hamiltonian, enumerate_gauss_basis, gauss_penalty_operator, Boundary, ChainBasis, ChainGeometry, Leg,
    LinkId, LinkLabel,
};
pub use plaquette::{
    build_single_plaquette, plaquette_hamiltonian, project_cp, truncated_named_basis, NamedTruncation, PlaquetteBasis,
};
pub use sparse::SparseHamiltonian;
pub use symmetry::{connected_sector, SymmetricSubspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("invalid cutoff {0}: must be at least 1")]
    InvalidCutoff(u32),
    #[error("coupling must be positive and finite")]
    InvalidCoupling,
    #[error("penalty strength must be positive and finite")]
    InvalidPenalty,
    #[error("invalid chain length {0}")]
    InvalidChainLength(usize),
    #[error("entry ({row}, {col}) outside dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix not symmetric (residual {residual:e})")]
    NonHermitian { residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operator does not commute with the symmetry (residual {residual:e})")]
    SymmetryViolation { residual: f64 },
    #[error("basis is not closed under CP")]
    NotCpClosed,
    #[error("plaquette adjoint disagrees with transpose (residual {residual:e})")]
    InternalConsistency { residual: f64 },
    #[error("parse error: {0}")]
    Parse(String),
}
