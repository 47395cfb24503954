use thiserror::Error;

use crate::domain::Role;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("unknown stencil kind `{0}`")]
    UnknownKind(String),
    #[error("direction index {index} out of range for q = {q}")]
    IndexOutOfRange { index: usize, q: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("grid extents must be at least 3 along every axis, got {0:?}")]
    GridTooSmall(Vec<usize>),
    #[error("grid needs 2 or 3 extents, got {0}")]
    BadDimension(usize),
    #[error("segment on face {face} lies outside the grid: {detail}")]
    SegmentOutsideGrid { face: String, detail: String },
    #[error("segments on face {face} overlap with conflicting roles at node {node:?}")]
    ConflictingSegments { face: String, node: [usize; 3] },
    #[error("face {0} does not exist for a 2D grid")]
    FaceNotInGrid(String),
    #[error("stencil dimension {stencil} does not match grid dimension {grid}")]
    DimensionMismatch { stencil: usize, grid: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("tau must exceed 0.5 (got {0})")]
    Tau(f64),
    #[error("{name} must exceed 0.5 (got {value})")]
    ThermalTau { name: &'static str, value: f64 },
    #[error("Vmax must lie in (0, 1] (got {0})")]
    Vmax(f64),
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error("could not parse configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjointError {
    #[error(
        "closed-form adjoint boundary disagrees with the transposed Jacobian at node {node} \
         ({role:?}), direction {direction}: closed form {fast:e}, transpose {mechanical:e}"
    )]
    BoundaryMismatch { node: usize, role: Role, direction: usize, fast: f64, mechanical: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Umbrella error for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
