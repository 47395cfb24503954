//! Lattice Boltzmann flow and conjugate heat transfer solvers with continuous
//! and discrete adjoints, for level-set topology optimization.
//!
//! Populations are stored node-major (`f[node * q + i]`). Direction indices
//! follow the tables in [`lattice`].

pub mod adjoint_continuous;
pub mod adjoint_discrete;
pub mod adjoint_kernel;
pub mod cases;
pub mod domain;
pub mod error;
pub mod forward;
pub mod io;
pub mod lattice;
pub mod optimizer;
pub mod problem;
pub mod sensitivity;

pub use adjoint_continuous::{ContinuousAdjoint, ContinuousAdjointField};
pub use adjoint_discrete::{DiscreteAdjoint, DiscreteAdjointState, DEFAULT_BLOWUP};
pub use cases::CaseFile;
pub use domain::{
    classify_nodes, map_levelset_to_design, volume_constraint, BoundarySegment, CaseConfig, DesignState, Face,
    GridGeometry, Inflow, NodeRoleMap, Role, SegmentRole,
};
pub use error::{AdjointError, ConfigError, DomainError, Error, LatticeError, Result};
pub use forward::thermal::{ThermalModel, ThermalParams};
pub use forward::{FlowModel, MacroFields, SolveReport, SolveStatus, SteadyOptions};
pub use lattice::{make_stencil, Stencil, StencilKind};
pub use optimizer::{OptimizationRun, OptimizationStatus, OptimizerSettings, StabilitySettings, StabilitySolver};
pub use problem::{AdjointMethod, AdjointSolution, ForwardSolution, ObjectiveKind, Problem};
pub use sensitivity::{KernelForm, SensitivityField};
