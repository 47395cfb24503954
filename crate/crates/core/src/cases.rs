//! Case files (the on-disk configuration schema) and the benchmark presets.

use serde::{Deserialize, Serialize};

use crate::domain::{BoundarySegment, CaseConfig, Face, Inflow, SegmentRole};
use crate::error::Result;
use crate::lattice::StencilKind;
use crate::optimizer::{OptimizerSettings, StabilitySettings};
use crate::problem::{ObjectiveKind, Problem};

/// Grid, stencil and boundary segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub stencil: StencilKind,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub boundaries: Vec<BoundarySegment>,
}

fn d_phi0() -> f64 {
    0.1
}

/// Which nodes the optimizer may change, and their starting level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Initial level set on designable nodes (positive means fluid).
    #[serde(default = "d_phi0")]
    pub phi0: f64,
    /// Half-open `[lo, hi)` box per axis restricting the designable region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[usize; 2]>>,
    /// Symmetry-plane nodes are designable too.
    #[serde(default)]
    pub include_symmetry: bool,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { phi0: d_phi0(), region: None, include_symmetry: false }
    }
}

fn d_h() -> f64 {
    1e-3
}
fn d_count() -> usize {
    20
}
fn d_vtol() -> f64 {
    1e-3
}
fn d_fdm_tol() -> f64 {
    1e-12
}

/// Settings of the sensitivity comparison against finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    /// Explicit node indices; the chamber diagonal is sampled when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
    #[serde(default = "d_count")]
    pub diagonal_nodes: usize,
    #[serde(default = "d_h")]
    pub fdm_step: f64,
    /// Relative L2 bound the discrete adjoint must meet.
    #[serde(default = "d_vtol")]
    pub tolerance: f64,
    /// Steady tolerance of the perturbed forward solves.
    #[serde(default = "d_fdm_tol")]
    pub fdm_solve_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { nodes: None, diagonal_nodes: d_count(), fdm_step: d_h(), tolerance: d_vtol(), fdm_solve_tol: d_fdm_tol() }
    }
}

/// Everything a run needs. This is the config-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub case: CaseConfig,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default)]
    pub objective: ObjectiveKind,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub stability: StabilitySettings,
    #[serde(default)]
    pub verify: VerifySettings,
}

impl CaseFile {
    pub fn build(&self) -> Result<Problem> {
        Problem::new(self.clone())
    }

    /// Same case with a different inlet velocity.
    pub fn with_inlet_velocity(&self, u_in: f64) -> Self {
        let mut c = self.clone();
        c.case.inflow = Inflow::Velocity { u_in };
        c
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        let mut c = self.clone();
        c.case.tau = tau;
        c
    }
}

fn seg(face: Face, role: SegmentRole, range: Option<Vec<[usize; 2]>>) -> BoundarySegment {
    BoundarySegment { face, role, range }
}

/// Open band `[round(0.7n), round(0.9n))` used by the pipe bends.
pub fn bend_band(n: usize) -> [usize; 2] {
    [(0.7 * n as f64).round() as usize, (0.9 * n as f64).round() as usize]
}

/// Inlet speed for a target Reynolds number.
pub fn inlet_velocity_for(re: f64, tau: f64, length: f64) -> f64 {
    re * (tau - 0.5) / 3.0 / length
}

/// 2D pipe bend on an `n × n` chamber: inlet band on the left face, outlet
/// band on the bottom face, all nodes inside the chamber designable, the
/// characteristic length being the band width.
pub fn pipe_bend_2d(n: usize, tau: f64, re: f64, vmax: f64) -> CaseFile {
    let band = bend_band(n);
    let width = (band[1] - band[0]) as f64;
    let mut case = CaseConfig::velocity_driven(tau, inlet_velocity_for(re, tau, width));
    case.vmax = vmax;
    case.char_length = Some(width);
    CaseFile {
        case,
        geometry: GeometrySpec {
            stencil: StencilKind::D2Q9,
            dims: vec![n, n],
            boundaries: vec![
                seg(Face::XMin, SegmentRole::Inlet, Some(vec![band])),
                seg(Face::YMin, SegmentRole::Outlet, Some(vec![band])),
            ],
        },
        design: DesignSpec::default(),
        objective: ObjectiveKind::InletPressure,
        optimizer: OptimizerSettings::default(),
        stability: StabilitySettings::default(),
        verify: VerifySettings::default(),
    }
}

/// 3D pipe bend on an `n³` chamber with square open patches: inlet on the
/// x− face, outlet on the y− face, both centred in z.
pub fn pipe_bend_3d(n: usize, tau: f64, re: f64, vmax: f64) -> CaseFile {
    let band = bend_band(n);
    let w = band[1] - band[0];
    let z0 = (n - w) / 2;
    let zb = [z0, z0 + w];
    let mut case = CaseConfig::velocity_driven(tau, inlet_velocity_for(re, tau, w as f64));
    case.vmax = vmax;
    case.char_length = Some(w as f64);
    CaseFile {
        case,
        geometry: GeometrySpec {
            stencil: StencilKind::D3Q19,
            dims: vec![n, n, n],
            boundaries: vec![
                seg(Face::XMin, SegmentRole::Inlet, Some(vec![band, zb])),
                seg(Face::YMin, SegmentRole::Outlet, Some(vec![band, zb])),
            ],
        },
        design: DesignSpec::default(),
        objective: ObjectiveKind::InletPressure,
        optimizer: OptimizerSettings::default(),
        stability: StabilitySettings::default(),
        verify: VerifySettings::default(),
    }
}

/// Quarter of a straight microchannel heat sink, `nx × ny × nz`, pressure
/// driven along x. The cutting planes are y− and z−, the outer walls y+ and
/// z+. Inlet and outlet cover the square patch `[0, ny/2) × [0, nz/2)`; the
/// design region excludes `buffer` layers next to each open face. The Reynolds
/// number uses `L = nx` and `Ū = sqrt(Δp/ρ0)`.
pub fn heat_sink(nx: usize, ny: usize, nz: usize, tau: f64, re: f64, buffer: usize) -> CaseFile {
    let mut case = CaseConfig::velocity_driven(tau, 0.0);
    let nu = case.viscosity();
    let ubar = re * nu / nx as f64;
    let p0 = case.rho0 / 3.0;
    case.inflow = Inflow::Pressure { p1: p0 + case.rho0 * ubar * ubar, p0 };
    case.char_length = Some(nx as f64);
    case.vmax = 0.5;
    let patch = vec![[0, ny / 2], [0, nz / 2]];
    CaseFile {
        case,
        geometry: GeometrySpec {
            stencil: StencilKind::D3Q19,
            dims: vec![nx, ny, nz],
            boundaries: vec![
                seg(Face::XMin, SegmentRole::Inlet, Some(patch.clone())),
                seg(Face::XMax, SegmentRole::Outlet, Some(patch)),
                seg(Face::YMin, SegmentRole::Symmetry, None),
                seg(Face::ZMin, SegmentRole::Symmetry, None),
            ],
        },
        design: DesignSpec { phi0: d_phi0(), region: Some(vec![[buffer, nx - buffer], [0, ny], [0, nz]]), include_symmetry: true },
        objective: ObjectiveKind::HeatGeneration,
        optimizer: OptimizerSettings::default(),
        stability: StabilitySettings::default(),
        verify: VerifySettings { diagonal_nodes: 10, tolerance: 1e-2, ..VerifySettings::default() },
    }
}

/// Straight 2D channel: uniform inflow on x−, fixed density on x+, walls on
/// y− and y+.
pub fn channel_2d(nx: usize, ny: usize, tau: f64, u_in: f64) -> CaseFile {
    CaseFile {
        case: CaseConfig::velocity_driven(tau, u_in),
        geometry: GeometrySpec {
            stencil: StencilKind::D2Q9,
            dims: vec![nx, ny],
            boundaries: vec![seg(Face::XMin, SegmentRole::Inlet, None), seg(Face::XMax, SegmentRole::Outlet, None)],
        },
        design: DesignSpec::default(),
        objective: ObjectiveKind::InletPressure,
        optimizer: OptimizerSettings::default(),
        stability: StabilitySettings::default(),
        verify: VerifySettings::default(),
    }
}
