//! Grid, node classification, design fields and case parameters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};

/// Cartesian node grid. 2D grids have `dims[2] == 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    dims: [usize; 3],
    dim: usize,
}

impl GridGeometry {
    pub fn new(extents: &[usize]) -> Result<Self, DomainError> {
        let dims = match extents.len() {
            2 => [extents[0], extents[1], 1],
            3 => [extents[0], extents[1], extents[2]],
            n => return Err(DomainError::BadDimension(n)),
        };
        if extents.iter().any(|&e| e < 3) {
            return Err(DomainError::GridTooSmall(extents.to_vec()));
        }
        Ok(Self { dims, dim: extents.len() })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let r = idx / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Index of `coords + e` with periodic wraparound.
    #[inline]
    pub fn shifted(&self, c: [usize; 3], e: [i32; 3]) -> usize {
        let mut p = [0usize; 3];
        for a in 0..3 {
            let n = self.dims[a] as i64;
            p[a] = (c[a] as i64 + e[a] as i64).rem_euclid(n) as usize;
        }
        self.index(p[0], p[1], p[2])
    }

    /// The faces this grid has (4 in 2D, 6 in 3D).
    pub fn faces(&self) -> &'static [Face] {
        if self.dim == 2 {
            &Face::ALL[..4]
        } else {
            &Face::ALL
        }
    }

    pub fn on_face(&self, c: [usize; 3], face: Face) -> bool {
        let a = face.axis();
        if a >= self.dim {
            return false;
        }
        if face.is_min() {
            c[a] == 0
        } else {
            c[a] == self.dims[a] - 1
        }
    }
}

/// A domain face, named by axis and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "x-")]
    XMin,
    #[serde(rename = "x+")]
    XMax,
    #[serde(rename = "y-")]
    YMin,
    #[serde(rename = "y+")]
    YMax,
    #[serde(rename = "z-")]
    ZMin,
    #[serde(rename = "z+")]
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    pub fn is_min(self) -> bool {
        matches!(self, Face::XMin | Face::YMin | Face::ZMin)
    }

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Unit normal pointing into the domain.
    pub fn inward_normal(self) -> [i32; 3] {
        let mut n = [0; 3];
        n[self.axis()] = if self.is_min() { 1 } else { -1 };
        n
    }

    /// True when a population moving along `e` arrives at a node on this face
    /// from outside the grid.
    pub fn enters(self, e: [i32; 3]) -> bool {
        let n = self.inward_normal();
        e[0] * n[0] + e[1] * n[1] + e[2] * n[2] > 0
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Face::XMin => "x-",
            Face::XMax => "x+",
            Face::YMin => "y-",
            Face::YMax => "y+",
            Face::ZMin => "z-",
            Face::ZMax => "z+",
        };
        f.write_str(s)
    }
}

/// Boundary classification of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Interior,
    Wall,
    Inlet,
    Outlet,
    Symmetry,
}

/// Role assigned by a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentRole {
    Inlet,
    Outlet,
    Symmetry,
    Wall,
}

impl SegmentRole {
    fn role(self) -> Role {
        match self {
            SegmentRole::Inlet => Role::Inlet,
            SegmentRole::Outlet => Role::Outlet,
            SegmentRole::Symmetry => Role::Symmetry,
            SegmentRole::Wall => Role::Wall,
        }
    }
}

/// An axis-aligned patch of a face. `range` holds one half-open `[lo, hi)`
/// interval per tangential axis, in increasing axis order; `None` means the
/// whole face.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub face: Face,
    pub role: SegmentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Vec<[usize; 2]>>,
}

const NO_FACE: u8 = u8::MAX;

/// Per-node roles plus the face information the boundary closures need.
#[derive(Debug, Clone)]
pub struct NodeRoleMap {
    roles: Vec<Role>,
    face_mask: Vec<u8>,
    open_face: Vec<u8>,
    n_in: usize,
}

impl NodeRoleMap {
    pub fn role(&self, node: usize) -> Role {
        self.roles[node]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    /// Bitmask of the faces a node lies on (see [`Face::bit`]).
    pub fn face_mask(&self, node: usize) -> u8 {
        self.face_mask[node]
    }

    /// Face whose open segment gave an inlet/outlet node its role.
    pub fn open_face(&self, node: usize) -> Option<Face> {
        let f = self.open_face[node];
        (f != NO_FACE).then(|| Face::ALL[f as usize])
    }

    pub fn inlet_count(&self) -> usize {
        self.n_in
    }

    /// Inlet area in lattice units (unit spacing, so it equals the node count).
    pub fn inlet_area(&self) -> f64 {
        self.n_in as f64
    }

    pub fn nodes_with(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.roles.iter().enumerate().filter(move |(_, r)| **r == role).map(|(i, _)| i)
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|r| **r == role).count()
    }
}

/// Assigns a role to every node. Face nodes not covered by a segment are walls.
///
/// A node lying on several faces becomes a wall if any of its faces is a wall
/// or if two or more of them are open (inlet/outlet); a single open face
/// combined with symmetry faces keeps the open role.
pub fn classify_nodes(geometry: &GridGeometry, segments: &[BoundarySegment]) -> Result<NodeRoleMap, DomainError> {
    let n = geometry.len();
    let dims = geometry.dims();
    // role per face per node, only meaningful for nodes on that face
    let mut face_roles: Vec<Vec<Option<Role>>> = vec![vec![None; n]; 6];
    for seg in segments {
        let face = seg.face;
        if face.axis() >= geometry.dim() {
            return Err(DomainError::FaceNotInGrid(face.to_string()));
        }
        let tangential: Vec<usize> = (0..geometry.dim()).filter(|&a| a != face.axis()).collect();
        let ranges: Vec<[usize; 2]> = match &seg.range {
            Some(r) => {
                if r.len() != tangential.len() {
                    return Err(DomainError::SegmentOutsideGrid {
                        face: face.to_string(),
                        detail: format!("expected {} ranges, got {}", tangential.len(), r.len()),
                    });
                }
                r.clone()
            }
            None => tangential.iter().map(|&a| [0, dims[a]]).collect(),
        };
        for (k, &a) in tangential.iter().enumerate() {
            let [lo, hi] = ranges[k];
            if lo >= hi || hi > dims[a] {
                return Err(DomainError::SegmentOutsideGrid {
                    face: face.to_string(),
                    detail: format!("range [{lo}, {hi}) on axis {a} with extent {}", dims[a]),
                });
            }
        }
        let fixed = if face.is_min() { 0 } else { dims[face.axis()] - 1 };
        let (r0, r1) = (ranges[0], ranges.get(1).copied().unwrap_or([0, 1]));
        for t0 in r0[0]..r0[1] {
            for t1 in r1[0]..r1[1] {
                let mut c = [0usize; 3];
                c[face.axis()] = fixed;
                c[tangential[0]] = t0;
                if let Some(&a1) = tangential.get(1) {
                    c[a1] = t1;
                }
                let idx = geometry.index(c[0], c[1], c[2]);
                let slot = &mut face_roles[face as usize][idx];
                match slot {
                    Some(prev) if *prev != seg.role.role() => {
                        return Err(DomainError::ConflictingSegments { face: face.to_string(), node: c })
                    }
                    _ => *slot = Some(seg.role.role()),
                }
            }
        }
    }

    let mut roles = vec![Role::Interior; n];
    let mut face_mask = vec![0u8; n];
    let mut open_face = vec![NO_FACE; n];
    for (idx, role) in roles.iter_mut().enumerate() {
        let c = geometry.coords(idx);
        let mut mask = 0u8;
        let mut any_wall = false;
        let mut open: Vec<(Face, Role)> = Vec::new();
        for &face in geometry.faces() {
            if !geometry.on_face(c, face) {
                continue;
            }
            mask |= face.bit();
            match face_roles[face as usize][idx].unwrap_or(Role::Wall) {
                Role::Wall => any_wall = true,
                r @ (Role::Inlet | Role::Outlet) => open.push((face, r)),
                _ => {}
            }
        }
        face_mask[idx] = mask;
        if mask == 0 {
            continue;
        }
        *role = if any_wall || open.len() >= 2 {
            Role::Wall
        } else if let Some(&(face, r)) = open.first() {
            open_face[idx] = face as u8;
            r
        } else {
            Role::Symmetry
        };
    }
    let n_in = roles.iter().filter(|r| **r == Role::Inlet).count();
    Ok(NodeRoleMap { roles, face_mask, open_face, n_in })
}

/// Binary design field, its level-set relaxation, and the designable mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    pub designable: Vec<bool>,
}

impl DesignState {
    /// All nodes fluid; designable nodes start at `phi0`.
    pub fn new(designable: Vec<bool>, phi0: f64) -> Self {
        let n = designable.len();
        let phi = designable.iter().map(|&d| if d { phi0.clamp(-1.0, 1.0) } else { 1.0 }).collect();
        let mut s = Self { alpha: vec![1.0; n], phi, designable };
        map_levelset_to_design(&mut s);
        s
    }

    pub fn designable_count(&self) -> usize {
        self.designable.iter().filter(|d| **d).count()
    }

    /// Fluid indicator of designable nodes, for change counting.
    pub fn fluid_mask(&self) -> Vec<bool> {
        self.alpha.iter().map(|&a| a >= 0.5).collect()
    }
}

/// Sets `alpha` from the sign of `phi` on designable nodes; returns how many
/// nodes flipped.
pub fn map_levelset_to_design(state: &mut DesignState) -> usize {
    let mut changed = 0;
    for ((a, &p), &d) in state.alpha.iter_mut().zip(&state.phi).zip(&state.designable) {
        if !d {
            continue;
        }
        let new = if p >= 0.0 { 1.0 } else { 0.0 };
        if *a != new {
            changed += 1;
        }
        *a = new;
    }
    changed
}

/// `G = Σ α − Vmax·N` over the designable nodes.
pub fn volume_constraint(state: &DesignState, vmax: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (&a, &d) in state.alpha.iter().zip(&state.designable) {
        if d {
            sum += a;
            n += 1;
        }
    }
    sum - vmax * n as f64
}

/// How the flow is driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inflow {
    /// Uniform inward normal velocity at the inlet, density `rho0` at the outlet.
    Velocity { u_in: f64 },
    /// Lattice pressures (`p = ρ/3`) at inlet and outlet.
    Pressure { p1: f64, p0: f64 },
}

fn d_tau() -> f64 {
    0.8
}
fn d_rho0() -> f64 {
    1.0
}
fn d_vmax() -> f64 {
    1.0
}
fn d_one() -> f64 {
    1.0
}
fn d_sigma() -> f64 {
    5e-3
}
fn d_pr() -> f64 {
    7.1
}
fn d_beta() -> f64 {
    1e-5
}
fn d_ratio() -> f64 {
    100.0
}
fn d_ftol() -> f64 {
    1e-8
}
fn d_atol() -> f64 {
    1e-8
}
fn d_max_steps() -> usize {
    200_000
}
fn d_cap() -> usize {
    20_000
}

/// Physical and algorithmic parameters, all in lattice units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_rho0")]
    pub rho0: f64,
    pub inflow: Inflow,
    #[serde(rename = "Vmax", default = "d_vmax")]
    pub vmax: f64,
    #[serde(rename = "K", default = "d_one")]
    pub k: f64,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_one")]
    pub dxi: f64,
    #[serde(rename = "Pr", default = "d_pr")]
    pub pr: f64,
    #[serde(default = "d_beta")]
    pub beta_max: f64,
    /// Solid-to-fluid conductivity ratio, used only when `tau_g_solid` is absent.
    #[serde(default = "d_ratio")]
    pub conductivity_ratio: f64,
    /// Defaults to `0.5 + 4ν/Pr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_g_fluid: Option<f64>,
    /// Defaults to `0.5 + conductivity_ratio·(tau_g_fluid − 0.5)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_g_solid: Option<f64>,
    #[serde(default = "d_ftol")]
    pub forward_tol: f64,
    #[serde(default = "d_atol")]
    pub adjoint_tol: f64,
    #[serde(default = "d_max_steps")]
    pub max_steps: usize,
    #[serde(default = "d_cap")]
    pub stability_iter_cap: usize,
    /// Length used in the Reynolds number; defaults to the inlet width
    /// (velocity-driven) or the x extent (pressure-driven).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_length: Option<f64>,
}

impl CaseConfig {
    pub fn velocity_driven(tau: f64, u_in: f64) -> Self {
        Self {
            tau,
            rho0: 1.0,
            inflow: Inflow::Velocity { u_in },
            vmax: 1.0,
            k: 1.0,
            sigma: d_sigma(),
            dxi: 1.0,
            pr: d_pr(),
            beta_max: d_beta(),
            conductivity_ratio: d_ratio(),
            tau_g_fluid: None,
            tau_g_solid: None,
            forward_tol: d_ftol(),
            adjoint_tol: d_atol(),
            max_steps: d_max_steps(),
            stability_iter_cap: d_cap(),
            char_length: None,
        }
    }

    pub fn viscosity(&self) -> f64 {
        (self.tau - 0.5) / 3.0
    }

    pub fn tau_g_fluid(&self) -> f64 {
        self.tau_g_fluid.unwrap_or(0.5 + 4.0 * self.viscosity() / self.pr)
    }

    pub fn tau_g_solid(&self) -> f64 {
        self.tau_g_solid
            .unwrap_or(0.5 + self.conductivity_ratio * (self.tau_g_fluid() - 0.5))
    }

    /// Densities imposed at the inlet (if pressure-driven) and the outlet.
    pub fn boundary_densities(&self) -> (Option<f64>, f64) {
        match self.inflow {
            Inflow::Velocity { .. } => (None, self.rho0),
            Inflow::Pressure { p1, p0 } => (Some(3.0 * p1), 3.0 * p0),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.5) {
            return Err(ConfigError::Tau(self.tau));
        }
        if !(self.rho0 > 0.0) {
            return Err(ConfigError::NonPositive { name: "rho0", value: self.rho0 });
        }
        if !(self.vmax > 0.0 && self.vmax <= 1.0) {
            return Err(ConfigError::Vmax(self.vmax));
        }
        for (name, value) in [
            ("forward_tol", self.forward_tol),
            ("adjoint_tol", self.adjoint_tol),
            ("Pr", self.pr),
            ("K", self.k),
            ("dxi", self.dxi),
            ("conductivity_ratio", self.conductivity_ratio),
        ] {
            if !(value > 0.0) {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        if !(self.sigma >= 0.0) || !(self.beta_max >= 0.0) {
            return Err(ConfigError::Invalid("sigma and beta_max must be non-negative".into()));
        }
        for (name, value) in [("tau_g_fluid", self.tau_g_fluid()), ("tau_g_solid", self.tau_g_solid())] {
            if !(value > 0.5) {
                return Err(ConfigError::ThermalTau { name, value });
            }
        }
        match self.inflow {
            Inflow::Velocity { u_in } if !u_in.is_finite() => {
                Err(ConfigError::Invalid("u_in must be finite".into()))
            }
            Inflow::Pressure { p1, p0 } if !(p0 > 0.0 && p1.is_finite()) => {
                Err(ConfigError::Invalid("pressures must be finite with p0 > 0".into()))
            }
            _ if self.max_steps == 0 => Err(ConfigError::Invalid("max_steps must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// `Re = Ū L / ν`, with `Ū = u_in` or `sqrt((p1 − p0)/ρ0)`.
pub fn reynolds_number(config: &CaseConfig, char_length: f64) -> f64 {
    let u = match config.inflow {
        Inflow::Velocity { u_in } => u_in.abs(),
        Inflow::Pressure { p1, p0 } => ((p1 - p0) / config.rho0).max(0.0).sqrt(),
    };
    u * char_length / config.viscosity()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(face: Face, role: SegmentRole, range: Option<Vec<[usize; 2]>>) -> BoundarySegment {
        BoundarySegment { face, role, range }
    }

    #[test]
    fn empty_spec_is_closed_cavity() {
        let g = GridGeometry::new(&[5, 4]).unwrap();
        let m = classify_nodes(&g, &[]).unwrap();
        assert_eq!(m.count(Role::Wall), 2 * 5 + 2 * 2);
        assert_eq!(m.count(Role::Interior), 3 * 2);
        assert_eq!(m.inlet_count(), 0);
    }

    #[test]
    fn pipe_bend_layout() {
        let g = GridGeometry::new(&[10, 10]).unwrap();
        let segs = [
            seg(Face::XMin, SegmentRole::Inlet, Some(vec![[7, 9]])),
            seg(Face::YMin, SegmentRole::Outlet, Some(vec![[7, 9]])),
        ];
        let m = classify_nodes(&g, &segs).unwrap();
        assert_eq!(m.inlet_count(), 2);
        assert_eq!(m.role(g.index(0, 7, 0)), Role::Inlet);
        assert_eq!(m.open_face(g.index(0, 8, 0)), Some(Face::XMin));
        assert_eq!(m.role(g.index(8, 0, 0)), Role::Outlet);
        assert_eq!(m.role(g.index(0, 6, 0)), Role::Wall);
        assert_eq!(m.role(g.index(5, 5, 0)), Role::Interior);
    }

    #[test]
    fn corner_between_open_faces_is_wall() {
        let g = GridGeometry::new(&[6, 6]).unwrap();
        let segs = [seg(Face::XMin, SegmentRole::Inlet, None), seg(Face::YMin, SegmentRole::Inlet, None)];
        let m = classify_nodes(&g, &segs).unwrap();
        assert_eq!(m.role(g.index(0, 0, 0)), Role::Wall);
        assert_eq!(m.role(g.index(0, 3, 0)), Role::Inlet);
    }

    #[test]
    fn open_face_on_symmetry_edge_stays_open() {
        let g = GridGeometry::new(&[6, 5, 5]).unwrap();
        let segs = [
            seg(Face::XMin, SegmentRole::Inlet, Some(vec![[0, 2], [0, 2]])),
            seg(Face::YMin, SegmentRole::Symmetry, None),
            seg(Face::ZMin, SegmentRole::Symmetry, None),
        ];
        let m = classify_nodes(&g, &segs).unwrap();
        assert_eq!(m.role(g.index(0, 0, 0)), Role::Inlet);
        assert_eq!(m.role(g.index(3, 0, 0)), Role::Symmetry);
        assert_eq!(m.role(g.index(3, 0, 4)), Role::Wall);
        assert_eq!(m.inlet_count(), 4);
    }

    #[test]
    fn conflicting_and_outside_segments_rejected() {
        let g = GridGeometry::new(&[6, 6]).unwrap();
        let segs = [
            seg(Face::XMin, SegmentRole::Inlet, Some(vec![[1, 4]])),
            seg(Face::XMin, SegmentRole::Outlet, Some(vec![[3, 5]])),
        ];
        assert!(matches!(classify_nodes(&g, &segs), Err(DomainError::ConflictingSegments { .. })));
        let segs = [seg(Face::XMin, SegmentRole::Inlet, Some(vec![[1, 7]]))];
        assert!(matches!(classify_nodes(&g, &segs), Err(DomainError::SegmentOutsideGrid { .. })));
        let segs = [seg(Face::ZMin, SegmentRole::Inlet, None)];
        assert!(classify_nodes(&g, &segs).is_err());
    }

    #[test]
    fn levelset_mapping() {
        let mut s = DesignState::new(vec![true; 3], 1.0);
        assert!(s.alpha.iter().all(|&a| a == 1.0));
        s.phi = vec![-0.3, 0.0, 0.7];
        assert_eq!(map_levelset_to_design(&mut s), 1);
        assert_eq!(s.alpha, vec![0.0, 1.0, 1.0]);
        assert_eq!(map_levelset_to_design(&mut s), 0);
    }

    #[test]
    fn volume_examples() {
        let mut s = DesignState::new(vec![true; 100], 1.0);
        assert_eq!(volume_constraint(&s, 1.0), 0.0);
        for a in s.alpha.iter_mut().skip(30) {
            *a = 0.0;
        }
        assert!((volume_constraint(&s, 0.25) - 5.0).abs() < 1e-12);
        s.alpha.iter_mut().for_each(|a| *a = 0.0);
        assert!((volume_constraint(&s, 0.25) + 25.0).abs() < 1e-12);
    }

    #[test]
    fn reynolds_examples() {
        let mut c = CaseConfig::velocity_driven(0.8, 0.05);
        assert!((reynolds_number(&c, 20.0) - 10.0).abs() < 1e-12);
        c.inflow = Inflow::Pressure { p1: 1.0 / 3.0, p0: 1.0 / 3.0 };
        assert_eq!(reynolds_number(&c, 20.0), 0.0);
    }

    #[test]
    fn config_validation() {
        let c = CaseConfig::velocity_driven(0.4, 0.01);
        assert_eq!(c.validate().unwrap_err().to_string(), "tau must exceed 0.5 (got 0.4)");
        let mut c = CaseConfig::velocity_driven(0.8, 0.01);
        c.validate().unwrap();
        c.vmax = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn thermal_tau_defaults() {
        let c = CaseConfig::velocity_driven(0.8, 0.01);
        let tf = 0.5 + 4.0 * 0.1 / 7.1;
        assert!((c.tau_g_fluid() - tf).abs() < 1e-15);
        assert!((c.tau_g_solid() - (0.5 + 100.0 * (tf - 0.5))).abs() < 1e-12);
    }
}
