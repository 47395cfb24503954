//! Node-local boundary closures for the flow and thermal populations.
//!
//! Every closure is affine in the populations it reads, which is what the
//! discrete adjoint relies on when it builds boundary Jacobians by probing.

use crate::domain::{CaseConfig, Face, GridGeometry, NodeRoleMap, Role};
use crate::error::DomainError;
use crate::lattice::{Stencil, StencilKind};

/// What an open boundary prescribes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpenKind {
    /// Inward normal velocity.
    Velocity(f64),
    /// Density.
    Density(f64),
}

/// Direction bookkeeping for one open face.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenTable {
    pub face: Face,
    /// Directions pointing into the domain (`e·n > 0`), unknown after streaming.
    pub unknown: Vec<usize>,
    pub tangential: Vec<usize>,
    /// Directions pointing out of the domain (`e·n < 0`).
    pub outgoing: Vec<usize>,
    /// Per unknown direction: transverse-momentum correction terms `(k, coef)`.
    pub transverse: Vec<Vec<(usize, f64)>>,
}

impl OpenTable {
    pub fn new(stencil: &Stencil, face: Face) -> Self {
        let n = face.inward_normal();
        let dot = |e: [i32; 3]| e[0] * n[0] + e[1] * n[1] + e[2] * n[2];
        let e = stencil.velocities();
        let mut unknown = Vec::new();
        let mut tangential = Vec::new();
        let mut outgoing = Vec::new();
        for (i, &ei) in e.iter().enumerate() {
            match dot(ei) {
                d if d > 0 => unknown.push(i),
                0 => tangential.push(i),
                _ => outgoing.push(i),
            }
        }
        // Only the 2D closure carries the transverse correction; the 3D form
        // keeps the plain non-equilibrium bounce-back for diagonals.
        let transverse = unknown
            .iter()
            .map(|&i| {
                if stencil.kind() != StencilKind::D2Q9 {
                    return Vec::new();
                }
                let en = dot(e[i]);
                let t = [e[i][0] - en * n[0], e[i][1] - en * n[1], e[i][2] - en * n[2]];
                tangential
                    .iter()
                    .filter_map(|&k| {
                        let c = e[k][0] * t[0] + e[k][1] * t[1] + e[k][2] * t[2];
                        (c != 0).then_some((k, -0.5 * c as f64))
                    })
                    .collect()
            })
            .collect();
        Self { face, unknown, tangential, outgoing, transverse }
    }
}

/// Flow closure at one boundary node.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowClosure {
    /// Full reversal of every population.
    Wall,
    /// Specular reflection: `f[i] = f[src]` for each pair.
    Symmetry { mirror: Vec<(usize, usize)> },
    /// Zou-He closure on `face`, after mirroring symmetry unknowns.
    Open { face: Face, kind: OpenKind, mirror: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowBoundaryNode {
    pub node: usize,
    pub role: Role,
    pub closure: FlowClosure,
}

/// Thermal closure at one boundary node.
#[derive(Debug, Clone, PartialEq)]
pub enum ThermalClosure {
    Wall,
    Symmetry { mirror: Vec<(usize, usize)> },
    /// Anti-bounce-back fixing the temperature: `g_i = −g_ī + 2ω_i T`.
    Inlet { mirror: Vec<(usize, usize)>, unknown: Vec<usize>, temperature: f64 },
    /// Zero-gradient copy of the unknown directions from `upstream`.
    Outlet { mirror: Vec<(usize, usize)>, unknown: Vec<usize>, upstream: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalBoundaryNode {
    pub node: usize,
    pub role: Role,
    pub closure: ThermalClosure,
}

fn sym_faces(geometry: &GridGeometry, mask: u8, open: Option<Face>) -> Vec<Face> {
    geometry
        .faces()
        .iter()
        .copied()
        .filter(|f| mask & f.bit() != 0 && Some(*f) != open)
        .collect()
}

/// `(i, source)` pairs for directions entering through a symmetry face.
/// Directions also entering through `open` are left to the open closure.
pub fn mirror_pairs(stencil: &Stencil, sym: &[Face], open: Option<Face>) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, &e) in stencil.velocities().iter().enumerate() {
        if open.is_some_and(|f| f.enters(e)) {
            continue;
        }
        let mut m = e;
        let mut crossing = false;
        for f in sym {
            if f.enters(e) {
                crossing = true;
                m[f.axis()] = -m[f.axis()];
            }
        }
        if crossing {
            pairs.push((i, stencil.find(m).expect("stencil closed under reflection")));
        }
    }
    pairs
}

fn check_dims(stencil: &Stencil, geometry: &GridGeometry) -> Result<(), DomainError> {
    if stencil.dim() != geometry.dim() {
        return Err(DomainError::DimensionMismatch { stencil: stencil.dim(), grid: geometry.dim() });
    }
    Ok(())
}

pub fn build_flow_boundaries(
    stencil: &Stencil,
    geometry: &GridGeometry,
    roles: &NodeRoleMap,
    config: &CaseConfig,
) -> Result<Vec<FlowBoundaryNode>, DomainError> {
    check_dims(stencil, geometry)?;
    let (rho_in, rho_out) = config.boundary_densities();
    let inlet_kind = match (config.inflow, rho_in) {
        (_, Some(r)) => OpenKind::Density(r),
        (crate::domain::Inflow::Velocity { u_in }, None) => OpenKind::Velocity(u_in),
        _ => unreachable!(),
    };
    let mut out = Vec::new();
    for node in 0..geometry.len() {
        let role = roles.role(node);
        let mask = roles.face_mask(node);
        let closure = match role {
            Role::Interior => continue,
            Role::Wall => FlowClosure::Wall,
            Role::Symmetry => FlowClosure::Symmetry {
                mirror: mirror_pairs(stencil, &sym_faces(geometry, mask, None), None),
            },
            Role::Inlet | Role::Outlet => {
                let face = roles.open_face(node).expect("open node has a face");
                let kind = if role == Role::Inlet { inlet_kind } else { OpenKind::Density(rho_out) };
                FlowClosure::Open {
                    face,
                    kind,
                    mirror: mirror_pairs(stencil, &sym_faces(geometry, mask, Some(face)), Some(face)),
                }
            }
        };
        out.push(FlowBoundaryNode { node, role, closure });
    }
    Ok(out)
}

pub fn build_thermal_boundaries(
    stencil: &Stencil,
    geometry: &GridGeometry,
    roles: &NodeRoleMap,
    inlet_temperature: f64,
) -> Result<Vec<ThermalBoundaryNode>, DomainError> {
    check_dims(stencil, geometry)?;
    let mut out = Vec::new();
    for node in 0..geometry.len() {
        let role = roles.role(node);
        let mask = roles.face_mask(node);
        let closure = match role {
            Role::Interior => continue,
            Role::Wall => ThermalClosure::Wall,
            Role::Symmetry => ThermalClosure::Symmetry {
                mirror: mirror_pairs(stencil, &sym_faces(geometry, mask, None), None),
            },
            Role::Inlet | Role::Outlet => {
                let face = roles.open_face(node).expect("open node has a face");
                let mirror = mirror_pairs(stencil, &sym_faces(geometry, mask, Some(face)), Some(face));
                let unknown = OpenTable::new(stencil, face).unknown;
                if role == Role::Inlet {
                    ThermalClosure::Inlet { mirror, unknown, temperature: inlet_temperature }
                } else {
                    let c = geometry.coords(node);
                    let upstream = geometry.shifted(c, face.inward_normal());
                    ThermalClosure::Outlet { mirror, unknown, upstream }
                }
            }
        };
        out.push(ThermalBoundaryNode { node, role, closure });
    }
    Ok(out)
}

/// Shared context for applying flow closures.
#[derive(Debug, Clone)]
pub struct FlowBcContext {
    pub stencil: Stencil,
    pub rho0: f64,
    tables: Vec<Option<OpenTable>>,
}

impl FlowBcContext {
    pub fn new(stencil: &Stencil, geometry: &GridGeometry, rho0: f64) -> Self {
        let tables = Face::ALL
            .iter()
            .map(|&f| (f.axis() < geometry.dim()).then(|| OpenTable::new(stencil, f)))
            .collect();
        Self { stencil: stencil.clone(), rho0, tables }
    }

    pub fn table(&self, face: Face) -> &OpenTable {
        self.tables[face as usize].as_ref().expect("face exists in this grid")
    }

    /// Applies `closure` to the populations of one node. With `homogeneous`
    /// set, the prescribed data are taken as zero, giving the linear part of
    /// the (affine) closure.
    pub fn apply(&self, closure: &FlowClosure, f: &mut [f64], homogeneous: bool) {
        match closure {
            FlowClosure::Wall => {
                let opp = self.stencil.opposite();
                for i in 0..f.len() {
                    let o = opp[i];
                    if i < o {
                        f.swap(i, o);
                    }
                }
            }
            FlowClosure::Symmetry { mirror } => {
                for &(i, s) in mirror {
                    f[i] = f[s];
                }
            }
            FlowClosure::Open { face, kind, mirror } => {
                for &(i, s) in mirror {
                    f[i] = f[s];
                }
                let t = self.table(*face);
                let w = self.stencil.weights();
                let opp = self.stencil.opposite();
                let jn = match *kind {
                    OpenKind::Velocity(u) => {
                        if homogeneous {
                            0.0
                        } else {
                            self.rho0 * u
                        }
                    }
                    OpenKind::Density(rho) => {
                        let st: f64 = t.tangential.iter().map(|&k| f[k]).sum();
                        let so: f64 = t.outgoing.iter().map(|&k| f[k]).sum();
                        (if homogeneous { 0.0 } else { rho }) - st - 2.0 * so
                    }
                };
                for (n, &i) in t.unknown.iter().enumerate() {
                    let mut v = f[opp[i]] + 6.0 * w[i] * jn;
                    for &(k, c) in &t.transverse[n] {
                        v += c * f[k];
                    }
                    f[i] = v;
                }
            }
        }
    }
}

/// Applies a thermal closure. `upstream` carries the upstream node's
/// populations for outlet closures.
pub fn apply_thermal_closure(
    stencil: &Stencil,
    closure: &ThermalClosure,
    g: &mut [f64],
    upstream: Option<&[f64]>,
    homogeneous: bool,
) {
    let opp = stencil.opposite();
    match closure {
        ThermalClosure::Wall => {
            for i in 0..g.len() {
                let o = opp[i];
                if i < o {
                    g.swap(i, o);
                }
            }
        }
        ThermalClosure::Symmetry { mirror } => {
            for &(i, s) in mirror {
                g[i] = g[s];
            }
        }
        ThermalClosure::Inlet { mirror, unknown, temperature } => {
            for &(i, s) in mirror {
                g[i] = g[s];
            }
            let t = if homogeneous { 0.0 } else { *temperature };
            let w = stencil.weights();
            for &i in unknown {
                g[i] = -g[opp[i]] + 2.0 * w[i] * t;
            }
        }
        ThermalClosure::Outlet { mirror, unknown, .. } => {
            for &(i, s) in mirror {
                g[i] = g[s];
            }
            let up = upstream.expect("outlet closure needs the upstream node");
            for &i in unknown {
                g[i] = up[i];
            }
        }
    }
}
