//! Forward BGK flow solver and the D3Q7 thermal solver.
//!
//! Populations are stored node-major: the `q` values of node `x` occupy
//! `f[x*q .. (x+1)*q]`.

pub mod boundary;
pub mod tangent;
pub mod thermal;

use serde::{Deserialize, Serialize};

use crate::domain::{CaseConfig, GridGeometry, NodeRoleMap, Role};
use crate::error::DomainError;
use crate::lattice::Stencil;
use boundary::{build_flow_boundaries, FlowBcContext, FlowBoundaryNode};

/// Dispatches a const-generic kernel on the stencil size.
macro_rules! with_q {
    ($q:expr, $Q:ident => $body:expr) => {
        match $q {
            7 => {
                const $Q: usize = 7;
                $body
            }
            9 => {
                const $Q: usize = 9;
                $body
            }
            19 => {
                const $Q: usize = 19;
                $body
            }
            other => unreachable!("unsupported stencil size {other}"),
        }
    };
}
pub(crate) use with_q;

/// Extended equilibrium: `ω_i {ρ + ρ0 [3 e·αu + 9/2 (e·αu)² − 3/2 |αu|²]}`.
pub fn equilibrium(rho: f64, u: [f64; 3], alpha: f64, rho0: f64, stencil: &Stencil) -> Vec<f64> {
    let au = [alpha * u[0], alpha * u[1], alpha * u[2]];
    let usq = dot(au, au);
    stencil
        .ev()
        .iter()
        .zip(stencil.weights())
        .map(|(e, w)| {
            let eu = dot(*e, au);
            w * (rho + rho0 * (3.0 * eu + 4.5 * eu * eu - 1.5 * usq))
        })
        .collect()
}

/// Zeroth and first moments of one node: `(ρ, u)` with `ρ0 u = Σ e f`.
pub fn moments(f: &[f64], rho0: f64, stencil: &Stencil) -> (f64, [f64; 3]) {
    let mut rho = 0.0;
    let mut m = [0.0; 3];
    for (fi, e) in f.iter().zip(stencil.ev()) {
        rho += fi;
        m[0] += e[0] * fi;
        m[1] += e[1] * fi;
        m[2] += e[2] * fi;
    }
    (rho, [m[0] / rho0, m[1] / rho0, m[2] / rho0])
}

#[inline(always)]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Density and velocity per node (temperature for thermal cases).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MacroFields {
    pub rho: Vec<f64>,
    pub u: Vec<[f64; 3]>,
    pub temperature: Option<Vec<f64>>,
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum SolveStatus {
    Converged,
    MaxSteps,
    Diverged { step: usize },
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }

    pub fn is_diverged(self) -> bool {
        matches!(self, SolveStatus::Diverged { .. })
    }

    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxSteps => "max-steps",
            SolveStatus::Diverged { .. } => "diverged",
        }
    }
}

/// One entry of a convergence log, written every window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub step: usize,
    pub residual: f64,
    pub mass: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub steps: usize,
    pub history: Vec<ResidualRecord>,
}

/// Stopping rule for fixed-point iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_steps: usize,
    pub window: usize,
}

impl SteadyOptions {
    pub fn new(tol: f64, max_steps: usize) -> Self {
        Self { tol, max_steps, window: 100 }
    }
}

/// RMS change per entry treated as roundoff.
const NOISE_FLOOR: f64 = 1e-15;

/// Relative L2 change; zero when the change is at the roundoff level.
pub(crate) fn relative_change(now: &[f64], before: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in now.iter().zip(before) {
        num += (a - b) * (a - b);
        den += a * a;
    }
    if num <= now.len() as f64 * NOISE_FLOOR * NOISE_FLOOR {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).sqrt()
    }
}

/// Pull-streaming index tables: `fwd[s]` is the slot streaming into `s`, `adj`
/// is its inverse.
#[derive(Debug, Clone)]
pub(crate) struct StreamTables {
    pub fwd: Vec<u32>,
    pub adj: Vec<u32>,
}

impl StreamTables {
    pub fn new(stencil: &Stencil, geometry: &GridGeometry) -> Self {
        let q = stencil.q();
        let n = geometry.len();
        let mut fwd = vec![0u32; n * q];
        let mut adj = vec![0u32; n * q];
        for x in 0..n {
            let c = geometry.coords(x);
            for (i, e) in stencil.velocities().iter().enumerate() {
                let up = geometry.shifted(c, [-e[0], -e[1], -e[2]]);
                let down = geometry.shifted(c, *e);
                fwd[x * q + i] = (up * q + i) as u32;
                adj[x * q + i] = (down * q + i) as u32;
            }
        }
        Self { fwd, adj }
    }
}

#[inline]
pub(crate) fn gather(src: &[f64], dst: &mut [f64], table: &[u32]) {
    for (d, &s) in dst.iter_mut().zip(table) {
        *d = src[s as usize];
    }
}

/// The assembled flow problem: stencil, geometry, boundary closures and
/// physical parameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct FlowModel {
    stencil: Stencil,
    geometry: GridGeometry,
    roles: NodeRoleMap,
    tau: f64,
    rho0: f64,
    tables: StreamTables,
    boundary: Vec<FlowBoundaryNode>,
    bc: FlowBcContext,
    active: Vec<bool>,
    e: Vec<[f64; 3]>,
    w: Vec<f64>,
}

impl FlowModel {
    pub fn new(
        stencil: Stencil,
        geometry: GridGeometry,
        roles: NodeRoleMap,
        config: &CaseConfig,
    ) -> Result<Self, DomainError> {
        let boundary = build_flow_boundaries(&stencil, &geometry, &roles, config)?;
        let tables = StreamTables::new(&stencil, &geometry);
        let bc = FlowBcContext::new(&stencil, &geometry, config.rho0);
        let active = roles.roles().iter().map(|r| *r != Role::Wall).collect();
        let e = stencil.ev().to_vec();
        let w = stencil.weights().to_vec();
        Ok(Self { stencil, geometry, roles, tau: config.tau, rho0: config.rho0, tables, boundary, bc, active, e, w })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn roles(&self) -> &NodeRoleMap {
        &self.roles
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn q(&self) -> usize {
        self.stencil.q()
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn boundary_nodes(&self) -> &[FlowBoundaryNode] {
        &self.boundary
    }

    pub fn bc_context(&self) -> &FlowBcContext {
        &self.bc
    }

    /// False at wall nodes, which are never collided.
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Equilibrium at rest with density `rho0`.
    pub fn initial_state(&self) -> Vec<f64> {
        let q = self.q();
        let mut f = vec![0.0; self.len() * q];
        for node in f.chunks_exact_mut(q) {
            for (v, w) in node.iter_mut().zip(&self.w) {
                *v = w * self.rho0;
            }
        }
        f
    }

    /// BGK collision in place at every non-wall node.
    pub fn collide(&self, f: &mut [f64], alpha: &[f64]) {
        with_q!(self.q(), Q => self.collide_q::<Q>(f, alpha))
    }

    fn collide_q<const Q: usize>(&self, f: &mut [f64], alpha: &[f64]) {
        let e: &[[f64; 3]; Q] = self.e.as_slice().try_into().unwrap();
        let w: &[f64; Q] = self.w.as_slice().try_into().unwrap();
        let omega = 1.0 / self.tau;
        let rho0 = self.rho0;
        let inv_rho0 = 1.0 / rho0;
        for ((node, &a), &act) in f.chunks_exact_mut(Q).zip(alpha).zip(&self.active) {
            if !act {
                continue;
            }
            let node: &mut [f64; Q] = node.try_into().unwrap();
            let mut rho = 0.0;
            let mut m = [0.0; 3];
            for i in 0..Q {
                rho += node[i];
                m[0] += e[i][0] * node[i];
                m[1] += e[i][1] * node[i];
                m[2] += e[i][2] * node[i];
            }
            let s = a * inv_rho0;
            let au = [m[0] * s, m[1] * s, m[2] * s];
            let usq = dot(au, au);
            for i in 0..Q {
                let eu = dot(e[i], au);
                let feq = w[i] * (rho + rho0 * (3.0 * eu + 4.5 * eu * eu - 1.5 * usq));
                node[i] += omega * (feq - node[i]);
            }
        }
    }

    /// Pull streaming `dst(x, i) = src(x − e_i, i)` with periodic wrap.
    pub fn stream(&self, src: &[f64], dst: &mut [f64]) {
        gather(src, dst, &self.tables.fwd);
    }

    /// Inverse of [`FlowModel::stream`]: `dst(x, i) = src(x + e_i, i)`.
    pub fn stream_reverse(&self, src: &[f64], dst: &mut [f64]) {
        gather(src, dst, &self.tables.adj);
    }

    pub fn apply_boundaries(&self, f: &mut [f64]) {
        let q = self.q();
        for b in &self.boundary {
            self.bc.apply(&b.closure, &mut f[b.node * q..(b.node + 1) * q], false);
        }
    }

    /// One step: collide, stream, boundaries. `buf` is scratch space.
    pub fn step(&self, f: &mut Vec<f64>, buf: &mut Vec<f64>, alpha: &[f64]) {
        self.collide(f, alpha);
        self.stream(f, buf);
        std::mem::swap(f, buf);
        self.apply_boundaries(f);
    }

    pub fn macro_fields(&self, f: &[f64]) -> MacroFields {
        let q = self.q();
        let mut rho = Vec::with_capacity(self.len());
        let mut u = Vec::with_capacity(self.len());
        for node in f.chunks_exact(q) {
            let (r, v) = moments(node, self.rho0, &self.stencil);
            rho.push(r);
            u.push(v);
        }
        MacroFields { rho, u, temperature: None }
    }

    /// Mean inlet pressure `(1/(3 N_in)) Σ ρ`; NaN without inlet nodes.
    pub fn inlet_pressure(&self, f: &[f64]) -> f64 {
        let q = self.q();
        let mut sum = 0.0;
        let mut n = 0usize;
        for node in self.roles.nodes_with(Role::Inlet) {
            sum += f[node * q..(node + 1) * q].iter().sum::<f64>();
            n += 1;
        }
        sum / (3.0 * n as f64)
    }

    /// Total mass over non-wall nodes.
    pub fn mass(&self, f: &[f64]) -> f64 {
        let q = self.q();
        f.chunks_exact(q).zip(&self.active).filter(|(_, a)| **a).map(|(n, _)| n.iter().sum::<f64>()).sum()
    }

    /// Velocity components of non-wall nodes, flattened.
    fn velocity_vector(&self, f: &[f64], out: &mut Vec<f64>) {
        let q = self.q();
        out.clear();
        let inv = 1.0 / self.rho0;
        for (node, &act) in f.chunks_exact(q).zip(&self.active) {
            if !act {
                continue;
            }
            let mut m = [0.0; 3];
            for (fi, e) in node.iter().zip(&self.e) {
                m[0] += e[0] * fi;
                m[1] += e[1] * fi;
                m[2] += e[2] * fi;
            }
            for v in &m[..self.geometry.dim()] {
                out.push(v * inv);
            }
        }
    }

    /// NaN anywhere, or a density excursion beyond `10 ρ0` at a non-wall node.
    pub fn is_diverged(&self, f: &[f64]) -> bool {
        let q = self.q();
        f.chunks_exact(q).zip(&self.active).any(|(node, &act)| {
            let rho: f64 = node.iter().sum();
            if act {
                !rho.is_finite() || (rho - self.rho0).abs() > 10.0 * self.rho0
            } else {
                rho.is_nan()
            }
        })
    }

    /// Iterates until the relative velocity change, both over one window and
    /// over its last step, drops below `opts.tol`.
    pub fn run_to_steady(&self, f: &mut Vec<f64>, alpha: &[f64], opts: SteadyOptions) -> SolveReport {
        let mut buf = vec![0.0; f.len()];
        let mut prev = Vec::new();
        let mut now = Vec::new();
        let mut last = Vec::new();
        self.velocity_vector(f, &mut prev);
        let mut history = Vec::new();
        let mut steps = 0;
        while steps < opts.max_steps {
            let n = opts.window.min(opts.max_steps - steps);
            for _ in 1..n {
                self.step(f, &mut buf, alpha);
            }
            self.velocity_vector(f, &mut last);
            self.step(f, &mut buf, alpha);
            steps += n;
            if self.is_diverged(f) {
                return SolveReport { status: SolveStatus::Diverged { step: steps }, steps, history };
            }
            self.velocity_vector(f, &mut now);
            // The single-step change catches period-two cycles an even window hides.
            let residual = relative_change(&now, &prev).max(relative_change(&now, &last));
            history.push(ResidualRecord { step: steps, residual, mass: self.mass(f), objective: self.inlet_pressure(f) });
            if residual < opts.tol && n == opts.window {
                return SolveReport { status: SolveStatus::Converged, steps, history };
            }
            std::mem::swap(&mut prev, &mut now);
        }
        SolveReport { status: SolveStatus::MaxSteps, steps, history }
    }
}
