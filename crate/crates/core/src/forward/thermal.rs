//! D3Q7 advection-diffusion solver with the design-dependent heat source.

use crate::domain::{GridGeometry, NodeRoleMap, Role};
use crate::error::DomainError;
use crate::lattice::{make_stencil, Stencil, StencilKind};

use super::boundary::{apply_thermal_closure, build_thermal_boundaries, ThermalBoundaryNode, ThermalClosure};
use super::{dot, gather, relative_change, ResidualRecord, SolveReport, SolveStatus, SteadyOptions, StreamTables};

/// Thermal relaxation and source parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub tau_fluid: f64,
    pub tau_solid: f64,
    pub beta_max: f64,
    pub inlet_temperature: f64,
}

impl ThermalParams {
    /// `1/τ_g(α)`, linear in α between the solid and fluid values.
    #[inline]
    pub fn inv_tau(&self, alpha: f64) -> f64 {
        alpha / self.tau_fluid + (1.0 - alpha) / self.tau_solid
    }

    /// `β'(α) = β'_max (1 − α)`.
    #[inline]
    pub fn beta(&self, alpha: f64) -> f64 {
        self.beta_max * (1.0 - alpha)
    }
}

/// Thermal equilibrium `ω_i T (1 + 4 e_i·αu)`.
pub fn thermal_equilibrium(t: f64, au: [f64; 3], stencil: &Stencil) -> Vec<f64> {
    stencil.ev().iter().zip(stencil.weights()).map(|(e, w)| w * t * (1.0 + 4.0 * dot(*e, au))).collect()
}

#[derive(Debug, Clone)]
pub struct ThermalModel {
    stencil: Stencil,
    geometry: GridGeometry,
    params: ThermalParams,
    tables: StreamTables,
    boundary: Vec<ThermalBoundaryNode>,
    active: Vec<bool>,
}

impl ThermalModel {
    pub fn new(geometry: GridGeometry, roles: &NodeRoleMap, params: ThermalParams) -> Result<Self, DomainError> {
        let stencil = make_stencil(StencilKind::D3Q7);
        let boundary = build_thermal_boundaries(&stencil, &geometry, roles, params.inlet_temperature)?;
        let tables = StreamTables::new(&stencil, &geometry);
        let active = roles.roles().iter().map(|r| *r != Role::Wall).collect();
        Ok(Self { stencil, geometry, params, tables, boundary, active })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &ThermalParams {
        &self.params
    }

    pub fn boundary_nodes(&self) -> &[ThermalBoundaryNode] {
        &self.boundary
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub(crate) fn tables(&self) -> &StreamTables {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    /// Equilibrium at `T = 0`.
    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.len() * 7]
    }

    /// `α u` per node, the velocity seen by the thermal equilibrium.
    pub fn advecting_velocity(u: &[[f64; 3]], alpha: &[f64]) -> Vec<[f64; 3]> {
        u.iter().zip(alpha).map(|(v, a)| [a * v[0], a * v[1], a * v[2]]).collect()
    }

    pub fn collide(&self, g: &mut [f64], au: &[[f64; 3]], alpha: &[f64]) {
        let e: &[[f64; 3]; 7] = self.stencil.ev().try_into().unwrap();
        let w: &[f64; 7] = self.stencil.weights().try_into().unwrap();
        for (((node, v), &a), &act) in g.chunks_exact_mut(7).zip(au).zip(alpha).zip(&self.active) {
            if !act {
                continue;
            }
            let node: &mut [f64; 7] = node.try_into().unwrap();
            let t: f64 = node.iter().sum();
            let om = self.params.inv_tau(a);
            let src = self.params.beta(a) * (1.0 - t);
            for i in 0..7 {
                let geq = w[i] * t * (1.0 + 4.0 * dot(e[i], *v));
                node[i] += om * (geq - node[i]) + w[i] * src;
            }
        }
    }

    pub fn stream(&self, src: &[f64], dst: &mut [f64]) {
        gather(src, dst, &self.tables.fwd);
    }

    pub fn apply_boundaries(&self, g: &mut [f64]) {
        // Outlet copies read the streamed field before any closure writes.
        let upstream: Vec<[f64; 7]> = self
            .boundary
            .iter()
            .filter_map(|b| match b.closure {
                ThermalClosure::Outlet { upstream, .. } => Some(g[upstream * 7..upstream * 7 + 7].try_into().unwrap()),
                _ => None,
            })
            .collect();
        let mut k = 0;
        for b in &self.boundary {
            let up = match b.closure {
                ThermalClosure::Outlet { .. } => {
                    k += 1;
                    Some(&upstream[k - 1][..])
                }
                _ => None,
            };
            apply_thermal_closure(&self.stencil, &b.closure, &mut g[b.node * 7..b.node * 7 + 7], up, false);
        }
    }

    pub fn step(&self, g: &mut Vec<f64>, buf: &mut Vec<f64>, au: &[[f64; 3]], alpha: &[f64]) {
        self.collide(g, au, alpha);
        self.stream(g, buf);
        std::mem::swap(g, buf);
        self.apply_boundaries(g);
    }

    pub fn temperature(&self, g: &[f64]) -> Vec<f64> {
        g.chunks_exact(7).map(|n| n.iter().sum()).collect()
    }

    /// Heat objective `−Σ β'(α)(1 − T)` over non-wall nodes.
    pub fn heat_objective(&self, g: &[f64], alpha: &[f64]) -> f64 {
        let mut j = 0.0;
        for ((node, &a), &act) in g.chunks_exact(7).zip(alpha).zip(&self.active) {
            if act {
                let t: f64 = node.iter().sum();
                j -= self.params.beta(a) * (1.0 - t);
            }
        }
        j
    }

    /// Iterates the thermal field with the flow frozen.
    pub fn run_to_steady(&self, g: &mut Vec<f64>, au: &[[f64; 3]], alpha: &[f64], opts: SteadyOptions) -> SolveReport {
        let mut buf = vec![0.0; g.len()];
        let mut prev = self.temperature(g);
        let mut history = Vec::new();
        let mut steps = 0;
        while steps < opts.max_steps {
            let n = opts.window.min(opts.max_steps - steps);
            for _ in 1..n {
                self.step(g, &mut buf, au, alpha);
            }
            let last = self.temperature(g);
            self.step(g, &mut buf, au, alpha);
            steps += n;
            let now = self.temperature(g);
            if now.iter().zip(&self.active).any(|(t, &a)| a && !(t.abs() < 1e3)) {
                return SolveReport { status: SolveStatus::Diverged { step: steps }, steps, history };
            }
            let residual = relative_change(&now, &prev).max(relative_change(&now, &last));
            let mass = now.iter().zip(&self.active).filter(|(_, a)| **a).map(|(t, _)| t).sum();
            history.push(ResidualRecord { step: steps, residual, mass, objective: self.heat_objective(g, alpha) });
            if residual < opts.tol && n == opts.window {
                return SolveReport { status: SolveStatus::Converged, steps, history };
            }
            prev = now;
        }
        SolveReport { status: SolveStatus::MaxSteps, steps, history }
    }
}
