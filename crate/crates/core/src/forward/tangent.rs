//! Tangent-linear forward steps, written from directional derivatives of the
//! collision and boundary maps. Used to check adjoint operators.

use super::boundary::apply_thermal_closure;
use super::thermal::ThermalModel;
use super::{dot, FlowModel};

/// One flow step linearized about a frozen (post-boundary) state.
pub struct FlowTangent<'a> {
    model: &'a FlowModel,
    u: Vec<[f64; 3]>,
    alpha: &'a [f64],
}

impl<'a> FlowTangent<'a> {
    pub fn new(model: &'a FlowModel, frozen: &[f64], alpha: &'a [f64]) -> Self {
        let u = model.macro_fields(frozen).u;
        Self { model, u, alpha }
    }

    pub fn collide(&self, df: &mut [f64]) {
        let m = self.model;
        let q = m.q();
        let (e, w) = (m.stencil().ev(), m.stencil().weights());
        let omega = 1.0 / m.tau();
        let rho0 = m.rho0();
        for (x, node) in df.chunks_exact_mut(q).enumerate() {
            if !m.active()[x] {
                continue;
            }
            let a = self.alpha[x];
            let u = self.u[x];
            let drho: f64 = node.iter().sum();
            let mut du = [0.0; 3];
            for (v, ei) in node.iter().zip(e) {
                du[0] += ei[0] * v / rho0;
                du[1] += ei[1] * v / rho0;
                du[2] += ei[2] * v / rho0;
            }
            let udu = dot(u, du);
            for i in 0..q {
                let deq = w[i]
                    * (drho
                        + rho0 * (3.0 * a * dot(e[i], du) + 9.0 * a * a * dot(e[i], u) * dot(e[i], du)
                            - 3.0 * a * a * udu));
                node[i] += omega * (deq - node[i]);
            }
        }
    }

    pub fn boundaries(&self, df: &mut [f64]) {
        let q = self.model.q();
        for b in self.model.boundary_nodes() {
            self.model.bc_context().apply(&b.closure, &mut df[b.node * q..(b.node + 1) * q], true);
        }
    }

    /// `B S C δf`.
    pub fn apply(&self, df: &[f64]) -> Vec<f64> {
        let mut c = df.to_vec();
        self.collide(&mut c);
        let mut s = vec![0.0; c.len()];
        self.model.stream(&c, &mut s);
        self.boundaries(&mut s);
        s
    }
}

/// One thermal step linearized in `g` with the flow frozen.
pub struct ThermalTangent<'a> {
    model: &'a ThermalModel,
    au: &'a [[f64; 3]],
    alpha: &'a [f64],
}

impl<'a> ThermalTangent<'a> {
    pub fn new(model: &'a ThermalModel, au: &'a [[f64; 3]], alpha: &'a [f64]) -> Self {
        Self { model, au, alpha }
    }

    pub fn apply(&self, dg: &[f64]) -> Vec<f64> {
        let m = self.model;
        let (e, w) = (m.stencil().ev(), m.stencil().weights());
        let p = m.params();
        let mut c = dg.to_vec();
        for (x, node) in c.chunks_exact_mut(7).enumerate() {
            if !m.active()[x] {
                continue;
            }
            let a = self.alpha[x];
            let dt: f64 = node.iter().sum();
            let om = p.inv_tau(a);
            for i in 0..7 {
                let deq = w[i] * dt * (1.0 + 4.0 * dot(e[i], self.au[x]));
                node[i] += om * (deq - node[i]) - w[i] * p.beta(a) * dt;
            }
        }
        let mut s = vec![0.0; c.len()];
        m.stream(&c, &mut s);
        let before = s.clone();
        for b in m.boundary_nodes() {
            let up = match b.closure {
                super::boundary::ThermalClosure::Outlet { upstream, .. } => Some(&before[upstream * 7..upstream * 7 + 7]),
                _ => None,
            };
            apply_thermal_closure(m.stencil(), &b.closure, &mut s[b.node * 7..b.node * 7 + 7], up, true);
        }
        s
    }
}
