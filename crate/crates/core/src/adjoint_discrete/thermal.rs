//! Discrete adjoint of the thermal solver and its coupling into the flow
//! adjoint.

use crate::error::AdjointError;
use crate::forward::thermal::ThermalModel;
use crate::forward::{dot, gather, FlowModel, SolveReport, SteadyOptions};

use super::boundary::BoundaryTranspose;
use super::run_adjoint;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalAdjointState {
    pub gstar: Vec<f64>,
    pub gstar_c: Vec<f64>,
    pub gstar_s: Vec<f64>,
}

impl ThermalAdjointState {
    pub fn zeros(len: usize) -> Self {
        Self { gstar: vec![0.0; len], gstar_c: vec![0.0; len], gstar_s: vec![0.0; len] }
    }
}

/// Thermal adjoint with the flow and temperature frozen. The objective is the
/// heat generation `J = −Σ β'(α)(1 − T)`, so `∂J/∂g_i = β'(α)`.
pub struct ThermalAdjoint<'a> {
    model: &'a ThermalModel,
    au: &'a [[f64; 3]],
    alpha: &'a [f64],
    bt: BoundaryTranspose,
    objective: bool,
}

impl<'a> ThermalAdjoint<'a> {
    pub fn new(model: &'a ThermalModel, au: &'a [[f64; 3]], alpha: &'a [f64]) -> Result<Self, AdjointError> {
        let bt = BoundaryTranspose::thermal(model)?;
        Ok(Self { model, au, alpha, bt, objective: true })
    }

    pub fn boundary_transpose(&self) -> &BoundaryTranspose {
        &self.bt
    }

    pub fn apply_boundaries(&self, st: &mut ThermalAdjointState) {
        self.bt.apply(&st.gstar_c, &mut st.gstar);
    }

    pub fn stream(&self, st: &mut ThermalAdjointState) {
        gather(&st.gstar, &mut st.gstar_s, &self.model.tables().adj);
    }

    /// Transposed collision including the source Jacobian and, optionally,
    /// the objective term `−∂J/∂g`.
    pub fn collide(&self, st: &mut ThermalAdjointState, with_objective: bool) {
        let m = self.model;
        let e: &[[f64; 3]; 7] = m.stencil().ev().try_into().unwrap();
        let w: &[f64; 7] = m.stencil().weights().try_into().unwrap();
        let p = m.params();
        for (x, (out, inp)) in st.gstar_c.chunks_exact_mut(7).zip(st.gstar_s.chunks_exact(7)).enumerate() {
            if !m.active()[x] {
                out.copy_from_slice(inp);
                continue;
            }
            let a = self.alpha[x];
            let om = p.inv_tau(a);
            let beta = p.beta(a);
            let mut sa = 0.0;
            let mut sb = 0.0;
            for k in 0..7 {
                sa += w[k] * inp[k];
                sb += w[k] * dot(e[k], self.au[x]) * inp[k];
            }
            let shared = om * (sa + 4.0 * sb) - beta * sa - if with_objective { beta } else { 0.0 };
            for i in 0..7 {
                out[i] = (1.0 - om) * inp[i] + shared;
            }
        }
    }

    pub fn step(&self, st: &mut ThermalAdjointState) {
        self.apply_boundaries(st);
        self.stream(st);
        self.collide(st, self.objective);
    }

    /// One homogeneous step acting on `g_C*`.
    pub fn apply_transpose_step(&self, gc: &[f64]) -> Vec<f64> {
        let mut st = ThermalAdjointState { gstar: vec![0.0; gc.len()], gstar_c: gc.to_vec(), gstar_s: vec![0.0; gc.len()] };
        self.apply_boundaries(&mut st);
        self.stream(&mut st);
        self.collide(&mut st, false);
        st.gstar_c
    }

    pub fn run(&self, st: &mut ThermalAdjointState, opts: SteadyOptions, blowup: f64) -> SolveReport {
        run_adjoint(st, opts, blowup, |s| self.step(s), |s| &s.gstar_c)
    }
}

/// Extra flow-adjoint forcing from the thermal adjoint:
/// `(1/τ_g) Σ_m (∂g_m^eq/∂f_i) g_S,m*` with `∂g_m^eq/∂f_i = 4 ω_m T α (e_m·e_i)/ρ0`.
pub fn flow_adjoint_coupling_term(
    flow: &FlowModel,
    thermal: &ThermalModel,
    gstar_s: &[f64],
    temperature: &[f64],
    alpha: &[f64],
) -> Vec<f64> {
    let q = flow.q();
    let ef = flow.stencil().ev();
    let eg = thermal.stencil().ev();
    let wg = thermal.stencil().weights();
    let p = thermal.params();
    let mut out = vec![0.0; flow.len() * q];
    for x in 0..flow.len() {
        if !flow.active()[x] {
            continue;
        }
        let gs = &gstar_s[x * 7..x * 7 + 7];
        let mut v = [0.0; 3];
        for m in 0..7 {
            for k in 0..3 {
                v[k] += wg[m] * eg[m][k] * gs[m];
            }
        }
        let scale = p.inv_tau(alpha[x]) * 4.0 * temperature[x] * alpha[x] / flow.rho0();
        for i in 0..q {
            out[x * q + i] = scale * dot(ef[i], v);
        }
    }
    out
}
