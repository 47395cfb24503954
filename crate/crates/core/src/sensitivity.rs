//! Sensitivity assembly, the volume-constraint multiplier, and the
//! finite-difference oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::GridGeometry;
use crate::forward::thermal::{thermal_equilibrium, ThermalModel};
use crate::forward::{dot, FlowModel};
use crate::lattice::Stencil;
use crate::problem::{ForwardSolution, Problem};

/// Which α-derivative of the equilibrium the kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelForm {
    /// Exact derivative `ω ρ0 [3 e·u + 9α (e·u)² − 3α u²]`.
    #[default]
    Derivative,
    /// Secant between α = 0 and α = 1: `ω ρ0 [3 e·u + 9/2 (e·u)² − 3/2 u²]`.
    Secant,
}

/// `∂f_i^eq/∂α` at one node.
pub fn equilibrium_alpha_derivative(u: [f64; 3], alpha: f64, rho0: f64, stencil: &Stencil, form: KernelForm, out: &mut [f64]) {
    let usq = dot(u, u);
    let (c2, c3) = match form {
        KernelForm::Derivative => (9.0 * alpha, 3.0 * alpha),
        KernelForm::Secant => (4.5, 1.5),
    };
    for ((o, e), w) in out.iter_mut().zip(stencil.ev()).zip(stencil.weights()) {
        let eu = dot(*e, u);
        *o = w * rho0 * (3.0 * eu + c2 * eu * eu - c3 * usq);
    }
}

/// Physics part of the sensitivity at one node: `−(1/τ) Σ ψ_i ∂f_i^eq/∂α`.
/// Both adjoint methods use this kernel; they differ only in which adjoint
/// field `ψ` they pass.
pub fn flow_kernel(psi: &[f64], u: [f64; 3], alpha: f64, tau: f64, rho0: f64, stencil: &Stencil, form: KernelForm) -> f64 {
    let mut d = [0.0; 19];
    let d = &mut d[..stencil.q()];
    equilibrium_alpha_derivative(u, alpha, rho0, stencil, form, d);
    -psi.iter().zip(d.iter()).map(|(p, v)| p * v).sum::<f64>() / tau
}

fn flow_field(model: &FlowModel, psi: &[f64], u: &[[f64; 3]], alpha: &[f64], form: KernelForm) -> Vec<f64> {
    let q = model.q();
    (0..model.len())
        .map(|x| {
            if !model.active()[x] {
                return 0.0;
            }
            flow_kernel(&psi[x * q..(x + 1) * q], u[x], alpha[x], model.tau(), model.rho0(), model.stencil(), form)
        })
        .collect()
}

/// `J'_W` from the continuous adjoint (post-boundary field `f*`).
pub fn sensitivity_continuous(model: &FlowModel, fstar: &[f64], u: &[[f64; 3]], alpha: &[f64], form: KernelForm) -> Vec<f64> {
    flow_field(model, fstar, u, alpha, form)
}

/// Frozen thermal data needed by the heat-sink sensitivity terms.
pub struct ThermalSensitivityInput<'a> {
    pub model: &'a ThermalModel,
    pub g: &'a [f64],
    pub gstar_s: &'a [f64],
    pub u: &'a [[f64; 3]],
}

/// Thermal terms at one node: advection coupling, relaxation contrast and
/// the explicit source term.
pub fn thermal_kernel(g: &[f64], gs: &[f64], u: [f64; 3], alpha: f64, model: &ThermalModel) -> f64 {
    let p = model.params();
    let st = model.stencil();
    let t: f64 = g.iter().sum();
    let au = [alpha * u[0], alpha * u[1], alpha * u[2]];
    let geq = thermal_equilibrium(t, au, st);
    let om = p.inv_tau(alpha);
    let contrast = 1.0 / p.tau_fluid - 1.0 / p.tau_solid;
    let mut s = 0.0;
    let mut ws = 0.0;
    for i in 0..7 {
        let (e, w) = (st.ev()[i], st.weights()[i]);
        s += gs[i] * (-4.0 * t * om * w * dot(e, u) + contrast * (g[i] - geq[i]));
        ws += w * gs[i];
    }
    s + p.beta_max * (1.0 - t) * (1.0 + ws)
}

/// `J'_W` from the discrete adjoint (post-streaming field `f_S*`), with the
/// thermal terms for heat-sink runs.
pub fn sensitivity_discrete(
    model: &FlowModel,
    fstar_s: &[f64],
    u: &[[f64; 3]],
    alpha: &[f64],
    form: KernelForm,
    thermal: Option<ThermalSensitivityInput<'_>>,
) -> Vec<f64> {
    let mut jw = flow_field(model, fstar_s, u, alpha, form);
    if let Some(th) = thermal {
        for (x, v) in jw.iter_mut().enumerate() {
            if th.model.active()[x] {
                *v += thermal_kernel(&th.g[x * 7..x * 7 + 7], &th.gstar_s[x * 7..x * 7 + 7], th.u[x], alpha[x], th.model);
            }
        }
    }
    jw
}

/// Sensitivity with its constraint multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityField {
    pub jw: Vec<f64>,
    pub jtotal: Vec<f64>,
    pub lambda: f64,
}

/// Second difference of `phi` with mirror closure at the domain faces.
pub fn laplacian_phi(phi: &[f64], geometry: &GridGeometry) -> Vec<f64> {
    let d = geometry.dims();
    let mut out = vec![0.0; phi.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let c = geometry.coords(idx);
        let mut s = 0.0;
        for a in 0..geometry.dim() {
            let mut lo = c;
            let mut hi = c;
            lo[a] = if c[a] == 0 { 1 } else { c[a] - 1 };
            hi[a] = if c[a] + 1 == d[a] { d[a] - 2 } else { c[a] + 1 };
            s += phi[geometry.index(lo[0], lo[1], lo[2])] + phi[geometry.index(hi[0], hi[1], hi[2])] - 2.0 * phi[idx];
        }
        *o = s;
    }
    out
}

/// `λ = exp(G)/N Σ |J'_W − σ ∇²φ|` over designable nodes.
pub fn lagrange_multiplier(jw: &[f64], lap: &[f64], sigma: f64, g: f64, designable: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((j, l), &d) in jw.iter().zip(lap).zip(designable) {
        if d {
            sum += (j - sigma * l).abs();
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    g.exp() * sum / n as f64
}

/// Central-difference estimate at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdmEstimate {
    pub node: usize,
    pub derivative: f64,
    pub j_plus: f64,
    pub j_minus: f64,
    /// True when a perturbed solve failed to converge; the estimate is unusable.
    pub flagged: bool,
}

/// Options for the oracle's perturbed solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdmOptions {
    pub h: f64,
    /// Steady tolerance of each perturbed solve.
    pub tol: f64,
    pub max_steps: usize,
}

/// `[J(α_j + h) − J(α_j − h)]/(2h)` for each listed node, every evaluation a
/// full steady solve warm-started from `base`.
pub fn fdm_oracle(problem: &Problem, alpha: &[f64], base: &ForwardSolution, nodes: &[usize], opts: FdmOptions) -> Vec<FdmEstimate> {
    nodes
        .par_iter()
        .map(|&node| {
            let eval = |delta: f64| {
                let mut a = alpha.to_vec();
                a[node] += delta;
                let sol = problem.solve_forward_with(&a, Some(base), opts.tol, opts.max_steps);
                (problem.objective(&sol, &a), sol.converged())
            };
            let (jp, okp) = eval(opts.h);
            let (jm, okm) = eval(-opts.h);
            FdmEstimate { node, derivative: (jp - jm) / (2.0 * opts.h), j_plus: jp, j_minus: jm, flagged: !(okp && okm) }
        })
        .collect()
}

/// Relative L2 error `‖a − b‖ / ‖b‖`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
