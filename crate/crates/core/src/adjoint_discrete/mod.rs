//! Discrete adjoint: the exact transpose of the forward step, iterated in
//! reverse order (boundaries, streaming, collision) to a fixed point.

pub mod boundary;
pub mod dot_test;
pub mod thermal;

use crate::adjoint_kernel::collide_adjoint;
use crate::domain::Role;
use crate::error::AdjointError;
use crate::forward::{relative_change, FlowModel, ResidualRecord, SolveReport, SolveStatus, SteadyOptions};
use boundary::BoundaryTranspose;

/// Default magnitude beyond which an adjoint iteration counts as diverged.
pub const DEFAULT_BLOWUP: f64 = 1e8;

/// Adjoint fields of one flow iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAdjointState {
    /// Adjoint of post-boundary populations.
    pub fstar: Vec<f64>,
    /// Adjoint of post-collision populations (the iterated variable).
    pub fstar_c: Vec<f64>,
    /// Adjoint of post-streaming populations (read by the sensitivity).
    pub fstar_s: Vec<f64>,
}

impl DiscreteAdjointState {
    pub fn zeros(len: usize) -> Self {
        Self { fstar: vec![0.0; len], fstar_c: vec![0.0; len], fstar_s: vec![0.0; len] }
    }
}

/// `−∂J/∂f` for the inlet-pressure objective: `−1/(3 N_in)` in every
/// direction of every inlet node.
pub fn inlet_pressure_forcing(model: &FlowModel) -> Vec<f64> {
    let q = model.q();
    let mut v = vec![0.0; model.len() * q];
    let n_in = model.roles().inlet_count();
    if n_in == 0 {
        return v;
    }
    let s = 1.0 / (3.0 * n_in as f64);
    for node in model.roles().nodes_with(Role::Inlet) {
        v[node * q..(node + 1) * q].iter_mut().for_each(|x| *x = -s);
    }
    v
}

/// The flow adjoint operator linearized about a frozen forward state.
pub struct DiscreteAdjoint<'a> {
    model: &'a FlowModel,
    u: Vec<[f64; 3]>,
    alpha: &'a [f64],
    bt: BoundaryTranspose,
    forcing: Vec<f64>,
}

impl<'a> DiscreteAdjoint<'a> {
    /// `frozen` is the converged post-boundary forward field; `forcing` is
    /// added after the transposed collision (`−∂J/∂f` plus any coupling).
    pub fn new(model: &'a FlowModel, frozen: &[f64], alpha: &'a [f64], forcing: Vec<f64>) -> Result<Self, AdjointError> {
        let u = model.macro_fields(frozen).u;
        let bt = BoundaryTranspose::flow(model)?;
        Ok(Self { model, u, alpha, bt, forcing })
    }

    pub fn boundary_transpose(&self) -> &BoundaryTranspose {
        &self.bt
    }

    pub fn velocity(&self) -> &[[f64; 3]] {
        &self.u
    }

    /// `f* = Bᵀ f_C*`.
    pub fn apply_boundaries(&self, st: &mut DiscreteAdjointState) {
        self.bt.apply(&st.fstar_c, &mut st.fstar);
    }

    /// `f_S*(x, i) = f*(x + e_i, i)`.
    pub fn stream(&self, st: &mut DiscreteAdjointState) {
        self.model.stream_reverse(&st.fstar, &mut st.fstar_s);
    }

    /// `f_C* = Cᵀ f_S* + forcing`.
    pub fn collide(&self, st: &mut DiscreteAdjointState, with_forcing: bool) {
        st.fstar_c.copy_from_slice(&st.fstar_s);
        collide_adjoint(self.model, &mut st.fstar_c, &self.u, self.alpha);
        if with_forcing {
            for (c, s) in st.fstar_c.iter_mut().zip(&self.forcing) {
                *c += s;
            }
        }
    }

    pub fn step(&self, st: &mut DiscreteAdjointState) {
        self.apply_boundaries(st);
        self.stream(st);
        self.collide(st, true);
    }

    /// One homogeneous step `Cᵀ Sᵀ Bᵀ` acting on `f_C*`.
    pub fn apply_transpose_step(&self, fc: &[f64]) -> Vec<f64> {
        let mut st = DiscreteAdjointState { fstar: vec![0.0; fc.len()], fstar_c: fc.to_vec(), fstar_s: vec![0.0; fc.len()] };
        self.apply_boundaries(&mut st);
        self.stream(&mut st);
        self.collide(&mut st, false);
        st.fstar_c
    }

    /// Iterates from `st` (zero for a cold start) until the relative change of
    /// `f_C*` over one window falls below `opts.tol`.
    pub fn run(&self, st: &mut DiscreteAdjointState, opts: SteadyOptions, blowup: f64) -> SolveReport {
        run_adjoint(st, opts, blowup, |s| self.step(s), |s| &s.fstar_c)
    }
}

pub(crate) fn run_adjoint<S>(
    st: &mut S,
    opts: SteadyOptions,
    blowup: f64,
    mut step: impl FnMut(&mut S),
    field: impl Fn(&S) -> &Vec<f64>,
) -> SolveReport {
    let mut prev = field(st).clone();
    let mut history = Vec::new();
    let mut steps = 0;
    while steps < opts.max_steps {
        let n = opts.window.min(opts.max_steps - steps);
        for _ in 0..n {
            step(st);
        }
        steps += n;
        let now = field(st);
        let peak = now.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if !(peak <= blowup) {
            return SolveReport { status: SolveStatus::Diverged { step: steps }, steps, history };
        }
        let residual = relative_change(now, &prev);
        history.push(ResidualRecord { step: steps, residual, mass: now.iter().sum(), objective: peak });
        if residual < opts.tol && n == opts.window {
            return SolveReport { status: SolveStatus::Converged, steps, history };
        }
        prev.copy_from_slice(now);
    }
    SolveReport { status: SolveStatus::MaxSteps, steps, history }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn zero_state_gets_inlet_source() {
        let problem = cases::pipe_bend_2d(12, 0.8, 0.0, 1.0).build().unwrap();
        let model = problem.flow();
        let f = model.initial_state();
        let alpha = vec![1.0; model.len()];
        let adj = DiscreteAdjoint::new(model, &f, &alpha, inlet_pressure_forcing(model)).unwrap();
        let mut st = DiscreteAdjointState::zeros(f.len());
        adj.step(&mut st);
        let q = model.q();
        let n_in = model.roles().inlet_count() as f64;
        for node in 0..model.len() {
            let expect = if model.roles().role(node) == Role::Inlet { -1.0 / (3.0 * n_in) } else { 0.0 };
            for i in 0..q {
                assert!((st.fstar_c[node * q + i] - expect).abs() < 1e-16);
            }
        }
    }
}
