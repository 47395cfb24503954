//! Continuous adjoint: the discretized adjoint kinetic equation run in the
//! primal order (collide, reversed streaming, boundaries) with boundary rules
//! obtained by adjoining the continuous problem.
//!
//! Open boundaries only fix the directions leaving the domain. The conditions
//! the derivation attaches to the remaining directions cannot be imposed; their
//! violation is reported as an inconsistency residual.

use crate::adjoint_discrete::run_adjoint;
use crate::adjoint_kernel::collide_adjoint;
use crate::domain::{Face, Role};
use crate::error::AdjointError;
use crate::forward::boundary::{FlowClosure, OpenKind, OpenTable};
use crate::forward::{FlowModel, SolveReport, SteadyOptions};

#[derive(Debug, Clone, PartialEq)]
enum Closure {
    Wall,
    Mirror(Vec<(usize, usize)>),
    Inlet { face: Face, mirror: Vec<(usize, usize)> },
    Outlet { face: Face, mirror: Vec<(usize, usize)> },
}

/// Adjoint field and the residual log of the dropped conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousAdjointField {
    pub fstar: Vec<f64>,
    /// `(step, rms residual)` of the unenforceable open-boundary conditions.
    pub inconsistency: Vec<(usize, f64)>,
}

impl ContinuousAdjointField {
    pub fn zeros(len: usize) -> Self {
        Self { fstar: vec![0.0; len], inconsistency: Vec::new() }
    }
}

pub struct ContinuousAdjoint<'a> {
    model: &'a FlowModel,
    u: Vec<[f64; 3]>,
    alpha: &'a [f64],
    closures: Vec<(usize, Closure)>,
    source: f64,
    buf: std::cell::RefCell<Vec<f64>>,
}

/// Mirror pairs for the reversed streaming: a direction is unknown when its
/// source `x + e_i` lies outside the grid.
fn reversed_mirror(model: &FlowModel, mirror: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let opp = model.stencil().opposite();
    mirror.iter().map(|&(i, s)| (opp[i], opp[s])).collect()
}

impl<'a> ContinuousAdjoint<'a> {
    /// `frozen` is the converged forward field. The inlet source is
    /// `s = 2/(3 W_in)`.
    pub fn new(model: &'a FlowModel, frozen: &[f64], alpha: &'a [f64]) -> Result<Self, AdjointError> {
        let n_in = model.roles().inlet_count();
        let source = if n_in == 0 { 0.0 } else { 2.0 / (3.0 * model.roles().inlet_area()) };
        Self::with_source(model, frozen, alpha, source)
    }

    pub fn with_source(model: &'a FlowModel, frozen: &[f64], alpha: &'a [f64], source: f64) -> Result<Self, AdjointError> {
        let mut closures = Vec::new();
        for b in model.boundary_nodes() {
            let c = match (&b.closure, b.role) {
                (FlowClosure::Wall, _) => Closure::Wall,
                (FlowClosure::Symmetry { mirror }, _) => Closure::Mirror(reversed_mirror(model, mirror)),
                (FlowClosure::Open { face, kind: OpenKind::Velocity(_), mirror }, Role::Inlet) => {
                    Closure::Inlet { face: *face, mirror: reversed_mirror(model, mirror) }
                }
                (FlowClosure::Open { face, kind: OpenKind::Density(_), mirror }, Role::Outlet) => {
                    Closure::Outlet { face: *face, mirror: reversed_mirror(model, mirror) }
                }
                _ => {
                    return Err(AdjointError::Unsupported(
                        "the continuous adjoint has boundary rules for velocity inlets and density outlets only".into(),
                    ))
                }
            };
            closures.push((b.node, c));
        }
        let u = model.macro_fields(frozen).u;
        Ok(Self { model, u, alpha, closures, source, buf: std::cell::RefCell::new(vec![0.0; frozen.len()]) })
    }

    pub fn source(&self) -> f64 {
        self.source
    }

    pub fn collide(&self, fstar: &mut [f64]) {
        collide_adjoint(self.model, fstar, &self.u, self.alpha);
    }

    /// `f*(x, i) ← f*(x + e_i, i)`.
    pub fn stream(&self, fstar: &mut Vec<f64>) {
        let mut buf = self.buf.borrow_mut();
        self.model.stream_reverse(fstar, &mut buf);
        std::mem::swap(fstar, &mut *buf);
    }

    pub fn apply_boundaries(&self, fstar: &mut [f64]) {
        let q = self.model.q();
        let ctx = self.model.bc_context();
        let opp = self.model.stencil().opposite();
        let w = self.model.stencil().weights();
        for (node, c) in &self.closures {
            let f = &mut fstar[node * q..(node + 1) * q];
            match c {
                Closure::Wall => {
                    for i in 0..q {
                        if i < opp[i] {
                            f.swap(i, opp[i]);
                        }
                    }
                }
                Closure::Mirror(m) => {
                    for &(i, s) in m {
                        f[i] = f[s];
                    }
                }
                Closure::Inlet { face, mirror } => {
                    for &(i, s) in mirror {
                        f[i] = f[s];
                    }
                    let t = ctx.table(*face);
                    for &k in &t.outgoing {
                        f[k] = f[opp[k]] - self.source;
                    }
                }
                Closure::Outlet { face, mirror } => {
                    for &(i, s) in mirror {
                        f[i] = f[s];
                    }
                    let t = ctx.table(*face);
                    let common: f64 = 12.0 * t.unknown.iter().map(|&u| w[u] * f[u]).sum::<f64>();
                    for &k in &t.outgoing {
                        f[k] = f[opp[k]] - common;
                    }
                }
            }
        }
    }

    pub fn step(&self, fstar: &mut Vec<f64>) {
        self.collide(fstar);
        self.stream(fstar);
        self.apply_boundaries(fstar);
    }

    /// RMS of the dropped tangential-direction conditions over all open nodes.
    pub fn inconsistency(&self, fstar: &[f64]) -> f64 {
        let q = self.model.q();
        let ctx = self.model.bc_context();
        let w = self.model.stencil().weights();
        let mut sum = 0.0;
        let mut count = 0usize;
        for (node, c) in &self.closures {
            let f = &fstar[node * q..(node + 1) * q];
            let (face, inlet) = match c {
                Closure::Inlet { face, .. } => (*face, true),
                Closure::Outlet { face, .. } => (*face, false),
                _ => continue,
            };
            let t: &OpenTable = ctx.table(face);
            for &k in &t.tangential {
                let mut r = if inlet { 0.5 * self.source } else { 0.0 };
                for (n, &u) in t.unknown.iter().enumerate() {
                    let coef = t.transverse[n].iter().find(|(kk, _)| *kk == k).map_or(0.0, |(_, c)| *c);
                    if !inlet {
                        r += 6.0 * w[u] * f[u];
                    }
                    r -= coef * f[u];
                }
                sum += r * r;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }

    /// Iterates from `field` (zero for a cold start) to a steady state.
    pub fn run(&self, field: &mut ContinuousAdjointField, opts: SteadyOptions, blowup: f64) -> SolveReport {
        let mut log = std::mem::take(&mut field.inconsistency);
        let mut steps = 0usize;
        let report = run_adjoint(
            &mut field.fstar,
            opts,
            blowup,
            |f| {
                self.step(f);
                steps += 1;
                if steps % opts.window == 0 {
                    log.push((steps, self.inconsistency(f)));
                }
            },
            |f| f,
        );
        field.inconsistency = log;
        report
    }
}
