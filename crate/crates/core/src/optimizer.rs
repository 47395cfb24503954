//! Level-set topology optimization loop and the stability sweep.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::adjoint_discrete::DEFAULT_BLOWUP;
use crate::cases::CaseFile;
use crate::domain::{map_levelset_to_design, volume_constraint, DesignState, Role};
use crate::error::{ConfigError, Result};
use crate::forward::thermal::ThermalModel;
use crate::forward::{FlowModel, SolveStatus, SteadyOptions};
use crate::problem::{AdjointMethod, AdjointSolution, ForwardSolution, Problem};
use crate::sensitivity::{lagrange_multiplier, laplacian_phi, KernelForm, SensitivityField};

fn d_iters() -> usize {
    200
}
fn d_step() -> f64 {
    0.1
}
fn d_still() -> usize {
    5
}
fn d_window() -> usize {
    10
}
fn d_plateau() -> f64 {
    1e-5
}
fn d_vol() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(default)]
    pub method: AdjointMethod,
    #[serde(default = "d_iters")]
    pub max_iterations: usize,
    #[serde(default)]
    pub kernel: KernelForm,
    /// Largest level-set change per iteration.
    #[serde(default = "d_step")]
    pub max_phi_step: f64,
    /// Stop after this many consecutive iterations without a design change.
    #[serde(default = "d_still")]
    pub still_iterations: usize,
    #[serde(default = "d_window")]
    pub plateau_window: usize,
    /// Relative objective change over `plateau_window` iterations that counts
    /// as a plateau.
    #[serde(default = "d_plateau")]
    pub plateau_tol: f64,
    /// Allowed excess volume as a fraction of `Vmax·N`.
    #[serde(default = "d_vol")]
    pub volume_tol: f64,
    /// Keep a design snapshot every this many iterations (0 keeps none).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            method: AdjointMethod::default(),
            max_iterations: d_iters(),
            kernel: KernelForm::default(),
            max_phi_step: d_step(),
            still_iterations: d_still(),
            plateau_window: d_window(),
            plateau_tol: d_plateau(),
            volume_tol: d_vol(),
            snapshot_every: 0,
        }
    }
}

/// Mean inlet pressure of a converged flow state.
pub fn objective_pipebend(model: &FlowModel, f: &[f64]) -> f64 {
    model.inlet_pressure(f)
}

/// `−Σ β'(α)(1 − T)`.
pub fn objective_heatsink(model: &ThermalModel, g: &[f64], alpha: &[f64]) -> f64 {
    model.heat_objective(g, alpha)
}

/// `φ ← clamp(φ − step·(J' − σ∇²φ), −1, 1)` on designable nodes, with
/// `step = Δξ·K`. Returns the largest change.
pub fn rd_update(phi: &mut [f64], jtotal: &[f64], lap: &[f64], sigma: f64, step: f64, designable: &[bool]) -> f64 {
    let mut max = 0.0f64;
    for (((p, j), l), &d) in phi.iter_mut().zip(jtotal).zip(lap).zip(designable) {
        if !d {
            continue;
        }
        let new = (*p - step * (j - sigma * l)).clamp(-1.0, 1.0);
        max = max.max((new - *p).abs());
        *p = new;
    }
    max
}

/// Largest step `Δξ·K` not exceeding `dxi·k` that keeps every designable
/// update within `max_change`.
pub fn adaptive_step(jtotal: &[f64], lap: &[f64], sigma: f64, designable: &[bool], dxi_k: f64, max_change: f64) -> f64 {
    let peak = jtotal
        .iter()
        .zip(lap)
        .zip(designable)
        .filter(|(_, d)| **d)
        .map(|((j, l), _)| (j - sigma * l).abs())
        .fold(0.0f64, f64::max);
    if peak == 0.0 {
        dxi_k
    } else {
        dxi_k.min(max_change / peak)
    }
}

/// Sensitivity normalized by its peak magnitude over designable nodes, with
/// the multiplier computed from the volume excess per node.
pub fn assemble_sensitivity(jw: Vec<f64>, lap: &[f64], design: &DesignState, sigma: f64, vmax: f64) -> SensitivityField {
    let peak = jw.iter().zip(&design.designable).filter(|(_, d)| **d).map(|(v, _)| v.abs()).fold(0.0f64, f64::max);
    let jw: Vec<f64> = if peak > 0.0 { jw.iter().map(|v| v / peak).collect() } else { jw };
    let n = design.designable_count().max(1) as f64;
    let g = volume_constraint(design, vmax) / n;
    let lambda = lagrange_multiplier(&jw, lap, sigma, g, &design.designable);
    let jtotal = jw.iter().zip(&design.designable).map(|(v, &d)| if d { lambda + v } else { 0.0 }).collect();
    SensitivityField { jw, jtotal, lambda }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum OptimizationStatus {
    Converged,
    MaxIterations,
    ForwardDiverged { iteration: usize },
    AdjointDiverged { iteration: usize },
}

impl OptimizationStatus {
    pub fn label(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max-iterations",
            Self::ForwardDiverged { .. } => "forward-diverged",
            Self::AdjointDiverged { .. } => "adjoint-diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub volume: f64,
    pub lambda: f64,
    pub changed: usize,
    pub forward_steps: usize,
    pub adjoint_steps: usize,
    pub forward_status: SolveStatus,
    pub adjoint_status: Option<SolveStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationRun {
    pub method: AdjointMethod,
    pub status: OptimizationStatus,
    pub history: Vec<IterationRecord>,
    pub snapshots: Vec<(usize, DesignState)>,
    pub design: DesignState,
    /// Objective of the initial design.
    pub baseline: f64,
}

impl OptimizationRun {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.history.last().map(|r| r.objective)
    }
}

/// Runs the loop. `observe` sees every record with the design it was
/// evaluated on.
pub fn optimize(problem: &Problem, settings: &OptimizerSettings, mut observe: impl FnMut(&IterationRecord, &DesignState)) -> Result<OptimizationRun> {
    let cfg = &problem.case_file().case;
    let file = problem.case_file();
    let geometry = problem.flow().geometry().clone();
    let mut design = DesignState::new(problem.designable().to_vec(), file.design.phi0);
    let quota = cfg.vmax * design.designable_count() as f64;
    let fwd_opts = problem.forward_options();
    let adj_opts = problem.adjoint_options();

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut snapshots = Vec::new();
    let mut objectives: VecDeque<f64> = VecDeque::new();
    let mut still = 0usize;
    let mut fwd: Option<ForwardSolution> = None;
    let mut adj: Option<AdjointSolution> = None;
    let mut baseline = f64::NAN;
    let mut changed = 0usize;

    for it in 0..settings.max_iterations {
        let sol = problem.solve_forward_with(&design.alpha, fwd.as_ref(), fwd_opts.tol, fwd_opts.max_steps);
        let j = problem.objective(&sol, &design.alpha);
        let g = volume_constraint(&design, cfg.vmax);
        if it == 0 {
            baseline = j;
        }
        let mut rec = IterationRecord {
            iteration: it,
            objective: j,
            volume: g,
            lambda: f64::NAN,
            changed,
            forward_steps: sol.steps(),
            adjoint_steps: 0,
            forward_status: sol.status(),
            adjoint_status: None,
        };
        if sol.status().is_diverged() {
            observe(&rec, &design);
            history.push(rec);
            return Ok(finish(settings, OptimizationStatus::ForwardDiverged { iteration: it }, history, snapshots, design, baseline));
        }
        let a = problem.solve_adjoint_with(&sol, &design.alpha, settings.method, adj.as_ref(), adj_opts, DEFAULT_BLOWUP)?;
        rec.adjoint_steps = a.steps();
        rec.adjoint_status = Some(a.status());
        if a.status().is_diverged() {
            observe(&rec, &design);
            history.push(rec);
            return Ok(finish(settings, OptimizationStatus::AdjointDiverged { iteration: it }, history, snapshots, design, baseline));
        }
        let jw = problem.sensitivity(&sol, &a, &design.alpha, settings.kernel);
        let lap = laplacian_phi(&design.phi, &geometry);
        let s = assemble_sensitivity(jw, &lap, &design, cfg.sigma, cfg.vmax);
        rec.lambda = s.lambda;
        observe(&rec, &design);
        if settings.snapshot_every > 0 && it % settings.snapshot_every == 0 {
            snapshots.push((it, design.clone()));
        }

        // Stopping rules, checked on the design just evaluated.
        objectives.push_back(j);
        if objectives.len() > settings.plateau_window + 1 {
            objectives.pop_front();
        }
        still = if it > 0 && changed == 0 { still + 1 } else { 0 };
        let plateau = objectives.len() == settings.plateau_window + 1 && {
            let first = objectives[0];
            (j - first).abs() <= settings.plateau_tol * first.abs().max(f64::MIN_POSITIVE)
        };
        history.push(rec);
        let feasible = g <= settings.volume_tol * quota;
        if feasible && (still >= settings.still_iterations || plateau) {
            return Ok(finish(settings, OptimizationStatus::Converged, history, snapshots, design, baseline));
        }

        let step = adaptive_step(&s.jtotal, &lap, cfg.sigma, &design.designable, cfg.dxi * cfg.k, settings.max_phi_step);
        rd_update(&mut design.phi, &s.jtotal, &lap, cfg.sigma, step, &design.designable);
        changed = map_levelset_to_design(&mut design);
        fwd = Some(sol);
        adj = Some(a);
    }
    Ok(finish(settings, OptimizationStatus::MaxIterations, history, snapshots, design, baseline))
}

fn finish(
    settings: &OptimizerSettings,
    status: OptimizationStatus,
    history: Vec<IterationRecord>,
    snapshots: Vec<(usize, DesignState)>,
    design: DesignState,
    baseline: f64,
) -> OptimizationRun {
    OptimizationRun { method: settings.method, status, history, snapshots, design, baseline }
}

/// Whether fluid nodes (`α ≥ 0.5`, walls excluded) connect an inlet node to an
/// outlet node through face neighbours.
pub fn fluid_path_exists(model: &FlowModel, alpha: &[f64]) -> bool {
    let g = model.geometry();
    let roles = model.roles();
    let dims = g.dims();
    let open = |i: usize| roles.role(i) != Role::Wall && alpha[i] >= 0.5;
    let mut seen = vec![false; g.len()];
    let mut queue: VecDeque<usize> = roles.nodes_with(Role::Inlet).filter(|&i| open(i)).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        if roles.role(i) == Role::Outlet {
            return true;
        }
        let c = g.coords(i);
        for a in 0..g.dim() {
            for up in [false, true] {
                let mut n = c;
                if up {
                    if c[a] + 1 == dims[a] {
                        continue;
                    }
                    n[a] += 1;
                } else {
                    if c[a] == 0 {
                        continue;
                    }
                    n[a] -= 1;
                }
                let j = g.index(n[0], n[1], n[2]);
                if !seen[j] && open(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    false
}

/// Solver probed by a stability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilitySolver {
    Forward,
    ContinuousAdjoint,
    DiscreteAdjoint,
}

impl StabilitySolver {
    pub fn label(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::ContinuousAdjoint => "continuous-adjoint",
            Self::DiscreteAdjoint => "discrete-adjoint",
        }
    }
}

fn d_solvers() -> Vec<StabilitySolver> {
    vec![StabilitySolver::Forward, StabilitySolver::ContinuousAdjoint, StabilitySolver::DiscreteAdjoint]
}
fn d_taus() -> Vec<f64> {
    vec![0.6]
}
fn d_hi() -> f64 {
    0.4
}
fn d_bracket() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySettings {
    #[serde(default = "d_solvers")]
    pub solvers: Vec<StabilitySolver>,
    #[serde(default = "d_taus")]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub u_low: f64,
    #[serde(default = "d_hi")]
    pub u_high: f64,
    #[serde(default = "d_bracket")]
    pub bracket: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self { solvers: d_solvers(), taus: d_taus(), u_low: 0.0, u_high: d_hi(), bracket: d_bracket() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityResult {
    pub tau: f64,
    pub solver: StabilitySolver,
    /// Largest inlet speed found stable.
    pub u_max: f64,
    /// Smallest inlet speed found unstable (`None` if the upper end was stable).
    pub u_unstable: Option<f64>,
    pub probes: Vec<(f64, bool)>,
}

/// One probe: `iter_cap` forward steps on the initial (all-fluid) design, then
/// for the adjoint solvers `iter_cap` adjoint steps about the reached state.
/// Stable means no divergence in either phase.
pub fn stability_probe(file: &CaseFile, tau: f64, u_in: f64, solver: StabilitySolver, iter_cap: usize) -> Result<bool> {
    let problem = file.with_tau(tau).with_inlet_velocity(u_in).build()?;
    let alpha = DesignState::new(problem.designable().to_vec(), file.design.phi0).alpha;
    let sol = problem.solve_forward_with(&alpha, None, file.case.forward_tol, iter_cap);
    if sol.status().is_diverged() {
        return Ok(false);
    }
    let method = match solver {
        StabilitySolver::Forward => return Ok(true),
        StabilitySolver::ContinuousAdjoint => AdjointMethod::Continuous,
        StabilitySolver::DiscreteAdjoint => AdjointMethod::Discrete,
    };
    let opts = SteadyOptions::new(file.case.adjoint_tol, iter_cap);
    let adj = problem.solve_adjoint_with(&sol, &alpha, method, None, opts, DEFAULT_BLOWUP)?;
    Ok(!adj.status().is_diverged())
}

/// Bisection on the inlet speed between `settings.u_low` (must be stable) and
/// `settings.u_high` down to `settings.bracket`.
pub fn stability_sweep(file: &CaseFile, tau: f64, solver: StabilitySolver, iter_cap: usize, settings: &StabilitySettings) -> Result<StabilityResult> {
    let mut probes = Vec::new();
    let mut probe = |u: f64| -> Result<bool> {
        let s = stability_probe(file, tau, u, solver, iter_cap)?;
        log::debug!("stability {} tau={tau} u={u:.6} stable={s}", solver.label());
        probes.push((u, s));
        Ok(s)
    };
    let (mut lo, mut hi) = (settings.u_low, settings.u_high);
    if !probe(lo)? {
        return Err(ConfigError::Invalid(format!("no stable point in [{lo}, {hi}] for {} at tau={tau}", solver.label())).into());
    }
    if probe(hi)? {
        return Ok(StabilityResult { tau, solver, u_max: hi, u_unstable: None, probes });
    }
    while hi - lo > settings.bracket {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StabilityResult { tau, solver, u_max: lo, u_unstable: Some(hi), probes })
}

/// `scores[i][j]` is the objective of design `j` evaluated on case `i`.
pub fn cross_check(files: &[CaseFile], designs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    files
        .iter()
        .map(|f| {
            let p = f.build()?;
            Ok(designs
                .iter()
                .map(|a| {
                    let sol = p.solve_forward(a);
                    p.objective(&sol, a)
                })
                .collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::domain::GridGeometry;

    #[test]
    fn rd_update_examples() {
        let d = vec![true, true, false];
        let mut phi = vec![0.5, 1.0, 0.2];
        let m = rd_update(&mut phi, &[0.0; 3], &[0.0; 3], 0.0, 1.0, &d);
        assert_eq!((m, phi.clone()), (0.0, vec![0.5, 1.0, 0.2]));
        rd_update(&mut phi, &[2.0; 3], &[0.0; 3], 0.0, 0.1, &d);
        assert!((phi[0] - 0.3).abs() < 1e-15 && (phi[1] - 0.8).abs() < 1e-15 && phi[2] == 0.2);
        let mut phi = vec![1.0, 0.95];
        rd_update(&mut phi, &[-5.0, -5.0], &[0.0; 2], 0.0, 1.0, &[true, true]);
        assert_eq!(phi, vec![1.0, 1.0]);
    }

    #[test]
    fn adaptive_step_caps_the_change() {
        let s = adaptive_step(&[4.0, -2.0], &[0.0; 2], 0.0, &[true, true], 1.0, 0.1);
        assert!((s - 0.025).abs() < 1e-15);
        assert_eq!(adaptive_step(&[0.01], &[0.0], 0.0, &[true], 1.0, 0.1), 1.0);
    }

    #[test]
    fn heatsink_objective_extremes() {
        let c = cases::heat_sink(12, 6, 6, 0.8, 5.0, 2);
        let p = c.build().unwrap();
        let th = p.thermal().unwrap();
        let g = th.initial_state();
        let n = th.len();
        assert_eq!(objective_heatsink(th, &g, &vec![1.0; n]), 0.0);
        let j = objective_heatsink(th, &g, &vec![0.0; n]);
        let expect = -(th.active().iter().filter(|a| **a).count() as f64) * c.case.beta_max;
        assert!((j - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn flood_fill() {
        let p = cases::pipe_bend_2d(20, 0.8, 0.2, 1.0).build().unwrap();
        let n = p.flow().len();
        assert!(fluid_path_exists(p.flow(), &vec![1.0; n]));
        let g: &GridGeometry = p.flow().geometry();
        let mut alpha = vec![1.0; n];
        for y in 0..20 {
            alpha[g.index(10, y, 0)] = 0.0;
        }
        assert!(!fluid_path_exists(p.flow(), &alpha));
    }

    #[test]
    fn zero_velocity_probe_is_stable() {
        let c = cases::pipe_bend_2d(16, 0.6, 0.0, 1.0);
        for s in d_solvers() {
            assert!(stability_probe(&c, 0.6, 0.0, s, 300).unwrap());
        }
    }
}
