use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::{json, Value};

use adjlb_core::cases::CaseFile;
use adjlb_core::domain::{reynolds_number, Inflow};
use adjlb_core::io::{self, fmt_f64, history_csv, residual_csv, vtk_structured_points, CsvTable, RunInfo, RunManifest, VtkField};
use adjlb_core::optimizer::{self, fluid_path_exists, stability_sweep};
use adjlb_core::sensitivity::{fdm_oracle, relative_l2, FdmOptions};
use adjlb_core::{
    AdjointMethod, AdjointSolution, DesignState, ForwardSolution, OptimizationStatus, Problem, SolveStatus,
};

const EXIT_OK: u8 = 0;
const EXIT_DIVERGED: u8 = 2;
const EXIT_MAX_STEPS: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;

fn exit_code(s: SolveStatus) -> u8 {
    match s {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::Diverged { .. } => EXIT_DIVERGED,
        SolveStatus::MaxSteps => EXIT_MAX_STEPS,
    }
}

fn status_json(s: SolveStatus) -> Value {
    serde_json::to_value(s).expect("status serializes")
}

fn parse_method(s: &str) -> Result<AdjointMethod> {
    Ok(AdjointMethod::from_str(s)?)
}

/// Output directory plus the manifest being assembled.
struct Run {
    out: std::path::PathBuf,
    file: CaseFile,
    info: RunInfo,
    started: Instant,
}

impl Run {
    fn new(command: &str, file: CaseFile, out: &Path, problem: &Problem) -> Self {
        let mut info = RunInfo::new(command, problem.flow().stencil());
        let r = &mut info.resolved;
        let c = &file.case;
        let g = problem.flow().geometry();
        r.insert("nodes".into(), json!(g.len()));
        r.insert("inlet_nodes".into(), json!(problem.flow().roles().inlet_count()));
        r.insert("designable_nodes".into(), json!(problem.designable().iter().filter(|d| **d).count()));
        r.insert("viscosity".into(), json!(c.viscosity()));
        let length = c.char_length.unwrap_or_else(|| match c.inflow {
            Inflow::Velocity { .. } => problem.flow().roles().inlet_count() as f64,
            Inflow::Pressure { .. } => g.dims()[0] as f64,
        });
        r.insert("char_length".into(), json!(length));
        r.insert("reynolds".into(), json!(reynolds_number(c, length)));
        if problem.thermal().is_some() {
            r.insert("tau_g_fluid".into(), json!(c.tau_g_fluid()));
            r.insert("tau_g_solid".into(), json!(c.tau_g_solid()));
        }
        Self { out: out.to_path_buf(), file, info, started: Instant::now() }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.out.join(name);
        io::write_atomic(&p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))
    }

    fn status(&mut self, key: &str, v: Value) {
        self.info.statuses.insert(key.into(), v);
    }

    fn timing(&mut self, key: &str, since: Instant) {
        self.info.timings.insert(key.into(), json!(since.elapsed().as_secs_f64()));
    }

    fn finish(mut self) -> Result<()> {
        let t = self.started;
        self.timing("total_seconds", t);
        let m = RunManifest { config: self.file.clone(), run: self.info.clone() };
        self.write("manifest.json", &m.to_json())
    }
}

fn load(config: &Path) -> Result<(CaseFile, Problem)> {
    let file = io::load_case(config)?;
    let problem = file.build()?;
    Ok((file, problem))
}

fn forward_fields(run: &mut Run, problem: &Problem, sol: &ForwardSolution, alpha: &[f64], name: &str) -> Result<()> {
    let m = problem.macro_fields(sol);
    let mut fields = vec![("rho", VtkField::Scalars(&m.rho)), ("velocity", VtkField::Vectors(&m.u)), ("alpha", VtkField::Scalars(alpha))];
    if let Some(t) = &m.temperature {
        fields.push(("temperature", VtkField::Scalars(t)));
    }
    run.write(&format!("{name}.vtk"), &vtk_structured_points(problem.flow().geometry(), name, &fields))?;
    run.write(&format!("{name}_residuals.csv"), &residual_csv(&sol.flow).render())?;
    if let Some(t) = &sol.thermal {
        run.write(&format!("{name}_thermal_residuals.csv"), &residual_csv(t).render())?;
    }
    run.status(name, status_json(sol.status()));
    run.info.resolved.insert(format!("{name}_steps"), json!(sol.steps()));
    run.info.resolved.insert(format!("{name}_objective"), json!(problem.objective(sol, alpha)));
    Ok(())
}

fn initial_alpha(file: &CaseFile, problem: &Problem) -> Vec<f64> {
    DesignState::new(problem.designable().to_vec(), file.design.phi0).alpha
}

pub fn forward(config: &Path, out: &Path) -> Result<u8> {
    let (file, problem) = load(config)?;
    let mut run = Run::new("forward", file.clone(), out, &problem);
    let alpha = initial_alpha(&file, &problem);
    let t = Instant::now();
    let sol = problem.solve_forward(&alpha);
    run.timing("forward_seconds", t);
    info!("forward {} after {} steps", sol.status().label(), sol.steps());
    forward_fields(&mut run, &problem, &sol, &alpha, "forward")?;
    let code = exit_code(sol.status());
    run.finish()?;
    Ok(code)
}

fn sensitivity_csv(problem: &Problem, jw: &[f64]) -> CsvTable {
    let g = problem.flow().geometry();
    let mut t = CsvTable::new(&["node", "x", "y", "z", "sensitivity"]);
    for (i, (&d, &v)) in problem.designable().iter().zip(jw).enumerate() {
        if d {
            let c = g.coords(i);
            t.push(vec![i.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string(), fmt_f64(v)]);
        }
    }
    t
}

fn adjoint_outputs(run: &mut Run, problem: &Problem, adj: &AdjointSolution, jw: &[f64]) -> Result<()> {
    let q = problem.flow().q();
    let moment: Vec<f64> = adj.psi.chunks_exact(q).map(|n| n.iter().sum()).collect();
    let mut fields = vec![("adjoint_density", VtkField::Scalars(&moment)), ("sensitivity", VtkField::Scalars(jw))];
    let gmoment: Vec<f64>;
    if let Some(gs) = &adj.gstar_s {
        gmoment = gs.chunks_exact(7).map(|n| n.iter().sum()).collect();
        fields.push(("thermal_adjoint", VtkField::Scalars(&gmoment)));
    }
    run.write("adjoint.vtk", &vtk_structured_points(problem.flow().geometry(), "adjoint", &fields))?;
    run.write("adjoint_residuals.csv", &residual_csv(&adj.flow).render())?;
    if let Some(t) = &adj.thermal {
        run.write("adjoint_thermal_residuals.csv", &residual_csv(t).render())?;
    }
    run.write("sensitivity.csv", &sensitivity_csv(problem, jw).render())?;
    if !adj.inconsistency.is_empty() {
        let mut t = CsvTable::new(&["step", "boundary_residual"]);
        for (s, r) in &adj.inconsistency {
            t.push(vec![s.to_string(), fmt_f64(*r)]);
        }
        run.write("adjoint_inconsistency.csv", &t.render())?;
    }
    run.status("adjoint", status_json(adj.status()));
    run.info.resolved.insert("adjoint_steps".into(), json!(adj.steps()));
    Ok(())
}

pub fn adjoint(config: &Path, out: &Path, method: Option<&str>) -> Result<u8> {
    let (mut file, _) = load(config)?;
    if let Some(m) = method {
        file.optimizer.method = parse_method(m)?;
    }
    let problem = file.build()?;
    let method = file.optimizer.method;
    let mut run = Run::new("adjoint", file.clone(), out, &problem);
    let alpha = initial_alpha(&file, &problem);
    let t = Instant::now();
    let sol = problem.solve_forward(&alpha);
    run.timing("forward_seconds", t);
    forward_fields(&mut run, &problem, &sol, &alpha, "forward")?;
    if !sol.converged() {
        warn!("forward {}; adjoint skipped", sol.status().label());
        let code = exit_code(sol.status());
        run.finish()?;
        return Ok(code);
    }
    let t = Instant::now();
    let adj = problem.solve_adjoint(&sol, &alpha, method)?;
    run.timing("adjoint_seconds", t);
    info!("{method} adjoint {} after {} steps", adj.status().label(), adj.steps());
    let jw = problem.sensitivity(&sol, &adj, &alpha, file.optimizer.kernel);
    adjoint_outputs(&mut run, &problem, &adj, &jw)?;
    let code = exit_code(adj.status());
    run.finish()?;
    Ok(code)
}

fn parse_nodes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().with_context(|| format!("bad node index `{t}`")))
        .collect()
}

pub fn verify(config: &Path, out: &Path, nodes: Option<&str>, fdm_step: Option<f64>) -> Result<u8> {
    let (mut file, _) = load(config)?;
    if let Some(s) = nodes {
        file.verify.nodes = Some(parse_nodes(s)?);
    }
    if let Some(h) = fdm_step {
        if !(h > 0.0) {
            bail!("--fdm-step must be positive");
        }
        file.verify.fdm_step = h;
    }
    let problem = file.build()?;
    let list = match &file.verify.nodes {
        Some(n) => n.clone(),
        None => problem.diagonal_nodes(file.verify.diagonal_nodes),
    };
    if list.is_empty() {
        bail!("empty node list");
    }
    if let Some(&bad) = list.iter().find(|&&n| n >= problem.flow().len()) {
        bail!("node {bad} is outside the grid ({} nodes)", problem.flow().len());
    }
    let mut run = Run::new("verify", file.clone(), out, &problem);
    let alpha = initial_alpha(&file, &problem);

    let t = Instant::now();
    let sol = problem.solve_forward(&alpha);
    run.timing("forward_seconds", t);
    forward_fields(&mut run, &problem, &sol, &alpha, "forward")?;
    if !sol.converged() {
        let code = exit_code(sol.status());
        run.finish()?;
        return Ok(code);
    }

    let kernel = file.optimizer.kernel;
    let mut columns: Vec<(AdjointMethod, Vec<f64>)> = Vec::new();
    for method in [AdjointMethod::Discrete, AdjointMethod::Continuous] {
        let t = Instant::now();
        match problem.solve_adjoint(&sol, &alpha, method) {
            Ok(adj) => {
                run.timing(&format!("{method}_seconds"), t);
                run.status(&format!("{method}_adjoint"), status_json(adj.status()));
                if method == AdjointMethod::Discrete && !adj.status().is_converged() {
                    let code = exit_code(adj.status());
                    run.finish()?;
                    return Ok(code);
                }
                let jw = if adj.status().is_converged() {
                    problem.sensitivity(&sol, &adj, &alpha, kernel)
                } else {
                    vec![f64::NAN; alpha.len()]
                };
                columns.push((method, jw));
            }
            Err(e) if method == AdjointMethod::Continuous => {
                warn!("continuous adjoint skipped: {e}");
                run.status("continuous_adjoint", json!({ "status": "unsupported" }));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let t = Instant::now();
    let opts = FdmOptions { h: file.verify.fdm_step, tol: file.verify.fdm_solve_tol, max_steps: file.case.max_steps };
    let fd = fdm_oracle(&problem, &alpha, &sol, &list, opts);
    run.timing("fdm_seconds", t);

    let g = problem.flow().geometry();
    let mut header = vec!["node", "x", "y", "z", "fdm", "j_plus", "j_minus", "flagged"];
    for (m, _) in &columns {
        header.push(if *m == AdjointMethod::Discrete { "discrete" } else { "continuous" });
    }
    let mut table = CsvTable::new(&header);
    for (k, e) in fd.iter().enumerate() {
        let c = g.coords(e.node);
        let mut row = vec![
            e.node.to_string(),
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
            fmt_f64(e.derivative),
            fmt_f64(e.j_plus),
            fmt_f64(e.j_minus),
            e.flagged.to_string(),
        ];
        for (_, jw) in &columns {
            row.push(fmt_f64(jw[list[k]]));
        }
        table.push(row);
    }
    run.write("verify.csv", &table.render())?;

    let flagged: Vec<usize> = fd.iter().filter(|e| e.flagged).map(|e| e.node).collect();
    if !flagged.is_empty() {
        warn!("finite-difference solves did not converge at nodes {flagged:?}");
    }
    let fdv: Vec<f64> = fd.iter().map(|e| e.derivative).collect();
    let mut summary = CsvTable::new(&["method", "relative_l2_error", "tolerance", "pass"]);
    let mut pass = flagged.is_empty();
    for (m, jw) in &columns {
        let v: Vec<f64> = list.iter().map(|&i| jw[i]).collect();
        let err = relative_l2(&v, &fdv);
        let ok = err < file.verify.tolerance;
        if *m == AdjointMethod::Discrete {
            pass &= ok;
        }
        println!("{m}: relative L2 error {err:.6e} (tolerance {:e}) {}", file.verify.tolerance, if ok { "PASS" } else { "FAIL" });
        summary.push(vec![m.to_string(), fmt_f64(err), fmt_f64(file.verify.tolerance), ok.to_string()]);
        run.info.resolved.insert(format!("{m}_error"), json!(err));
    }
    run.write("verify_summary.csv", &summary.render())?;
    run.status("verify", json!({ "pass": pass, "flagged": flagged }));
    run.finish()?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

pub fn stability(config: &Path, out: &Path) -> Result<u8> {
    let (file, problem) = load(config)?;
    let mut run = Run::new("stability", file.clone(), out, &problem);
    let s = &file.stability;
    if s.solvers.is_empty() || s.taus.is_empty() {
        bail!("stability needs at least one solver and one tau");
    }
    let jobs: Vec<_> = s.taus.iter().flat_map(|&tau| s.solvers.iter().map(move |&sv| (tau, sv))).collect();
    let cap = file.case.stability_iter_cap;
    let t = Instant::now();
    let results = jobs
        .par_iter()
        .map(|&(tau, solver)| stability_sweep(&file, tau, solver, cap, s))
        .collect::<Result<Vec<_>, _>>()?;
    run.timing("sweep_seconds", t);

    let mut table = CsvTable::new(&["tau", "solver", "u_max", "u_unstable"]);
    let mut probes = CsvTable::new(&["tau", "solver", "u_in", "stable"]);
    for r in &results {
        info!("tau {} {}: u_max {:.6}", r.tau, r.solver.label(), r.u_max);
        table.push(vec![
            fmt_f64(r.tau),
            r.solver.label().into(),
            fmt_f64(r.u_max),
            r.u_unstable.map_or_else(String::new, fmt_f64),
        ]);
        for (u, ok) in &r.probes {
            probes.push(vec![fmt_f64(r.tau), r.solver.label().into(), fmt_f64(*u), ok.to_string()]);
        }
    }
    run.write("stability.csv", &table.render())?;
    run.write("stability_probes.csv", &probes.render())?;
    run.info.resolved.insert("iter_cap".into(), json!(cap));
    run.finish()?;
    Ok(EXIT_OK)
}

fn design_vtk(problem: &Problem, d: &DesignState, title: &str) -> String {
    vtk_structured_points(
        problem.flow().geometry(),
        title,
        &[("alpha", VtkField::Scalars(&d.alpha)), ("phi", VtkField::Scalars(&d.phi))],
    )
}

pub fn optimize(config: &Path, out: &Path, method: Option<&str>) -> Result<u8> {
    let (mut file, _) = load(config)?;
    if let Some(m) = method {
        file.optimizer.method = parse_method(m)?;
    }
    let problem = file.build()?;
    let mut run = Run::new("optimize", file.clone(), out, &problem);
    let t = Instant::now();
    let mut history = Vec::new();
    let mut write_err: Option<anyhow::Error> = None;
    let result = optimizer::optimize(&problem, &file.optimizer, |rec, _| {
        info!(
            "iter {:4} J {:.6e} G {:+.1} changed {} ({} / {})",
            rec.iteration,
            rec.objective,
            rec.volume,
            rec.changed,
            rec.forward_status.label(),
            rec.adjoint_status.map_or("-", |s| s.label())
        );
        history.push(rec.clone());
        // Rewritten every iteration so an interrupted run keeps its history.
        if write_err.is_none() {
            if let Err(e) = run.write("history.csv", &history_csv(&history).render()) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    run.timing("optimize_seconds", t);
    run.write("history.csv", &history_csv(&result.history).render())?;
    run.write("design.vtk", &design_vtk(&problem, &result.design, "design"))?;
    for (it, d) in &result.snapshots {
        run.write(&format!("design_{it:05}.vtk"), &design_vtk(&problem, d, &format!("design {it}")))?;
    }
    let r = &mut run.info.resolved;
    r.insert("iterations".into(), json!(result.iterations()));
    r.insert("baseline_objective".into(), json!(result.baseline));
    r.insert("final_objective".into(), json!(result.final_objective()));
    r.insert("final_volume_constraint".into(), json!(result.history.last().map(|h| h.volume)));
    r.insert("fluid_path".into(), json!(fluid_path_exists(problem.flow(), &result.design.alpha)));
    run.status("optimize", serde_json::to_value(result.status).expect("status serializes"));
    let code = match result.status {
        OptimizationStatus::Converged => EXIT_OK,
        OptimizationStatus::ForwardDiverged { .. } | OptimizationStatus::AdjointDiverged { .. } => EXIT_DIVERGED,
        OptimizationStatus::MaxIterations => EXIT_MAX_STEPS,
    };
    run.finish()?;
    Ok(code)
}
