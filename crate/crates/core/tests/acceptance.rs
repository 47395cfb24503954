//! Acceptance criteria 1 to 10. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout (bypassing the harness capture) before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use adjlb_core::adjoint_discrete::boundary::BoundaryTranspose;
use adjlb_core::adjoint_discrete::dot_test::{flow_dot_product, thermal_dot_product, Linearization};
use adjlb_core::cases::{self, CaseFile};
use adjlb_core::domain::Inflow;
use adjlb_core::forward::thermal::ThermalModel;
use adjlb_core::optimizer::{self, cross_check, fluid_path_exists, stability_probe, stability_sweep, StabilityResult};
use adjlb_core::sensitivity::{fdm_oracle, relative_l2, FdmOptions};
use adjlb_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_01_stencil_exactness() {
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for kind in [StencilKind::D2Q9, StencilKind::D3Q19, StencilKind::D3Q7] {
        let s = make_stencil(kind);
        if let Err(e) = s.check_exact() {
            errors.push(format!("{kind:?}: {e}"));
        }
        worst = worst.max(s.float_residual());
    }
    let pass = errors.is_empty() && worst <= 1e-15;
    report(1, pass, &format!("exact checks {:?}, float residual {worst:.2e}", errors));
    assert!(pass);
}

#[test]
fn criterion_02_poiseuille_profile() {
    let (nx, ny, tau) = (100usize, 40usize, 0.8);
    let mut c = cases::channel_2d(nx, ny, tau, 0.0);
    let p0 = c.case.rho0 / 3.0;
    c.case.inflow = Inflow::Pressure { p1: p0 + 2.5e-3, p0 };
    c.case.forward_tol = 1e-11;
    let p = c.build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let t = Instant::now();
    let sol = p.solve_forward(&alpha);
    let m = p.macro_fields(&sol);
    let g = p.flow().geometry();
    let x = nx / 2;
    // Local pressure gradient at mid-channel, averaged across the section.
    let mut grad = 0.0;
    for y in 1..ny - 1 {
        grad += (m.rho[g.index(x - 1, y, 0)] - m.rho[g.index(x + 1, y, 0)]) / 6.0;
    }
    grad /= (ny - 2) as f64;
    let nu = (tau - 0.5) / 3.0;
    // Walls sit halfway between the wall nodes and the first fluid rows.
    let (lo, hi) = (0.5, ny as f64 - 1.5);
    let umax = grad * (hi - lo) * (hi - lo) / (8.0 * nu * c.case.rho0);
    let mut err: f64 = 0.0;
    for y in 1..ny - 1 {
        let yy = y as f64;
        let exact = grad / (2.0 * nu * c.case.rho0) * (yy - lo) * (hi - yy);
        err = err.max((m.u[g.index(x, y, 0)][0] - exact).abs() / umax);
    }
    let pass = sol.converged() && err < 1e-2;
    report(2, pass, &format!("L-inf relative error {err:.3e}, u_max {umax:.4}, {} steps in {:.1?}", sol.steps(), t.elapsed()));
    assert!(pass);
}

fn random_state(model: &FlowModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = model.stencil();
    let mut f = Vec::with_capacity(model.len() * s.q());
    for _ in 0..model.len() {
        let rho = 1.0 + rng.gen_range(-0.05..0.05);
        let u = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), if s.dim() == 3 { rng.gen_range(-0.1..0.1) } else { 0.0 }];
        for w in forward::equilibrium(rho, u, 1.0, 1.0, s) {
            f.push(w * (1.0 + rng.gen_range(-0.02..0.02)));
        }
    }
    f
}

#[test]
fn criterion_03_transpose_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut notes = Vec::new();
    let mut pass = true;

    // (a) streaming and its reverse compose to the identity, bit for bit.
    let bend = cases::pipe_bend_2d(12, 0.8, 1.0, 1.0).build().unwrap();
    let sink = cases::heat_sink(12, 8, 8, 0.8, 10.0, 2).build().unwrap();
    for p in [&bend, &sink] {
        let m = p.flow();
        let a: Vec<f64> = (0..m.len() * m.q()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut b, mut c) = (vec![0.0; a.len()], vec![0.0; a.len()]);
        m.stream(&a, &mut b);
        m.stream_reverse(&b, &mut c);
        let exact = a == c;
        pass &= exact;
        notes.push(format!("stream identity {exact}"));
    }

    // (b) closed-form boundary transposes against probed Jacobians.
    let mut pressure = cases::channel_2d(12, 8, 0.8, 0.0);
    pressure.case.inflow = Inflow::Pressure { p1: 0.34, p0: 1.0 / 3.0 };
    let pressure = pressure.build().unwrap();
    let mut worst: f64 = 0.0;
    let mut paths = 0;
    for bt in [
        BoundaryTranspose::flow(bend.flow()),
        BoundaryTranspose::flow(sink.flow()),
        BoundaryTranspose::flow(pressure.flow()),
        BoundaryTranspose::thermal(sink.thermal().unwrap()),
    ] {
        match bt.and_then(|b| b.verify(1000, 7)) {
            Ok(r) => {
                paths += r.len();
                worst = r.iter().fold(worst, |w, x| w.max(x.2));
            }
            Err(e) => {
                pass = false;
                notes.push(format!("boundary mismatch: {e}"));
            }
        }
    }
    pass &= worst <= 1e-13;
    notes.push(format!("{paths} boundary paths, worst {worst:.1e}"));

    // (c) global dot-product test on 12x12.
    let m = bend.flow();
    let f = random_state(m, &mut rng);
    let alpha: Vec<f64> = (0..m.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let d = flow_dot_product(m, &f, &alpha, Linearization::Analytic, 11).unwrap().discrepancy;
    pass &= d <= 1e-12;
    notes.push(format!("flow dot {d:.1e}"));

    let th: &ThermalModel = sink.thermal().unwrap();
    let au: Vec<[f64; 3]> = (0..th.len()).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).collect();
    let ta: Vec<f64> = (0..th.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let d = thermal_dot_product(th, &au, &ta, 12).unwrap().discrepancy;
    pass &= d <= 1e-12;
    notes.push(format!("thermal dot {d:.1e}"));

    report(3, pass, &notes.join(", "));
    assert!(pass);
}

/// Sensitivity comparison on the 2D bend at one Reynolds number.
struct BendErrors {
    re: f64,
    discrete: f64,
    continuous: f64,
    flagged: usize,
}

const BEND_N: usize = 80;
const BEND_TAU: f64 = 1.0;

fn bend_errors(re: f64) -> BendErrors {
    let mut c = cases::pipe_bend_2d(BEND_N, BEND_TAU, re, 1.0);
    c.case.forward_tol = 1e-12;
    c.case.adjoint_tol = 1e-12;
    let p = c.build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward(&alpha);
    assert!(sol.converged(), "forward at Re {re}: {:?}", sol.status());
    let ad = p.solve_adjoint(&sol, &alpha, AdjointMethod::Discrete).unwrap();
    let ac = p.solve_adjoint(&sol, &alpha, AdjointMethod::Continuous).unwrap();
    assert!(ad.status().is_converged() && ac.status().is_converged());
    let jd = p.sensitivity(&sol, &ad, &alpha, KernelForm::Derivative);
    let jc = p.sensitivity(&sol, &ac, &alpha, KernelForm::Derivative);
    let nodes = p.diagonal_nodes(20);
    assert!(nodes.len() >= 20);
    let fd = fdm_oracle(&p, &alpha, &sol, &nodes, FdmOptions { h: 1e-3, tol: 1e-12, max_steps: 400_000 });
    let fdv: Vec<f64> = fd.iter().map(|e| e.derivative).collect();
    let dv: Vec<f64> = nodes.iter().map(|&i| jd[i]).collect();
    let cv: Vec<f64> = nodes.iter().map(|&i| jc[i]).collect();
    BendErrors {
        re,
        discrete: relative_l2(&dv, &fdv),
        continuous: relative_l2(&cv, &fdv),
        flagged: fd.iter().filter(|e| e.flagged).count(),
    }
}

fn bend_runs() -> &'static [BendErrors; 2] {
    static RUNS: OnceLock<[BendErrors; 2]> = OnceLock::new();
    RUNS.get_or_init(|| [bend_errors(0.2), bend_errors(2.0)])
}

#[test]
fn criterion_04_discrete_sensitivity_matches_fdm() {
    let t = Instant::now();
    let runs = bend_runs();
    let pass = runs.iter().all(|r| r.discrete < 1e-3 && r.flagged == 0);
    let detail: Vec<String> =
        runs.iter().map(|r| format!("Re {}: error {:.3e}, {} flagged", r.re, r.discrete, r.flagged)).collect();
    report(4, pass, &format!("{}, {:.1?}", detail.join("; "), t.elapsed()));
    assert!(pass);
}

#[test]
fn criterion_05_inconsistency_ordering() {
    let [lo, hi] = bend_runs();
    let a = hi.continuous > hi.discrete;
    let b = hi.continuous > lo.continuous;
    report(
        5,
        a && b,
        &format!(
            "Re 2 continuous {:.10e} vs discrete {:.3e}: {a}; continuous Re 2 vs Re 0.2 {:.10e}: {b}",
            hi.continuous, hi.discrete, lo.continuous
        ),
    );
    assert!(a, "continuous error must exceed discrete error at Re 2");
    assert!(b, "continuous error must grow from Re 0.2 to Re 2");
}

#[test]
fn criterion_06_stability_parity_and_gap() {
    let t = Instant::now();
    let file = cases::pipe_bend_2d(80, 0.6, 0.0, 1.0);
    let settings = StabilitySettings::default();
    let sweep = |s: StabilitySolver| -> StabilityResult { stability_sweep(&file, 0.6, s, 20_000, &settings).unwrap() };
    let (fwd, disc, cont) = std::thread::scope(|sc| {
        let a = sc.spawn(|| sweep(StabilitySolver::Forward));
        let b = sc.spawn(|| sweep(StabilitySolver::DiscreteAdjoint));
        let c = sc.spawn(|| sweep(StabilitySolver::ContinuousAdjoint));
        (a.join().unwrap(), b.join().unwrap(), c.join().unwrap())
    });
    let parity = (disc.u_max - fwd.u_max).abs() <= settings.bracket;
    let ratio = disc.u_max / cont.u_max;
    let gap = ratio >= 5.0;
    report(
        6,
        parity && gap,
        &format!(
            "u_max forward {:.4}, discrete {:.4}, continuous {:.4}; parity {parity}, ratio {ratio:.2}, {:.1?}",
            fwd.u_max,
            disc.u_max,
            cont.u_max,
            t.elapsed()
        ),
    );
    assert!(gap, "discrete/continuous ratio {ratio}");
    assert!(parity, "forward {} vs discrete {}", fwd.u_max, disc.u_max);
}

#[test]
fn criterion_06b_discrete_adjoint_stable_where_forward_converges() {
    let file = cases::pipe_bend_2d(40, 0.6, 0.0, 1.0);
    let mut ok = true;
    let mut notes = Vec::new();
    for u in [0.05, 0.1, 0.15, 0.19] {
        let p = file.with_inlet_velocity(u).build().unwrap();
        let alpha = vec![1.0; p.flow().len()];
        let sol = p.solve_forward_with(&alpha, None, 1e-8, 20_000);
        if !sol.converged() {
            notes.push(format!("u {u}: forward {}", sol.status().label()));
            continue;
        }
        let a = p.solve_adjoint_with(&sol, &alpha, AdjointMethod::Discrete, None, SteadyOptions::new(1e-8, 20_000), DEFAULT_BLOWUP).unwrap();
        ok &= !a.status().is_diverged();
        notes.push(format!("u {u}: adjoint {}", a.status().label()));
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion 6 (supplement): {} ({})", if ok { "PASS" } else { "FAIL" }, notes.join(", "));
    drop(out);
    assert!(ok);
}

#[test]
fn criterion_07_divergence_threshold() {
    let t = Instant::now();
    let (n, tau) = (80usize, 0.6);
    let width = {
        let b = cases::bend_band(n);
        (b[1] - b[0]) as f64
    };
    let file = cases::pipe_bend_2d(n, tau, 0.0, 1.0);
    let mut diverged_at = None;
    for re in [15.0, 20.0, 25.0, 30.0, 35.0, 40.0] {
        let u = cases::inlet_velocity_for(re, tau, width);
        if !stability_probe(&file, tau, u, StabilitySolver::ContinuousAdjoint, 20_000).unwrap() {
            diverged_at = Some(re);
            break;
        }
    }
    let mut c = cases::pipe_bend_2d(n, tau, 50.0, 1.0);
    c.case.forward_tol = 1e-8;
    c.case.adjoint_tol = 1e-8;
    let p = c.build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward(&alpha);
    let disc = if sol.converged() { Some(p.solve_adjoint(&sol, &alpha, AdjointMethod::Discrete).unwrap().status()) } else { None };
    let pass = diverged_at.is_some() && disc.is_some_and(|s| s.is_converged());
    report(
        7,
        pass,
        &format!(
            "continuous diverges at Re {:?}; Re 50 forward {}, discrete {}, {:.1?}",
            diverged_at,
            sol.status().label(),
            disc.map_or("not run", |s| s.label()),
            t.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_benchmark_topology() {
    let t = Instant::now();
    let c = cases::pipe_bend_2d(BEND_N, 0.8, 0.2, 0.08 * std::f64::consts::PI);
    let p = c.build().unwrap();
    let run = optimizer::optimize(&p, &c.optimizer, |_, _| {}).unwrap();
    let last = run.history.last().unwrap();
    let quota = c.case.vmax * run.design.designable_count() as f64;
    let feasible = last.volume <= 0.01 * quota;
    let path = fluid_path_exists(p.flow(), &run.design.alpha);
    let drop = 1.0 - last.objective / run.baseline;
    let pass = run.status == OptimizationStatus::Converged && feasible && path && drop >= 0.3;
    report(
        8,
        pass,
        &format!(
            "{} after {} iterations, G {:.3e} (quota {:.0}), path {path}, J {:.6e} vs baseline {:.6e} ({:+.1}%), {:.1?}",
            run.status.label(),
            run.iterations(),
            last.volume,
            quota,
            last.objective,
            run.baseline,
            -100.0 * drop,
            t.elapsed()
        ),
    );
    assert!(run.status == OptimizationStatus::Converged && feasible && path, "{:?}", run.status);
    assert!(drop >= 0.3, "objective only {:.1}% below baseline", 100.0 * drop);
}

#[test]
fn criterion_09_thermal_sensitivity_matches_fdm() {
    let t = Instant::now();
    let mut c = cases::heat_sink(32, 16, 16, 0.8, 10.0, 2);
    c.case.beta_max = 1e-3;
    c.case.forward_tol = 1e-12;
    c.case.adjoint_tol = 1e-12;
    let p = c.build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward(&alpha);
    assert!(sol.converged(), "{:?}", sol.status());
    let adj = p.solve_adjoint(&sol, &alpha, AdjointMethod::Discrete).unwrap();
    assert!(adj.status().is_converged(), "{:?}", adj.status());
    let jw = p.sensitivity(&sol, &adj, &alpha, KernelForm::Derivative);
    let nodes = p.diagonal_nodes(10);
    let fd = fdm_oracle(&p, &alpha, &sol, &nodes, FdmOptions { h: 1e-3, tol: 1e-12, max_steps: 400_000 });
    let fdv: Vec<f64> = fd.iter().map(|e| e.derivative).collect();
    let av: Vec<f64> = nodes.iter().map(|&i| jw[i]).collect();
    let err = relative_l2(&av, &fdv);
    let flagged = fd.iter().filter(|e| e.flagged).count();
    let pass = nodes.len() >= 10 && flagged == 0 && err < 1e-2;
    report(9, pass, &format!("{} nodes, error {err:.3e}, {flagged} flagged, {:.1?}", nodes.len(), t.elapsed()));
    assert!(pass);
}

#[test]
#[ignore = "long-running: two heat-sink optimizations"]
fn criterion_10_heat_sink_cross_check() {
    let t = Instant::now();
    let files: Vec<CaseFile> = [10.0, 100.0]
        .into_iter()
        .map(|re| {
            let mut c = cases::heat_sink(32, 16, 16, 0.8, re, 2);
            c.case.vmax = 0.5;
            c.optimizer.max_iterations = 60;
            c
        })
        .collect();
    let designs: Vec<Vec<f64>> = files
        .iter()
        .map(|c| {
            let p = c.build().unwrap();
            optimizer::optimize(&p, &c.optimizer, |_, _| {}).unwrap().design.alpha
        })
        .collect();
    let scores = cross_check(&files, &designs).unwrap();
    // The objective is minimized: on each case its own design scores lowest.
    let pass = (0..scores.len()).all(|i| (0..scores.len()).all(|j| scores[i][i] <= scores[i][j]));
    report(10, pass, &format!("scores {scores:?}, {:.1?}", t.elapsed()));
    assert!(pass);
}

#[test]
fn bend_case_is_well_formed() {
    let c = cases::pipe_bend_2d(BEND_N, BEND_TAU, 2.0, 1.0);
    assert!((domain::reynolds_number(&c.case, c.case.char_length.unwrap()) - 2.0).abs() < 1e-12);
    let _: &Stencil = c.build().unwrap().flow().stencil();
}
