//! Worked examples for streaming, the discrete adjoint boundaries, the thermal
//! adjoint and the sensitivities.

use adjlb_core::adjoint_discrete::boundary::BoundaryTranspose;
use adjlb_core::adjoint_discrete::thermal::{flow_adjoint_coupling_term, ThermalAdjoint, ThermalAdjointState};
use adjlb_core::cases;
use adjlb_core::forward::thermal::thermal_equilibrium;
use adjlb_core::sensitivity::{lagrange_multiplier, sensitivity_continuous, sensitivity_discrete, ThermalSensitivityInput};
use adjlb_core::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * (1.0 + b.abs())
}

fn bend(n: usize, re: f64) -> Problem {
    cases::pipe_bend_2d(n, 0.8, re, 1.0).build().unwrap()
}

#[test]
fn stream_moves_a_single_population() {
    let p = bend(10, 0.2);
    let m = p.flow();
    let g = m.geometry();
    let (q, x) = (m.q(), g.index(4, 5, 0));
    let mut a = vec![0.0; m.len() * q];
    a[x * q + 1] = 1.0;
    let mut b = vec![0.0; a.len()];
    m.stream(&a, &mut b);
    let hits: Vec<usize> = b.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
    assert_eq!(hits, vec![g.index(5, 5, 0) * q + 1]);
    // Reverse streaming moves it back, to x − e_1.
    let mut c = vec![0.0; a.len()];
    m.stream_reverse(&b, &mut c);
    assert_eq!(c, a);
}

#[test]
fn stream_keeps_uniform_field() {
    let p = bend(10, 0.2);
    let m = p.flow();
    let a = vec![0.25; m.len() * m.q()];
    let mut b = vec![0.0; a.len()];
    m.stream(&a, &mut b);
    assert_eq!(a, b);
}

#[test]
fn discrete_inlet_transpose_of_ones() {
    let p = bend(20, 0.2);
    let m = p.flow();
    let q = m.q();
    let x = m.geometry().index(0, 15, 0);
    assert_eq!(m.roles().role(x), Role::Inlet);
    let fc = vec![1.0; m.len() * q];
    let mut out = vec![0.0; fc.len()];
    BoundaryTranspose::flow(m).unwrap().apply(&fc, &mut out);
    assert_eq!(&out[x * q..(x + 1) * q], &[1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
}

#[test]
fn discrete_outlet_transpose_of_ones() {
    let p = bend(20, 0.2);
    let m = p.flow();
    let q = m.q();
    let x = m.geometry().index(15, 0, 0);
    assert_eq!(m.roles().role(x), Role::Outlet);
    let fc = vec![1.0; m.len() * q];
    let mut out = vec![0.0; fc.len()];
    BoundaryTranspose::flow(m).unwrap().apply(&fc, &mut out);
    for v in &out[x * q..(x + 1) * q] {
        assert!(v.abs() < 1e-15, "{:?}", &out[x * q..(x + 1) * q]);
    }
}

#[test]
fn discrete_transpose_of_zero_is_zero() {
    let p = bend(20, 0.2);
    let m = p.flow();
    let fc = vec![0.0; m.len() * m.q()];
    let mut out = vec![1.0; fc.len()];
    BoundaryTranspose::flow(m).unwrap().apply(&fc, &mut out);
    assert!(out.iter().all(|v| *v == 0.0));
}

fn sink() -> Problem {
    let mut c = cases::heat_sink(12, 8, 8, 0.8, 10.0, 2);
    c.case.beta_max = 0.02;
    c.build().unwrap()
}

#[test]
fn thermal_adjoint_source_only_in_solid() {
    let p = sink();
    let th = p.thermal().unwrap();
    let g = th.geometry();
    let mut alpha = vec![1.0; th.len()];
    let solid = g.index(6, 4, 4);
    let fluid = g.index(6, 5, 5);
    alpha[solid] = 0.0;
    let au = vec![[0.0; 3]; th.len()];
    let adj = ThermalAdjoint::new(th, &au, &alpha).unwrap();
    let mut st = ThermalAdjointState::zeros(th.len() * 7);
    adj.step(&mut st);
    // The forcing is −∂J/∂g = −β'_max on solid nodes.
    assert!(st.gstar_c[solid * 7..solid * 7 + 7].iter().all(|v| close(*v, -0.02)));
    assert!(st.gstar_c[fluid * 7..fluid * 7 + 7].iter().all(|v| *v == 0.0));
}

#[test]
fn coupling_vanishes_without_temperature_or_in_solid() {
    let p = sink();
    let (m, th) = (p.flow(), p.thermal().unwrap());
    let gs: Vec<f64> = (0..th.len() * 7).map(|i| (i % 13) as f64 * 0.1 - 0.6).collect();
    let zero_t = vec![0.0; th.len()];
    let c = flow_adjoint_coupling_term(m, th, &gs, &zero_t, &vec![1.0; th.len()]);
    assert!(c.iter().all(|v| *v == 0.0));
    let hot = vec![0.7; th.len()];
    let c = flow_adjoint_coupling_term(m, th, &gs, &hot, &vec![0.0; th.len()]);
    assert!(c.iter().all(|v| *v == 0.0));
    let c = flow_adjoint_coupling_term(m, th, &gs, &hot, &vec![1.0; th.len()]);
    assert!(c.iter().any(|v| *v != 0.0));
}

#[test]
fn heat_sink_sensitivity_of_cold_solid_is_beta_max() {
    let p = sink();
    let (m, th) = (p.flow(), p.thermal().unwrap());
    let n = m.len();
    let alpha = vec![0.0; n];
    let g = vec![0.0; n * 7];
    let zeros7 = vec![0.0; n * 7];
    let u = vec![[0.0; 3]; n];
    let input = ThermalSensitivityInput { model: th, g: &g, gstar_s: &zeros7, u: &u };
    let jw = sensitivity_discrete(m, &vec![0.0; n * m.q()], &u, &alpha, KernelForm::Derivative, Some(input));
    let x = m.geometry().index(6, 4, 4);
    assert!(close(jw[x], 0.02), "{}", jw[x]);
}

#[test]
fn heat_sink_fluid_node_at_rest_has_no_flow_or_contrast_terms() {
    let p = sink();
    let (m, th) = (p.flow(), p.thermal().unwrap());
    let n = m.len();
    let alpha = vec![1.0; n];
    let mut g = Vec::with_capacity(n * 7);
    for k in 0..n {
        g.extend(thermal_equilibrium(0.1 + 0.001 * k as f64, [0.0; 3], th.stencil()));
    }
    let gs: Vec<f64> = (0..n * 7).map(|i| (i % 5) as f64 - 2.0).collect();
    let fs: Vec<f64> = (0..n * m.q()).map(|i| (i % 7) as f64 - 3.0).collect();
    let u = vec![[0.0; 3]; n];
    let input = ThermalSensitivityInput { model: th, g: &g, gstar_s: &gs, u: &u };
    let jw = sensitivity_discrete(m, &fs, &u, &alpha, KernelForm::Derivative, Some(input));
    // Only the explicit source term survives.
    let x = m.geometry().index(6, 4, 4);
    let t: f64 = g[x * 7..x * 7 + 7].iter().sum();
    let ws: f64 = th.stencil().weights().iter().zip(&gs[x * 7..x * 7 + 7]).map(|(w, v)| w * v).sum();
    let source = 0.02 * (1.0 - t) * (1.0 + ws);
    assert!(close(jw[x], source), "{} vs {source}", jw[x]);
}

#[test]
fn shared_kernel_between_methods() {
    let p = bend(16, 2.0);
    let m = p.flow();
    let alpha: Vec<f64> = (0..m.len()).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
    let sol = p.solve_forward(&alpha);
    let u = m.macro_fields(&sol.f).u;
    let psi: Vec<f64> = (0..m.len() * m.q()).map(|i| ((i * 37) % 11) as f64 * 0.01).collect();
    for form in [KernelForm::Derivative, KernelForm::Secant] {
        let a = sensitivity_continuous(m, &psi, &u, &alpha, form);
        let b = sensitivity_discrete(m, &psi, &u, &alpha, form, None);
        assert_eq!(a, b);
    }
}

#[test]
fn zero_adjoint_gives_zero_sensitivity() {
    let p = bend(16, 2.0);
    let m = p.flow();
    let alpha = vec![1.0; m.len()];
    let sol = p.solve_forward(&alpha);
    let u = m.macro_fields(&sol.f).u;
    let jw = sensitivity_discrete(m, &vec![0.0; m.len() * m.q()], &u, &alpha, KernelForm::Derivative, None);
    assert!(jw.iter().all(|v| *v == 0.0));
}

#[test]
fn empty_design_damps_multiplier() {
    let n = 400;
    let jw = vec![1.0; n];
    let lap = vec![0.0; n];
    let d = vec![true; n];
    let l = lagrange_multiplier(&jw, &lap, 0.0, -0.25 * n as f64, &d);
    assert!(l < 1e-40 && l > 0.0);
}

#[test]
fn trivial_solves_converge() {
    let p = cases::pipe_bend_2d(20, 0.8, 0.0, 1.0).build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward(&alpha);
    assert!(sol.converged());
    assert!(sol.steps() <= 100);
    for method in [AdjointMethod::Discrete, AdjointMethod::Continuous] {
        let a = p.solve_adjoint(&sol, &alpha, method).unwrap();
        assert!(a.status().is_converged(), "{method}");
    }
}

#[test]
fn bend_at_low_reynolds_number_converges_for_both_adjoints() {
    let p = bend(40, 0.2);
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward(&alpha);
    assert!(sol.converged());
    for method in [AdjointMethod::Discrete, AdjointMethod::Continuous] {
        assert!(p.solve_adjoint(&sol, &alpha, method).unwrap().status().is_converged());
    }
}

#[test]
fn unstable_forward_reports_divergence() {
    let p = cases::pipe_bend_2d(20, 0.51, 0.0, 1.0).with_inlet_velocity(0.4).build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    assert!(p.solve_forward(&alpha).status().is_diverged());
}

#[test]
fn period_two_cycle_is_not_reported_as_steady() {
    // At this inflow the outlet settles into a two-step oscillation; a steady
    // check that only compared states a whole window apart would accept it.
    let p = cases::pipe_bend_2d(40, 0.6, 0.0, 1.0).with_inlet_velocity(0.21).build().unwrap();
    let alpha = vec![1.0; p.flow().len()];
    let sol = p.solve_forward_with(&alpha, None, 1e-10, 20_000);
    assert!(!sol.converged());
    assert!(!sol.status().is_diverged());
}

#[test]
fn shipped_configs_load_and_build() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let file = adjlb_core::io::load_case(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        file.build().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
