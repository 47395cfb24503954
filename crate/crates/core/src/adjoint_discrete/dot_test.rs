//! Transpose (dot-product) tests: `⟨A a, b⟩` against `⟨a, Aᵀ b⟩` for one
//! linearized step and the corresponding adjoint step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::AdjointError;
use crate::forward::tangent::{FlowTangent, ThermalTangent};
use crate::forward::thermal::ThermalModel;
use crate::forward::FlowModel;

use super::thermal::ThermalAdjoint;
use super::DiscreteAdjoint;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DotProductReport {
    pub grid: String,
    pub operator: String,
    /// `|⟨A a, b⟩ − ⟨a, Aᵀ b⟩| / (‖a‖ ‖b‖)`.
    pub discrepancy: f64,
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn grid_label(dims: [usize; 3], dim: usize) -> String {
    dims[..dim].iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn discrepancy(aa: &[f64], a: &[f64], b: &[f64], atb: &[f64]) -> f64 {
    (dot(aa, b) - dot(a, atb)).abs() / (norm(a) * norm(b))
}

/// How the forward linearization is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Linearization {
    /// Tangent-linear formulas.
    Analytic,
    /// Central difference of the nonlinear step with the given step size.
    FiniteDifference(f64),
}

/// Flow step: `A = B S C` about `frozen`, against the discrete adjoint step.
pub fn flow_dot_product(
    model: &FlowModel,
    frozen: &[f64],
    alpha: &[f64],
    lin: Linearization,
    seed: u64,
) -> Result<DotProductReport, AdjointError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = frozen.len();
    let a = random_vec(&mut rng, n);
    let b = random_vec(&mut rng, n);
    let aa = match lin {
        Linearization::Analytic => FlowTangent::new(model, frozen, alpha).apply(&a),
        Linearization::FiniteDifference(h) => {
            let step = |sign: f64| {
                let mut f: Vec<f64> = frozen.iter().zip(&a).map(|(f, d)| f + sign * h * d).collect();
                let mut buf = vec![0.0; n];
                model.step(&mut f, &mut buf, alpha);
                f
            };
            let (p, m) = (step(1.0), step(-1.0));
            p.iter().zip(&m).map(|(x, y)| (x - y) / (2.0 * h)).collect()
        }
    };
    let adj = DiscreteAdjoint::new(model, frozen, alpha, vec![0.0; n])?;
    let atb = adj.apply_transpose_step(&b);
    let op = match lin {
        Linearization::Analytic => "flow step (analytic)".to_string(),
        Linearization::FiniteDifference(h) => format!("flow step (finite difference, h={h:e})"),
    };
    let g = model.geometry();
    Ok(DotProductReport { grid: grid_label(g.dims(), g.dim()), operator: op, discrepancy: discrepancy(&aa, &a, &b, &atb) })
}

/// Thermal step with the flow frozen.
pub fn thermal_dot_product(
    model: &ThermalModel,
    au: &[[f64; 3]],
    alpha: &[f64],
    seed: u64,
) -> Result<DotProductReport, AdjointError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.len() * 7;
    let a = random_vec(&mut rng, n);
    let b = random_vec(&mut rng, n);
    let aa = ThermalTangent::new(model, au, alpha).apply(&a);
    let adj = ThermalAdjoint::new(model, au, alpha)?;
    let atb = adj.apply_transpose_step(&b);
    let g = model.geometry();
    Ok(DotProductReport {
        grid: grid_label(g.dims(), g.dim()),
        operator: "thermal step (analytic)".into(),
        discrepancy: discrepancy(&aa, &a, &b, &atb),
    })
}
