//! An assembled case: models, design mask and objective, with the forward,
//! adjoint and sensitivity solves wired together.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjoint_continuous::{ContinuousAdjoint, ContinuousAdjointField};
use crate::adjoint_discrete::thermal::{flow_adjoint_coupling_term, ThermalAdjoint, ThermalAdjointState};
use crate::adjoint_discrete::{inlet_pressure_forcing, DiscreteAdjoint, DiscreteAdjointState, DEFAULT_BLOWUP};
use crate::cases::CaseFile;
use crate::domain::{classify_nodes, GridGeometry, Role};
use crate::error::{AdjointError, ConfigError, Result};
use crate::forward::thermal::{ThermalModel, ThermalParams};
use crate::forward::{FlowModel, MacroFields, SolveReport, SolveStatus, SteadyOptions};
use crate::lattice::make_stencil;
use crate::sensitivity::{sensitivity_continuous, sensitivity_discrete, KernelForm, ThermalSensitivityInput};

/// What the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Mean inlet pressure `(1/(3 N_in)) Σ ρ`.
    #[default]
    InletPressure,
    /// Negative heat generation `−Σ β'(α)(1 − T)`.
    HeatGeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjointMethod {
    Continuous,
    #[default]
    Discrete,
}

impl FromStr for AdjointMethod {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, ConfigError> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "discrete" => Ok(Self::Discrete),
            other => Err(ConfigError::Invalid(format!("unknown adjoint method `{other}` (expected continuous or discrete)"))),
        }
    }
}

impl fmt::Display for AdjointMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Continuous => "continuous",
            Self::Discrete => "discrete",
        })
    }
}

/// Converged (or abandoned) forward state.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub f: Vec<f64>,
    pub g: Option<Vec<f64>>,
    pub flow: SolveReport,
    pub thermal: Option<SolveReport>,
}

impl ForwardSolution {
    /// Worst status over the flow and thermal solves.
    pub fn status(&self) -> SolveStatus {
        let mut s = self.flow.status;
        if let Some(t) = &self.thermal {
            s = worst(s, t.status);
        }
        s
    }

    pub fn converged(&self) -> bool {
        self.status().is_converged()
    }

    pub fn steps(&self) -> usize {
        self.flow.steps + self.thermal.as_ref().map_or(0, |t| t.steps)
    }
}

fn worst(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s: SolveStatus| match s {
        SolveStatus::Converged => 0,
        SolveStatus::MaxSteps => 1,
        SolveStatus::Diverged { .. } => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Adjoint fields needed for the sensitivity and for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub method: AdjointMethod,
    pub flow: SolveReport,
    pub thermal: Option<SolveReport>,
    /// Field read by the sensitivity: `f_S*` (discrete) or `f*` (continuous).
    pub psi: Vec<f64>,
    /// Iterated variable, used to warm-start the next solve.
    pub iterate: Vec<f64>,
    pub gstar_s: Option<Vec<f64>>,
    pub thermal_iterate: Option<Vec<f64>>,
    /// Open-boundary residual log of the continuous method.
    pub inconsistency: Vec<(usize, f64)>,
}

impl AdjointSolution {
    pub fn status(&self) -> SolveStatus {
        let mut s = self.flow.status;
        if let Some(t) = &self.thermal {
            s = worst(s, t.status);
        }
        s
    }

    pub fn steps(&self) -> usize {
        self.flow.steps + self.thermal.as_ref().map_or(0, |t| t.steps)
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    file: CaseFile,
    flow: FlowModel,
    thermal: Option<ThermalModel>,
    designable: Vec<bool>,
}

impl Problem {
    pub fn new(file: CaseFile) -> Result<Self> {
        file.case.validate()?;
        let stencil = make_stencil(file.geometry.stencil);
        let geometry = GridGeometry::new(&file.geometry.dims)?;
        let roles = classify_nodes(&geometry, &file.geometry.boundaries)?;
        let thermal = match file.objective {
            ObjectiveKind::InletPressure => None,
            ObjectiveKind::HeatGeneration => {
                if geometry.dim() != 3 {
                    return Err(ConfigError::Invalid("heat-generation cases need a 3D grid".into()).into());
                }
                let params = ThermalParams {
                    tau_fluid: file.case.tau_g_fluid(),
                    tau_solid: file.case.tau_g_solid(),
                    beta_max: file.case.beta_max,
                    inlet_temperature: 0.0,
                };
                Some(ThermalModel::new(geometry.clone(), &roles, params)?)
            }
        };
        let designable = design_mask(&geometry, roles.roles(), &file)?;
        let flow = FlowModel::new(stencil, geometry, roles, &file.case)?;
        Ok(Self { file, flow, thermal, designable })
    }

    pub fn case_file(&self) -> &CaseFile {
        &self.file
    }

    pub fn flow(&self) -> &FlowModel {
        &self.flow
    }

    pub fn thermal(&self) -> Option<&ThermalModel> {
        self.thermal.as_ref()
    }

    pub fn designable(&self) -> &[bool] {
        &self.designable
    }

    pub fn objective_kind(&self) -> ObjectiveKind {
        self.file.objective
    }

    pub fn forward_options(&self) -> SteadyOptions {
        SteadyOptions::new(self.file.case.forward_tol, self.file.case.max_steps)
    }

    pub fn adjoint_options(&self) -> SteadyOptions {
        SteadyOptions::new(self.file.case.adjoint_tol, self.file.case.max_steps)
    }

    /// Cold-start forward solve with the configured tolerance.
    pub fn solve_forward(&self, alpha: &[f64]) -> ForwardSolution {
        let o = self.forward_options();
        self.solve_forward_with(alpha, None, o.tol, o.max_steps)
    }

    pub fn solve_forward_with(
        &self,
        alpha: &[f64],
        warm: Option<&ForwardSolution>,
        tol: f64,
        max_steps: usize,
    ) -> ForwardSolution {
        let opts = SteadyOptions::new(tol, max_steps);
        let mut f = warm.map_or_else(|| self.flow.initial_state(), |w| w.f.clone());
        let flow = self.flow.run_to_steady(&mut f, alpha, opts);
        let (g, thermal) = match &self.thermal {
            Some(th) if !flow.status.is_diverged() => {
                let au = ThermalModel::advecting_velocity(&self.flow.macro_fields(&f).u, alpha);
                let mut g = warm.and_then(|w| w.g.clone()).unwrap_or_else(|| th.initial_state());
                let rep = th.run_to_steady(&mut g, &au, alpha, opts);
                (Some(g), Some(rep))
            }
            _ => (None, None),
        };
        ForwardSolution { f, g, flow, thermal }
    }

    pub fn macro_fields(&self, sol: &ForwardSolution) -> MacroFields {
        let mut m = self.flow.macro_fields(&sol.f);
        if let (Some(th), Some(g)) = (&self.thermal, &sol.g) {
            m.temperature = Some(th.temperature(g));
        }
        m
    }

    pub fn objective(&self, sol: &ForwardSolution, alpha: &[f64]) -> f64 {
        match (self.file.objective, &self.thermal, &sol.g) {
            (ObjectiveKind::InletPressure, ..) => self.flow.inlet_pressure(&sol.f),
            (ObjectiveKind::HeatGeneration, Some(th), Some(g)) => th.heat_objective(g, alpha),
            _ => f64::NAN,
        }
    }

    pub fn solve_adjoint(
        &self,
        sol: &ForwardSolution,
        alpha: &[f64],
        method: AdjointMethod,
    ) -> std::result::Result<AdjointSolution, AdjointError> {
        self.solve_adjoint_with(sol, alpha, method, None, self.adjoint_options(), DEFAULT_BLOWUP)
    }

    pub fn solve_adjoint_with(
        &self,
        sol: &ForwardSolution,
        alpha: &[f64],
        method: AdjointMethod,
        warm: Option<&AdjointSolution>,
        opts: SteadyOptions,
        blowup: f64,
    ) -> std::result::Result<AdjointSolution, AdjointError> {
        let warm = warm.filter(|w| w.method == method);
        let n = sol.f.len();
        match method {
            AdjointMethod::Continuous => {
                if self.thermal.is_some() {
                    return Err(AdjointError::Unsupported("heat-generation cases need the discrete adjoint".into()));
                }
                let adj = ContinuousAdjoint::new(&self.flow, &sol.f, alpha)?;
                let mut field = ContinuousAdjointField::zeros(n);
                if let Some(w) = warm {
                    field.fstar.copy_from_slice(&w.iterate);
                }
                let flow = adj.run(&mut field, opts, blowup);
                Ok(AdjointSolution {
                    method,
                    flow,
                    thermal: None,
                    psi: field.fstar.clone(),
                    iterate: field.fstar,
                    gstar_s: None,
                    thermal_iterate: None,
                    inconsistency: field.inconsistency,
                })
            }
            AdjointMethod::Discrete => {
                let mut thermal_out = None;
                let forcing = match (&self.thermal, &sol.g) {
                    (Some(th), Some(g)) => {
                        let u = self.flow.macro_fields(&sol.f).u;
                        let au = ThermalModel::advecting_velocity(&u, alpha);
                        let tadj = ThermalAdjoint::new(th, &au, alpha)?;
                        let mut st = ThermalAdjointState::zeros(g.len());
                        if let Some(ti) = warm.and_then(|w| w.thermal_iterate.as_ref()) {
                            st.gstar_c.copy_from_slice(ti);
                        }
                        let rep = tadj.run(&mut st, opts, blowup);
                        let t = th.temperature(g);
                        let forcing = flow_adjoint_coupling_term(&self.flow, th, &st.gstar_s, &t, alpha);
                        thermal_out = Some((rep, st));
                        forcing
                    }
                    _ => inlet_pressure_forcing(&self.flow),
                };
                let adj = DiscreteAdjoint::new(&self.flow, &sol.f, alpha, forcing)?;
                let mut st = DiscreteAdjointState::zeros(n);
                if let Some(w) = warm {
                    st.fstar_c.copy_from_slice(&w.iterate);
                }
                let flow = if thermal_out.as_ref().is_some_and(|(r, _)| r.status.is_diverged()) {
                    SolveReport { status: SolveStatus::Diverged { step: 0 }, steps: 0, history: Vec::new() }
                } else {
                    adj.run(&mut st, opts, blowup)
                };
                let (thermal, gstar_s, thermal_iterate) = match thermal_out {
                    Some((rep, ts)) => (Some(rep), Some(ts.gstar_s), Some(ts.gstar_c)),
                    None => (None, None, None),
                };
                Ok(AdjointSolution {
                    method,
                    flow,
                    thermal,
                    psi: st.fstar_s,
                    iterate: st.fstar_c,
                    gstar_s,
                    thermal_iterate,
                    inconsistency: Vec::new(),
                })
            }
        }
    }

    /// Physics part `J'_W` of the sensitivity.
    pub fn sensitivity(&self, sol: &ForwardSolution, adj: &AdjointSolution, alpha: &[f64], form: KernelForm) -> Vec<f64> {
        let u = self.flow.macro_fields(&sol.f).u;
        match adj.method {
            AdjointMethod::Continuous => sensitivity_continuous(&self.flow, &adj.psi, &u, alpha, form),
            AdjointMethod::Discrete => {
                let thermal = match (&self.thermal, &sol.g, &adj.gstar_s) {
                    (Some(model), Some(g), Some(gs)) => Some(ThermalSensitivityInput { model, g, gstar_s: gs, u: &u }),
                    _ => None,
                };
                sensitivity_discrete(&self.flow, &adj.psi, &u, alpha, form, thermal)
            }
        }
    }

    /// Up to `count` designable nodes evenly spaced along the main diagonal of
    /// the grid.
    pub fn diagonal_nodes(&self, count: usize) -> Vec<usize> {
        let g = self.flow.geometry();
        let d = g.dims();
        let dim = g.dim();
        let steps = d[..dim].iter().copied().max().unwrap_or(1);
        let mut line = Vec::new();
        for k in 0..steps {
            let t = k as f64 / (steps - 1).max(1) as f64;
            let mut c = [0usize; 3];
            for a in 0..dim {
                c[a] = (t * (d[a] - 1) as f64).round() as usize;
            }
            let idx = g.index(c[0], c[1], c[2]);
            if self.designable[idx] && line.last() != Some(&idx) {
                line.push(idx);
            }
        }
        if line.len() <= count || count == 0 {
            return line;
        }
        (0..count).map(|j| line[j * (line.len() - 1) / (count - 1).max(1)]).collect()
    }
}

fn design_mask(geometry: &GridGeometry, roles: &[Role], file: &CaseFile) -> Result<Vec<bool>> {
    let dim = geometry.dim();
    if let Some(r) = &file.design.region {
        if r.len() != dim {
            return Err(ConfigError::Invalid(format!("design region needs {dim} ranges, got {}", r.len())).into());
        }
    }
    Ok((0..geometry.len())
        .map(|idx| {
            let ok_role = match roles[idx] {
                Role::Interior => true,
                Role::Symmetry => file.design.include_symmetry,
                _ => false,
            };
            let c = geometry.coords(idx);
            let in_region = file.design.region.as_ref().map_or(true, |r| (0..dim).all(|a| c[a] >= r[a][0] && c[a] < r[a][1]));
            ok_role && in_region
        })
        .collect())
}
