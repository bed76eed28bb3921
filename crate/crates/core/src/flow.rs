//! Explicit time stepping of `∂f/∂t = −W·ν` with mesh-quality upkeep and
//! termination events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, RemeshEvent, Snapshot, Trajectory};
use crate::energy::{energy_from_ops, euler_lagrange_from_ops, EnergyBreakdown, EnergyError, FlowParams};
use crate::geometry::{GeometryError, Operators};
use crate::mesh::{MeshError, TriangleSurface, Vec3};
use crate::remesh::{remesh, QualitySpec, RemeshError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("mesh degenerated: {0}")]
    Degenerate(String),
    #[error("non-finite normal velocity at vertex {0}")]
    NonFiniteVelocity(usize),
    #[error("invalid step policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

impl From<GeometryError> for FlowError {
    fn from(e: GeometryError) -> Self {
        FlowError::Degenerate(e.to_string())
    }
}

impl From<MeshError> for FlowError {
    fn from(e: MeshError) -> Self {
        FlowError::Degenerate(e.to_string())
    }
}

impl From<RemeshError> for FlowError {
    fn from(e: RemeshError) -> Self {
        FlowError::Degenerate(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepPolicy {
    /// Dimensionless `k` in `dt = k·h⁴/(1 + max|W|·h)`.
    pub cfl: f64,
    #[serde(with = "crate::serde_ext::inf_as_null")]
    pub dt_max: f64,
    /// Remesh check cadence in steps; `0` disables remeshing.
    pub remesh_every: usize,
    pub quality: QualitySpec,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            cfl: 1e-2,
            dt_max: f64::INFINITY,
            remesh_every: 25,
            quality: QualitySpec::default(),
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(FlowError::InvalidPolicy(format!("cfl constant {} outside (0, 1]", self.cfl)));
        }
        if !(self.dt_max > 0.0) {
            return Err(FlowError::InvalidPolicy(format!("dt_max {} must be positive", self.dt_max)));
        }
        self.quality
            .validate()
            .map_err(|e| FlowError::InvalidPolicy(e.to_string()))
    }

    pub fn dt(&self, h_min: f64, max_w: f64) -> f64 {
        (self.cfl * h_min.powi(4) / (1.0 + max_w * h_min)).min(self.dt_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopSpec {
    #[serde(with = "crate::serde_ext::inf_as_null")]
    pub t_max: f64,
    pub max_steps: usize,
    /// Extinction threshold as a fraction of the initial area.
    pub area_floor: f64,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            t_max: f64::INFINITY,
            max_steps: usize::MAX,
            area_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordSpec {
    /// Diagnostics record cadence in steps.
    pub every: usize,
    /// Snapshot cadence in records; `0` keeps only the initial and final
    /// surfaces.
    pub snapshot_every: usize,
    /// Ball radii for the concentration functional.
    pub radii: Vec<f64>,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self {
            every: 1000,
            snapshot_every: 10,
            radii: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Extinction { time: f64 },
    Degeneration { message: String },
    TimeLimit,
    StepBudget,
}

/// Quantities shared by an energy evaluation and a step.
pub struct Evaluation {
    pub energy: EnergyBreakdown,
    pub w: Vec<f64>,
    pub max_w: f64,
    pub h_min: f64,
    normals: Vec<Vec3>,
}

pub fn evaluate(s: &TriangleSurface, p: &FlowParams) -> Result<Evaluation, FlowError> {
    let ops = Operators::new(s)?;
    let h = ops.mean_curvature();
    let w = euler_lagrange_from_ops(s, &ops, &h, p);
    let energy = energy_from_ops(&ops, &h, p);
    let mut max_w: f64 = 0.0;
    for (v, &x) in w.iter().enumerate() {
        if !x.is_finite() {
            return Err(FlowError::NonFiniteVelocity(v));
        }
        max_w = max_w.max(x.abs());
    }
    let h_min = ops.min_edge_length();
    Ok(Evaluation {
        energy,
        w,
        max_w,
        h_min,
        normals: ops.normals().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub dt: f64,
    pub max_w: f64,
    pub h_min: f64,
    /// Energy of the surface the step started from.
    pub energy_before: EnergyBreakdown,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub surface: TriangleSurface,
    pub time: f64,
    pub step_index: usize,
    pub params: FlowParams,
}

impl FlowState {
    pub fn new(surface: TriangleSurface, params: FlowParams) -> Result<Self, FlowError> {
        params.validate()?;
        Ok(Self {
            surface,
            time: 0.0,
            step_index: 0,
            params,
        })
    }

    /// One policy-sized explicit Euler step.
    pub fn step(&mut self, policy: &StepPolicy) -> Result<StepReport, FlowError> {
        let eval = evaluate(&self.surface, &self.params)?;
        let dt = policy.dt(eval.h_min, eval.max_w);
        self.advance(&eval, dt)?;
        Ok(StepReport {
            dt,
            max_w: eval.max_w,
            h_min: eval.h_min,
            energy_before: eval.energy,
        })
    }

    pub fn step_with_dt(&mut self, dt: f64) -> Result<StepReport, FlowError> {
        let eval = evaluate(&self.surface, &self.params)?;
        self.advance(&eval, dt)?;
        Ok(StepReport {
            dt,
            max_w: eval.max_w,
            h_min: eval.h_min,
            energy_before: eval.energy,
        })
    }

    /// Moves every vertex by `dt·(−W)·ν_in`. The state is left untouched if
    /// the result is not a valid surface.
    pub fn advance(&mut self, eval: &Evaluation, dt: f64) -> Result<(), FlowError> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(FlowError::InvalidPolicy(format!("time step {dt} is not a finite non-negative number")));
        }
        if dt > 0.0 {
            // ν_in = −n_out, so −W·ν_in = W·n_out.
            let pos = self
                .surface
                .positions()
                .iter()
                .zip(&eval.normals)
                .zip(&eval.w)
                .map(|((x, n), w)| x + n * (dt * w))
                .collect();
            self.surface = self.surface.with_positions(pos)?;
        }
        self.time += dt;
        self.step_index += 1;
        Ok(())
    }
}

/// Integrates until extinction, degeneration, `t_max` or the step budget.
pub fn run(
    initial: TriangleSurface,
    params: FlowParams,
    policy: &StepPolicy,
    stop: &StopSpec,
    record: &RecordSpec,
) -> Result<Trajectory, FlowError> {
    policy.validate()?;
    if !(stop.area_floor > 0.0 && stop.area_floor < 1.0) {
        return Err(FlowError::InvalidPolicy(format!("area floor {} outside (0, 1)", stop.area_floor)));
    }
    if record.every == 0 || record.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(FlowError::InvalidPolicy("record cadence and radii must be positive".into()));
    }
    let mut state = FlowState::new(initial, params)?;
    let initial_eval = evaluate(&state.surface, &params)?;
    let initial_area = initial_eval.energy.area;
    let floor_area = stop.area_floor * initial_area;
    let mut traj = Trajectory::new(params, initial_eval.energy, record.radii.clone(), floor_area);

    let push = |traj: &mut Trajectory, state: &FlowState, event: &str, snapshot: bool| -> Result<(), FlowError> {
        let rec = diagnostics::record(&state.surface, &params, &record.radii, state.time, state.step_index, event)?;
        traj.records.push(rec);
        if snapshot {
            traj.snapshots.push(Snapshot {
                step: state.step_index,
                time: state.time,
                surface: state.surface.clone(),
            });
        }
        Ok(())
    };
    push(&mut traj, &state, "initial", true)?;

    let mut eval = initial_eval;
    let termination = loop {
        if eval.energy.area < floor_area {
            break Termination::Extinction { time: state.time };
        }
        if state.time >= stop.t_max {
            break Termination::TimeLimit;
        }
        if state.step_index >= stop.max_steps {
            break Termination::StepBudget;
        }
        let mut dt = policy.dt(eval.h_min, eval.max_w);
        if state.time + dt > stop.t_max {
            dt = stop.t_max - state.time;
        }
        let before = eval.energy;
        let prev_time = state.time;
        if let Err(e) = state.advance(&eval, dt) {
            break Termination::Degeneration { message: e.to_string() };
        }
        let mut event = "";
        let mut remeshed = false;
        if policy.remesh_every > 0 && state.step_index % policy.remesh_every == 0 {
            match remesh(&state.surface, &policy.quality) {
                Ok(out) if !out.skipped => {
                    traj.remesh_events.push(RemeshEvent::measure(
                        state.step_index,
                        state.time,
                        &state.surface,
                        &out.surface,
                        &params,
                        &out,
                    )?);
                    state.surface = out.surface;
                    event = "remesh";
                    remeshed = true;
                }
                Ok(_) => {}
                Err(e) => break Termination::Degeneration { message: e.to_string() },
            }
        }
        eval = match evaluate(&state.surface, &params) {
            Ok(e) => e,
            Err(e) => break Termination::Degeneration { message: e.to_string() },
        };
        if remeshed {
            // Remesh drift is budgeted separately through the remesh events.
            traj.descent.skipped += 1;
        } else {
            traj.descent.check(state.step_index, before.total, eval.energy.total);
        }
        if eval.energy.area < floor_area {
            // Linear interpolation of the crossing inside the last step.
            let a0 = before.area;
            let a1 = eval.energy.area;
            let frac = if a0 > a1 { ((a0 - floor_area) / (a0 - a1)).clamp(0.0, 1.0) } else { 1.0 };
            traj.extinction_time = Some(prev_time + frac * (state.time - prev_time));
        }
        traj.steps = state.step_index;
        let on_cadence = state.step_index % record.every == 0;
        if on_cadence || !event.is_empty() {
            let n = traj.records.len();
            let snap = record.snapshot_every > 0 && on_cadence && n % record.snapshot_every == 0;
            push(&mut traj, &state, event, snap)?;
        }
    };
    traj.steps = state.step_index;
    let label = match &termination {
        Termination::Extinction { .. } => "extinction",
        Termination::Degeneration { .. } => "degeneration",
        Termination::TimeLimit => "time_limit",
        Termination::StepBudget => "step_budget",
    };
    let already = traj.snapshots.last().is_some_and(|s| s.step == state.step_index);
    if let Some(last) = traj.records.last_mut().filter(|r| r.step == state.step_index) {
        last.event = if last.event.is_empty() { label.to_string() } else { format!("{};{label}", last.event) };
        if !already {
            traj.snapshots.push(Snapshot {
                step: state.step_index,
                time: state.time,
                surface: state.surface.clone(),
            });
        }
    } else if let Err(e) = push(&mut traj, &state, label, !already) {
        log::warn!("final record unavailable: {e}");
    }
    traj.termination = Some(termination);
    Ok(traj)
}
