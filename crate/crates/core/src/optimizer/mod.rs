//! Staged trajectory optimization starting from a conditioned primitive.

mod descent;
mod lbfgsb;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3};

pub use descent::{minimize, Iterate, Method, Outcome, Problem, Settings, StopReason, MAX_HALVINGS};

pub use crate::costs::Objective;
use crate::costs::{CostBreakdown, CostContext, CostWeights, PenaltyConfig, PenaltyDiagnostics};
use crate::error::{Error, Result};
use crate::kinematics::{ik_position, IkConfig, KinematicChain};
use crate::metrics::collision_measure;
use crate::promp::{PrompModel, ViaPoint};
use crate::scene::Scene;
use crate::trajectory::JointTrajectory;

/// One step of a recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSpec {
    pub objective: Objective,
    pub method: Method,
    pub max_iters: usize,
    pub gamma: f64,
    pub tolerance: f64,
    pub radius: f64,
    pub history: usize,
    /// Hold the final waypoint fixed. `None` pins it for every objective except `Push`.
    pub pin_final: Option<bool>,
    /// Hard clearance to static obstacles: trial steps ending below it are rejected.
    /// A stage entered below it keeps at least its entry clearance instead.
    pub min_clearance: Option<f64>,
}

impl StageSpec {
    pub fn new(objective: Objective, method: Method, max_iters: usize) -> Self {
        let d = Settings::default();
        Self {
            objective,
            method,
            max_iters,
            gamma: d.gamma,
            tolerance: d.tolerance,
            radius: d.radius,
            history: d.history,
            pin_final: None,
            min_clearance: None,
        }
    }

    pub fn pins_final(&self) -> bool {
        self.pin_final.unwrap_or(self.objective != Objective::Push)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("stage max_iters must be >= 1".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("tolerance", self.tolerance), ("radius", self.radius)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("stage {name} must be > 0, got {v}")));
            }
        }
        if self.history == 0 {
            return Err(Error::Config("stage history must be >= 1".into()));
        }
        if self.min_clearance.is_some_and(|m| !m.is_finite()) {
            return Err(Error::Config("stage min_clearance must be finite".into()));
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings {
            max_iters: self.max_iters,
            gamma: self.gamma,
            tolerance: self.tolerance,
            radius: self.radius,
            history: self.history,
        }
    }
}

/// One recorded iteration of a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 0 is the stage's starting point.
    pub iteration: usize,
    pub costs: CostBreakdown,
    pub diagnostics: PenaltyDiagnostics,
    /// Value of the stage objective.
    pub objective: f64,
    pub step: f64,
    pub trajectory: JointTrajectory,
}

#[derive(Debug, Clone)]
pub struct StageTrace {
    pub spec: StageSpec,
    pub entries: Vec<TraceEntry>,
    pub stop: StopReason,
}

impl StageTrace {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn first(&self) -> &TraceEntry {
        &self.entries[0]
    }

    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("trace holds the starting point")
    }
}

/// Gradient of a stage objective with boundary rows zeroed.
///
/// Row 0 and `ctx.held` are always held; the last row is held when `pin_final` is set.
pub fn functional_gradient(
    ctx: &CostContext,
    traj: &JointTrajectory,
    objective: Objective,
    pin_final: bool,
) -> Result<DMatrix<f64>> {
    let (_, _, g) = ctx.evaluate(traj, objective, true)?;
    let mut g = g.expect("gradient requested");
    for t in held_rows(ctx, g.nrows(), pin_final) {
        g.row_mut(t).fill(0.0);
    }
    Ok(g)
}

fn held_rows(ctx: &CostContext, n: usize, pin_final: bool) -> Vec<usize> {
    let mut held = vec![0];
    if pin_final {
        held.push(n - 1);
    }
    held.extend(ctx.held.iter().copied().filter(|&t| t < n));
    held
}

fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unflatten(x: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, x.as_slice())
}

/// Runs one stage. Bounds are the joint limits; held rows get zero-width bounds.
pub fn run_stage(ctx: &CostContext, traj: &JointTrajectory, spec: &StageSpec) -> Result<StageTrace> {
    spec.validate()?;
    let chain = ctx.chain;
    let (n, dof) = (traj.steps(), traj.dof());
    let start = traj.matrix().clone();
    let mut lo = DMatrix::from_fn(n, dof, |_, j| chain.q_min[j]);
    let mut hi = DMatrix::from_fn(n, dof, |_, j| chain.q_max[j]);
    let held = held_rows(ctx, n, spec.pins_final());
    for &t in &held {
        for j in 0..dof {
            // A held row keeps its value even if it lies outside the limits.
            lo[(t, j)] = start[(t, j)];
            hi[(t, j)] = start[(t, j)];
        }
    }
    let floor = match spec.min_clearance {
        Some(m) if !ctx.scene.statics.is_empty() => Some(m.min(collision_measure(traj, chain, ctx.scene)?)),
        _ => None,
    };
    let mut problem = StageProblem { ctx, objective: spec.objective, held: &held, n, dof, floor };
    let out = minimize(spec.method, &spec.settings(), &mut problem, &flatten(&start), &flatten(&lo), &flatten(&hi))?;
    let entries = out
        .iterates
        .iter()
        .enumerate()
        .map(|(iteration, it)| {
            Ok(TraceEntry {
                iteration,
                costs: it.info.0,
                diagnostics: it.info.1,
                objective: it.value,
                step: it.step,
                trajectory: JointTrajectory::new(unflatten(&it.x, n, dof))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StageTrace { spec: *spec, entries, stop: out.stop })
}

struct StageProblem<'a, 'b> {
    ctx: &'a CostContext<'b>,
    objective: Objective,
    held: &'a [usize],
    n: usize,
    dof: usize,
    /// Static clearance every accepted point must keep.
    floor: Option<f64>,
}

type StageInfo = (CostBreakdown, PenaltyDiagnostics, Option<f64>);

impl Problem for StageProblem<'_, '_> {
    type Info = StageInfo;

    fn eval(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, StageInfo)> {
        let t = JointTrajectory::new(unflatten(x, self.n, self.dof))?;
        let (b, d, g) = self.ctx.evaluate(&t, self.objective, true)?;
        let mut g = g.expect("gradient requested");
        for &t in self.held {
            g.row_mut(t).fill(0.0);
        }
        let clearance = match self.floor {
            Some(_) => Some(collision_measure(&t, self.ctx.chain, self.ctx.scene)?),
            None => None,
        };
        Ok((b.objective(self.objective, &self.ctx.weights), flatten(&g), (b, d, clearance)))
    }

    fn admissible(&self, info: &StageInfo) -> bool {
        match (self.floor, info.2) {
            (Some(floor), Some(c)) => c >= floor,
            _ => true,
        }
    }
}

/// What a via-point constrains.
#[derive(Debug, Clone, PartialEq)]
pub enum ViaTarget {
    Joints(DVector<f64>),
    /// Tool-tip position, mapped to joints by inverse kinematics.
    Position(Vector3<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViaSpec {
    pub name: String,
    pub t_index: usize,
    pub target: ViaTarget,
    pub noise: f64,
}

/// Everything a pipeline run needs besides the recipe.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub t1: usize,
    pub weights: CostWeights,
    pub penalties: PenaltyConfig,
    pub push_axes: Vector3<f64>,
    pub literal_velocity: bool,
    /// Rows kept fixed by every stage, besides the first.
    pub held: Vec<usize>,
    pub ik: IkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t1: 0,
            weights: CostWeights::default(),
            penalties: PenaltyConfig::default(),
            push_axes: Vector3::new(1.0, 1.0, 1.0),
            literal_velocity: false,
            held: Vec::new(),
            ik: IkConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn context<'a>(&self, chain: &'a KinematicChain, scene: &'a Scene) -> CostContext<'a> {
        let mut ctx = CostContext::new(chain, scene, self.t1);
        ctx.weights = self.weights;
        ctx.penalties = self.penalties;
        ctx.push_axes = self.push_axes;
        ctx.literal_velocity = self.literal_velocity;
        ctx.held = self.held.clone();
        ctx
    }
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub trajectory: JointTrajectory,
    /// Joint-space value each via-point was conditioned on.
    pub vias: Vec<(String, ViaPoint)>,
    /// Largest joint deviation of the conditioned mean from each via value.
    pub via_residuals: Vec<f64>,
}

/// Conditions `model` on the via-points and returns its clamped mean trajectory.
///
/// Workspace via-points are solved by inverse kinematics seeded from the
/// prior mean at their time index, then from the previous via's solution.
/// Rows at `t = 0` and `t = T - 1` are set exactly to their via values.
pub fn initialize(chain: &KinematicChain, model: &PrompModel, vias: &[ViaSpec], ik: &IkConfig) -> Result<Initialization> {
    if model.dof() != chain.dof() {
        return Err(Error::Shape(format!("primitive has {} joints, chain has {}", model.dof(), chain.dof())));
    }
    let steps = model.basis.steps;
    let mut solved: Vec<(String, ViaPoint)> = Vec::with_capacity(vias.len());
    let mut previous: Option<DVector<f64>> = None;
    for via in vias {
        let wrap = |e: Error| Error::Initialization { via: via.name.clone(), source: Box::new(e) };
        if via.t_index >= steps {
            return Err(wrap(Error::Index { index: via.t_index, len: steps }));
        }
        let q = match &via.target {
            ViaTarget::Joints(q) => {
                if q.len() != chain.dof() {
                    return Err(wrap(Error::Shape(format!("{} joint values for a {}-joint chain", q.len(), chain.dof()))));
                }
                q.clone()
            }
            ViaTarget::Position(p) => {
                let seed = model.mean_at(via.t_index).map_err(wrap)?;
                match ik_position(chain, p, &seed, ik) {
                    Ok(q) => q,
                    Err(first) => match &previous {
                        Some(prev) => ik_position(chain, p, prev, ik).map_err(wrap)?,
                        None => return Err(wrap(first)),
                    },
                }
            }
        };
        previous = Some(q.clone());
        solved.push((via.name.clone(), ViaPoint::new(via.t_index, q, via.noise)));
    }
    let posterior = model.condition_all(solved.iter().map(|(_, v)| v))?;
    let via_residuals = solved.iter().map(|(_, v)| posterior.via_residual(v)).collect::<Result<Vec<_>>>()?;
    let mut trajectory = posterior.mean_trajectory();
    trajectory.clamp(&chain.q_min, &chain.q_max);
    for (_, v) in &solved {
        if v.t_index == 0 || v.t_index == steps - 1 {
            trajectory.set_row(v.t_index, &v.value);
        }
    }
    Ok(Initialization { trajectory, vias: solved, via_residuals })
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub initial: JointTrajectory,
    /// Cost terms of the initial trajectory.
    pub initial_costs: CostBreakdown,
    pub stages: Vec<StageTrace>,
    pub final_trajectory: JointTrajectory,
    pub wall_time: Duration,
}

impl OptimizationReport {
    pub fn converged(&self) -> Vec<bool> {
        self.stages.iter().map(StageTrace::converged).collect()
    }
}

/// Runs `recipe` in order from an existing initial trajectory.
pub fn optimize(ctx: &CostContext, initial: &JointTrajectory, recipe: &[StageSpec]) -> Result<OptimizationReport> {
    let started = Instant::now();
    let initial_costs = ctx.evaluate(initial, Objective::Combined, false)?.0;
    let mut current = initial.clone();
    let mut stages = Vec::with_capacity(recipe.len());
    for spec in recipe {
        let trace = run_stage(ctx, &current, spec)?;
        current = trace.last().trajectory.clone();
        stages.push(trace);
    }
    Ok(OptimizationReport {
        initial: initial.clone(),
        initial_costs,
        stages,
        final_trajectory: current,
        wall_time: started.elapsed(),
    })
}

/// Initialization from the primitive followed by every stage of `recipe`.
pub fn run_pipeline(
    scene: &Scene,
    chain: &KinematicChain,
    model: &PrompModel,
    vias: &[ViaSpec],
    recipe: &[StageSpec],
    config: &PipelineConfig,
) -> Result<(Initialization, OptimizationReport)> {
    if recipe.is_empty() {
        return Err(Error::Config("recipe must contain at least one stage".into()));
    }
    let init = initialize(chain, model, vias, &config.ik)?;
    let ctx = config.context(chain, scene);
    let report = optimize(&ctx, &init.trajectory, recipe)?;
    Ok((init, report))
}
