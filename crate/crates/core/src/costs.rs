//! Cost functionals over discretized trajectories, with analytic gradients.
//!
//! All integrals are sums over time steps scaled by `dt`. Gradients are with
//! respect to every waypoint (`T × dof`), so they are the exact derivatives
//! of the discrete sums.

use nalgebra::{DMatrix, Matrix3, Matrix3xX, Point3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{BodyPoint, BodyPointKind, BodyPointSet, ChainFrames, KinematicChain};
use crate::scene::{ClassFilter, Scene};
use crate::trajectory::JointTrajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 1.0, alpha3: 1.0, alpha4: 0.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.alpha3, self.alpha4];
        if all.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::Config("cost weights must be finite and >= 0".into()));
        }
        if all.iter().all(|a| *a == 0.0) {
            return Err(Error::Config("at least one cost weight must be > 0".into()));
        }
        Ok(())
    }
}

/// Weights and tolerances of the soft constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Drift hinge weight.
    pub drift: f64,
    /// Weight per stem crossing and time step.
    pub crossing: f64,
    /// Weight of the per-step `x_g`/`z_g` change penalty.
    pub smoothness: f64,
    /// Free per-step change along `x_g` and `z_g` (m).
    pub delta_tol: f64,
    /// Trajectory duration (s) used when flagging velocity-limit violations.
    pub duration: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { drift: 1.0, crossing: 10.0, smoothness: 1.0, delta_tol: 0.005, duration: 1.0 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.drift, self.crossing, self.smoothness, self.delta_tol];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("penalty weights and delta_tol must be finite and >= 0".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be > 0".into()));
        }
        Ok(())
    }
}

/// What a stage minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// `α3·f_push` plus the constraint penalties.
    Push,
    /// `α1·f_obs_s + α2·f_obs_d`.
    Collision,
    /// Unweighted `f_vel`.
    Velocity,
    /// Every term, weighted.
    Combined,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Push => "push",
            Objective::Collision => "collision",
            Objective::Velocity => "velocity",
            Objective::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub f_obs_s: f64,
    pub f_obs_d: f64,
    pub f_push: f64,
    pub f_vel: f64,
    pub penalties: f64,
    /// `α1·f_obs_s + α2·f_obs_d + α3·f_push + α4·f_vel + penalties`.
    pub total: f64,
}

impl CostBreakdown {
    fn finish(mut self, w: &CostWeights) -> Self {
        self.total = w.alpha1 * self.f_obs_s + w.alpha2 * self.f_obs_d + w.alpha3 * self.f_push + w.alpha4 * self.f_vel
            + self.penalties;
        self
    }

    /// Scalar a stage with `objective` minimizes.
    pub fn objective(&self, objective: Objective, w: &CostWeights) -> f64 {
        match objective {
            Objective::Push => w.alpha3 * self.f_push + self.penalties,
            Objective::Collision => w.alpha1 * self.f_obs_s + w.alpha2 * self.f_obs_d,
            Objective::Velocity => self.f_vel,
            Objective::Combined => self.total,
        }
    }
}

/// Per-term values of the soft constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PenaltyDiagnostics {
    pub drift: f64,
    pub crossing: f64,
    pub smoothness: f64,
    /// Time steps whose ee segment to the goal crosses the nearest object's stem.
    pub crossing_steps: usize,
    /// Time steps where the drift gradient was redirected toward the preferred side.
    pub redirected_steps: usize,
    /// `(interval, joint)` pairs whose velocity exceeds its limit at the configured duration.
    pub velocity_violations: usize,
    /// Shortest duration (s) at which every velocity is within its limits.
    pub min_duration: f64,
}

/// Obstacle potential of a signed distance: linear inside, quadratic within `epsilon_s`, zero beyond.
pub fn obstacle_cost_pointwise(d: f64, epsilon_s: f64) -> f64 {
    if d < 0.0 {
        -d + 0.5 * epsilon_s
    } else if d <= epsilon_s {
        (d - epsilon_s).powi(2) / (2.0 * epsilon_s)
    } else {
        0.0
    }
}

/// Derivative of [`obstacle_cost_pointwise`]; the left derivative `-1` at `d = 0`.
pub fn obstacle_cost_derivative(d: f64, epsilon_s: f64) -> f64 {
    if d < 0.0 {
        -1.0
    } else if d <= epsilon_s {
        (d - epsilon_s) / epsilon_s
    } else {
        0.0
    }
}

/// Forward kinematics of every waypoint, computed once per evaluation.
pub struct Sampled<'a> {
    chain: &'a KinematicChain,
    frames: Vec<ChainFrames>,
}

impl<'a> Sampled<'a> {
    pub fn new(chain: &'a KinematicChain, traj: &JointTrajectory) -> Result<Self> {
        if traj.dof() != chain.dof() {
            return Err(Error::Shape(format!(
                "trajectory has {} joints, chain '{}' has {}",
                traj.dof(),
                chain.name,
                chain.dof()
            )));
        }
        let frames = traj.rows().map(|q| chain.frames(&q)).collect::<Result<Vec<_>>>()?;
        Ok(Self { chain, frames })
    }

    pub fn point(&self, t: usize, p: &BodyPoint) -> Vector3<f64> {
        (self.frames[t].segment(p.segment) * Point3::from(p.local)).coords
    }

    pub fn point_jacobian(&self, t: usize, p: &BodyPoint) -> Matrix3xX<f64> {
        let world = self.point(t, p);
        self.chain.jacobian_at(&self.frames[t], p.segment, &world)
    }

    pub fn tip(&self, t: usize) -> Vector3<f64> {
        self.frames[t].tip.translation.vector
    }

    pub fn tip_jacobian(&self, t: usize) -> Matrix3xX<f64> {
        self.chain.jacobian_at(&self.frames[t], self.chain.dof(), &self.tip(t))
    }
}

fn add_row(grad: &mut DMatrix<f64>, t: usize, jac: &Matrix3xX<f64>, w: &Vector3<f64>) {
    let g = jac.transpose() * w;
    for j in 0..g.len() {
        grad[(t, j)] += g[j];
    }
}

/// Everything needed to evaluate costs for one scene and chain.
#[derive(Debug, Clone)]
pub struct CostContext<'a> {
    pub chain: &'a KinematicChain,
    pub scene: &'a Scene,
    /// Camera-point time index where pushing costs begin.
    pub t1: usize,
    pub weights: CostWeights,
    pub penalties: PenaltyConfig,
    /// Per-axis weights of the push distance in the goal frame.
    pub push_axes: Vector3<f64>,
    /// Use the literal `ξ̇ᵀ ξ` velocity integrand instead of `ξ̇ᵀ ξ̇`.
    pub literal_velocity: bool,
    /// Extra rows the optimizer keeps fixed, besides the first (and last when pinned).
    pub held: Vec<usize>,
    pub body_static: BodyPointSet,
    pub body_dynamic: BodyPointSet,
}

impl<'a> CostContext<'a> {
    pub fn new(chain: &'a KinematicChain, scene: &'a Scene, t1: usize) -> Self {
        Self {
            chain,
            scene,
            t1,
            weights: CostWeights::default(),
            penalties: PenaltyConfig::default(),
            push_axes: Vector3::new(1.0, 1.0, 1.0),
            literal_velocity: false,
            held: Vec::new(),
            body_static: chain.body_point_set(BodyPointKind::FullWithEE),
            body_dynamic: chain.body_point_set(BodyPointKind::BodyMinusLastLink),
        }
    }

    fn check(&self, traj: &JointTrajectory) -> Result<()> {
        if self.t1 >= traj.steps() {
            return Err(Error::Index { index: self.t1, len: traj.steps() });
        }
        Ok(())
    }

    /// Every term, and the gradient of `objective` when requested.
    pub fn evaluate(
        &self,
        traj: &JointTrajectory,
        objective: Objective,
        with_gradient: bool,
    ) -> Result<(CostBreakdown, PenaltyDiagnostics, Option<DMatrix<f64>>)> {
        self.check(traj)?;
        let s = Sampled::new(self.chain, traj)?;
        let w = self.weights;
        let (n, dof) = (traj.steps(), traj.dof());
        let mut grad = with_gradient.then(|| DMatrix::zeros(n, dof));
        let mut scratch = DMatrix::zeros(n, dof);

        let wants = |term: Objective| -> f64 {
            match (objective, term) {
                (Objective::Combined, Objective::Collision) => 1.0,
                (Objective::Combined, Objective::Push) => w.alpha3,
                (Objective::Combined, Objective::Velocity) => w.alpha4,
                (Objective::Velocity, Objective::Velocity) => 1.0,
                (Objective::Push, Objective::Push) => w.alpha3,
                (Objective::Collision, Objective::Collision) => 1.0,
                _ => 0.0,
            }
        };

        let mut b = CostBreakdown::default();
        let collision = wants(Objective::Collision) != 0.0 && with_gradient;
        b.f_obs_s = f_obs_sampled(&s, traj, self.scene, &self.body_static, ClassFilter::STATIC, collision.then_some(&mut scratch));
        accumulate(w.alpha1 * wants(Objective::Collision), &mut scratch, &mut grad);
        b.f_obs_d = f_obs_sampled(&s, traj, self.scene, &self.body_dynamic, ClassFilter::DYNAMIC, collision.then_some(&mut scratch));
        accumulate(w.alpha2 * wants(Objective::Collision), &mut scratch, &mut grad);

        let push = wants(Objective::Push) != 0.0 && with_gradient;
        b.f_push = f_push_sampled(&s, traj, self.scene, self.t1, &self.push_axes, push.then_some(&mut scratch));
        accumulate(wants(Objective::Push), &mut scratch, &mut grad);

        let vel = wants(Objective::Velocity) != 0.0 && with_gradient;
        b.f_vel = if self.literal_velocity {
            f_vel_literal(traj, vel.then_some(&mut scratch))
        } else {
            f_vel(traj, vel.then_some(&mut scratch))
        };
        accumulate(wants(Objective::Velocity), &mut scratch, &mut grad);

        let penal = matches!(objective, Objective::Push | Objective::Combined) && with_gradient;
        let diag = penalties_sampled(&s, traj, self, penal.then_some(&mut scratch));
        accumulate(1.0, &mut scratch, &mut grad);
        b.penalties = diag.drift + diag.crossing + diag.smoothness;

        Ok((b.finish(&w), diag, grad))
    }
}

fn accumulate(scale: f64, scratch: &mut DMatrix<f64>, grad: &mut Option<DMatrix<f64>>) {
    if let Some(g) = grad.as_mut() {
        if scale != 0.0 {
            *g += &*scratch * scale;
        }
    }
    scratch.fill(0.0);
}

/// Obstacle functional for one body-point set and obstacle class filter: the
/// worst body point per step, weighted by its workspace speed.
pub fn f_obs(
    traj: &JointTrajectory,
    chain: &KinematicChain,
    scene: &Scene,
    set: &BodyPointSet,
    filter: ClassFilter,
) -> Result<(f64, DMatrix<f64>)> {
    let s = Sampled::new(chain, traj)?;
    let mut grad = DMatrix::zeros(traj.steps(), traj.dof());
    let v = f_obs_sampled(&s, traj, scene, set, filter, Some(&mut grad));
    Ok((v, grad))
}

fn f_obs_sampled(
    s: &Sampled,
    traj: &JointTrajectory,
    scene: &Scene,
    set: &BodyPointSet,
    filter: ClassFilter,
    mut grad: Option<&mut DMatrix<f64>>,
) -> f64 {
    let n = traj.steps();
    let dt = traj.dt();
    let eps = scene.epsilon_s;
    if !scene.has_class(filter) || set.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for t in 0..n {
        // Strict comparison keeps the lowest index on ties.
        let mut best: Option<(f64, f64, &BodyPoint)> = None;
        for p in &set.points {
            let d = scene.sdf(&s.point(t, p), filter) - p.radius;
            let c = obstacle_cost_pointwise(d, eps);
            if c > 0.0 && best.is_none_or(|(bc, _, _)| c > bc) {
                best = Some((c, d, p));
            }
        }
        let Some((c, d, p)) = best else { continue };
        let (ta, tb, scale) = if t == 0 {
            (0, 1, 1.0 / dt)
        } else if t == n - 1 {
            (n - 2, n - 1, 1.0 / dt)
        } else {
            (t - 1, t + 1, 0.5 / dt)
        };
        let xdot = (s.point(tb, p) - s.point(ta, p)) * scale;
        let speed = xdot.norm();
        total += c * speed * dt;

        if let Some(g) = grad.as_deref_mut() {
            let x = s.point(t, p);
            let dc = obstacle_cost_derivative(d, eps);
            if dc != 0.0 && speed > 0.0 {
                let w = scene.sdf_gradient(&x, filter) * (dc * speed * dt);
                add_row(g, t, &s.point_jacobian(t, p), &w);
            }
            if speed > 0.0 {
                let u = xdot / speed * (c * dt * scale);
                add_row(g, tb, &s.point_jacobian(tb, p), &u);
                add_row(g, ta, &s.point_jacobian(ta, p), &(-u));
            }
        }
    }
    total
}

/// Pushing functional: weighted squared goal-frame distance of the
/// tool tip to the goal, summed over `t1..T`.
pub fn f_push(
    traj: &JointTrajectory,
    chain: &KinematicChain,
    scene: &Scene,
    t1: usize,
    axes: &Vector3<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    if t1 >= traj.steps() {
        return Err(Error::Index { index: t1, len: traj.steps() });
    }
    let s = Sampled::new(chain, traj)?;
    let mut grad = DMatrix::zeros(traj.steps(), traj.dof());
    let v = f_push_sampled(&s, traj, scene, t1, axes, Some(&mut grad));
    Ok((v, grad))
}

fn f_push_sampled(
    s: &Sampled,
    traj: &JointTrajectory,
    scene: &Scene,
    t1: usize,
    axes: &Vector3<f64>,
    mut grad: Option<&mut DMatrix<f64>>,
) -> f64 {
    let dt = traj.dt();
    let frame: &Matrix3<f64> = &scene.goal.frame;
    let goal = scene.goal.position();
    let w2 = axes.component_mul(axes);
    let mut total = 0.0;
    for t in t1..traj.steps() {
        let e = scene.goal.to_frame(&(s.tip(t) - goal));
        total += e.component_mul(&w2).dot(&e) * dt;
        if let Some(g) = grad.as_deref_mut() {
            let world = frame * e.component_mul(&w2) * (2.0 * dt);
            add_row(g, t, &s.tip_jacobian(t), &world);
        }
    }
    total
}

/// Velocity functional `Σ ‖ξ_{t+1} − ξ_t‖² / dt`.
pub fn f_vel(traj: &JointTrajectory, grad: Option<&mut DMatrix<f64>>) -> f64 {
    let m = traj.matrix();
    let dt = traj.dt();
    let mut total = 0.0;
    let mut grad = grad;
    for t in 0..traj.steps() - 1 {
        let d = m.row(t + 1) - m.row(t);
        total += d.norm_squared() / dt;
        if let Some(g) = grad.as_deref_mut() {
            let r = d * (2.0 / dt);
            let mut next = g.row_mut(t + 1);
            next += &r;
            let mut this = g.row_mut(t);
            this -= &r;
        }
    }
    total
}

/// Literal integrand `ξ̇ᵀ ξ`: `Σ (ξ_{t+1} − ξ_t) · ξ_t`.
pub fn f_vel_literal(traj: &JointTrajectory, grad: Option<&mut DMatrix<f64>>) -> f64 {
    let m = traj.matrix();
    let mut total = 0.0;
    let mut grad = grad;
    for t in 0..traj.steps() - 1 {
        let q = m.row(t);
        let d = m.row(t + 1) - q;
        total += d.dot(&q);
        if let Some(g) = grad.as_deref_mut() {
            let here = d - q;
            let mut this = g.row_mut(t);
            this += &here;
            let mut next = g.row_mut(t + 1);
            next += &q;
        }
    }
    total
}

/// Soft constraints on the ee path from `t1` onward, plus velocity flags.
pub fn constraint_penalties(ctx: &CostContext, traj: &JointTrajectory) -> Result<(PenaltyDiagnostics, DMatrix<f64>)> {
    ctx.check(traj)?;
    let s = Sampled::new(ctx.chain, traj)?;
    let mut grad = DMatrix::zeros(traj.steps(), traj.dof());
    let d = penalties_sampled(&s, traj, ctx, Some(&mut grad));
    Ok((d, grad))
}

fn nearest_pushable(scene: &Scene, p: &Vector3<f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, obj) in scene.pushables.iter().enumerate() {
        let d = (p - obj.center).norm();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

fn penalties_sampled(
    s: &Sampled,
    traj: &JointTrajectory,
    ctx: &CostContext,
    mut grad: Option<&mut DMatrix<f64>>,
) -> PenaltyDiagnostics {
    let scene = ctx.scene;
    let cfg = &ctx.penalties;
    let dt = traj.dt();
    let n = traj.steps();
    let r = scene.goal.r_gripper;
    let goal = scene.goal.position();
    let frame = scene.goal.frame;
    let sides: Vec<Option<f64>> = (0..scene.pushables.len()).map(|i| scene.drift_side(i)).collect();
    let mut out = PenaltyDiagnostics::default();

    for t in ctx.t1..n {
        let p = s.tip(t);
        if let Some((i, dist)) = nearest_pushable(scene, &p) {
            let delta = scene.goal.to_frame(&(p - scene.pushables[i].center));
            if dist < r {
                let gap = r - dist;
                out.drift += cfg.drift * gap * gap * dt;
                if let Some(g) = grad.as_deref_mut() {
                    let k = -2.0 * cfg.drift * gap * dt;
                    let mut local = if dist > 0.0 { delta * (k / dist) } else { Vector3::zeros() };
                    let side = sides[i].unwrap_or(if delta.y < 0.0 { -1.0 } else { 1.0 });
                    if side * delta.y <= 0.0 {
                        // Wrong side of the object (or on its plane): steer across.
                        local.y = k * side;
                        out.redirected_steps += 1;
                    }
                    add_row(g, t, &s.tip_jacobian(t), &(frame * local));
                }
            }
            let crossings = scene.own_stem_crossings(i, &p, &goal);
            out.crossing_steps += crossings;
            out.crossing += cfg.crossing * crossings as f64 * dt;
        }
        if t >= 1 && cfg.smoothness > 0.0 {
            let prev = s.tip(t - 1);
            let step = scene.goal.to_frame(&(p - prev));
            let mut local = Vector3::zeros();
            for k in [0, 2] {
                let excess = step[k].abs() - cfg.delta_tol;
                if excess > 0.0 {
                    out.smoothness += cfg.smoothness * excess * excess * dt;
                    local[k] = 2.0 * cfg.smoothness * excess * step[k].signum() * dt;
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                if local != Vector3::zeros() {
                    let world = frame * local;
                    add_row(g, t, &s.tip_jacobian(t), &world);
                    add_row(g, t - 1, &s.tip_jacobian(t - 1), &(-world));
                }
            }
        }
    }

    let chain = ctx.chain;
    let m = traj.matrix();
    let mut min_duration: f64 = 0.0;
    for t in 0..n - 1 {
        for j in 0..traj.dof() {
            let dq = m[(t + 1, j)] - m[(t, j)];
            let limit = if dq >= 0.0 { chain.qd_max[j] } else { -chain.qd_min[j] };
            let need = if dq == 0.0 {
                0.0
            } else if limit > 0.0 {
                dq.abs() * (n - 1) as f64 / limit
            } else {
                f64::INFINITY
            };
            min_duration = min_duration.max(need);
            if need > cfg.duration {
                out.velocity_violations += 1;
            }
        }
    }
    out.min_duration = min_duration;
    out
}

/// Objective value and gradient of a stage for use by the optimizer.
pub fn objective_and_gradient(
    ctx: &CostContext,
    traj: &JointTrajectory,
    objective: Objective,
) -> Result<(CostBreakdown, DMatrix<f64>)> {
    let (b, _, g) = ctx.evaluate(traj, objective, true)?;
    Ok((b, g.expect("gradient requested")))
}

/// Tip positions of every waypoint.
pub fn ee_path(chain: &KinematicChain, traj: &JointTrajectory) -> Result<Vec<Vector3<f64>>> {
    traj.rows().map(|q| Ok(chain.fk(&q)?.position)).collect()
}
