//! Clearance and push-drift measures of a finished trajectory.

use crate::costs::Sampled;
use crate::error::{Error, Result};
use crate::kinematics::{BodyPointKind, KinematicChain};
use crate::scene::{ClassFilter, Scene};
use crate::trajectory::JointTrajectory;

/// Smallest static clearance over every time step and every body point
/// (body radii subtracted). Negative means penetration.
pub fn collision_measure(traj: &JointTrajectory, chain: &KinematicChain, scene: &Scene) -> Result<f64> {
    if scene.statics.is_empty() {
        return Err(Error::UndefinedMetric("collision measure needs at least one static obstacle".into()));
    }
    let s = Sampled::new(chain, traj)?;
    let set = chain.body_point_set(BodyPointKind::FullWithEE);
    let mut best = f64::INFINITY;
    for t in 0..traj.steps() {
        for p in &set.points {
            best = best.min(scene.sdf(&s.point(t, p), ClassFilter::STATIC) - p.radius);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushMeasure {
    pub object: usize,
    /// `y_g · (X_ee − X_n)` at the closest approach.
    pub m_p: f64,
    /// `y_g · S`, the stem direction's lateral component.
    pub stem_projection: f64,
    /// Time index of the closest approach (searched from `t1`).
    pub t_closest: usize,
    pub distance: f64,
}

impl PushMeasure {
    /// The ee passed on the side away from the stem.
    pub fn opposite_to_stem(&self) -> bool {
        if self.stem_projection == 0.0 {
            return self.m_p != 0.0;
        }
        self.m_p != 0.0 && self.m_p.signum() == -self.stem_projection.signum()
    }
}

/// Signed lateral offset of the ee from a pushable object at the closest approach.
pub fn push_measure(
    traj: &JointTrajectory,
    chain: &KinematicChain,
    scene: &Scene,
    object: usize,
    t1: usize,
) -> Result<PushMeasure> {
    let Some(obj) = scene.pushables.get(object) else {
        return Err(Error::Index { index: object, len: scene.pushables.len() });
    };
    if t1 >= traj.steps() {
        return Err(Error::Index { index: t1, len: traj.steps() });
    }
    let y = scene.goal.y_axis();
    let mut best: Option<(usize, f64, f64)> = None;
    for t in t1..traj.steps() {
        let ee = chain.fk(&traj.row(t))?.position;
        let d = (ee - obj.center).norm();
        if best.is_none_or(|(_, bd, _)| d < bd) {
            best = Some((t, d, y.dot(&(ee - obj.center))));
        }
    }
    let (t_closest, distance, m_p) = best.expect("t1 < steps");
    Ok(PushMeasure { object, m_p, stem_projection: y.dot(&obj.stem_vector()), t_closest, distance })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Thresholds {
    /// Required clearance: the collision flag holds when `M_c` exceeds it.
    pub m_c_min: Option<f64>,
    /// Require every push measure to be opposite in sign to its stem projection.
    pub push_sign: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `None` when the scene has no static obstacles.
    pub m_c: Option<f64>,
    pub pushes: Vec<PushMeasure>,
    pub thresholds: Thresholds,
    /// `None` when no clearance threshold applies.
    pub collision_pass: Option<bool>,
    /// One per pushable; `None` when signs are not checked.
    pub push_pass: Vec<Option<bool>>,
}

impl MetricsReport {
    /// Every applicable flag holds.
    pub fn passed(&self) -> bool {
        self.collision_pass.unwrap_or(true) && self.push_pass.iter().all(|p| p.unwrap_or(true))
    }
}

/// Runs every measure on `traj` and applies `thresholds`.
pub fn evaluate_scenario(
    traj: &JointTrajectory,
    chain: &KinematicChain,
    scene: &Scene,
    t1: usize,
    thresholds: Thresholds,
) -> Result<MetricsReport> {
    let m_c = if scene.statics.is_empty() { None } else { Some(collision_measure(traj, chain, scene)?) };
    if m_c.is_none() && thresholds.m_c_min.is_some() {
        return Err(Error::UndefinedMetric("clearance threshold set but the scene has no static obstacles".into()));
    }
    let pushes = (0..scene.pushables.len())
        .map(|i| push_measure(traj, chain, scene, i, t1))
        .collect::<Result<Vec<_>>>()?;
    let collision_pass = thresholds.m_c_min.zip(m_c).map(|(min, m)| m > min);
    let push_pass = pushes.iter().map(|p| thresholds.push_sign.then(|| p.opposite_to_stem())).collect();
    Ok(MetricsReport { m_c, pushes, thresholds, collision_pass, push_pass })
}
