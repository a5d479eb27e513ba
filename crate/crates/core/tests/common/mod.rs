#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use optipromp::kinematics::{BodyPointKind, ChainFile, KinematicChain};
use optipromp::scene::{ObstacleClass, ObstaclePrimitive, PushableObject, Scene, Shape};
use optipromp::JointTrajectory;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scara() -> KinematicChain {
    ChainFile::builtin("scara3").unwrap()
}

pub fn panda() -> KinematicChain {
    ChainFile::builtin("panda7").unwrap()
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Configuration in the middle 60 % of every joint range.
pub fn random_config(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(chain.dof(), |j, _| {
        let (lo, hi) = (chain.q_min[j], chain.q_max[j]);
        let mid = 0.5 * (lo + hi);
        let half = 0.3 * (hi - lo);
        rng.random_range(mid - half..mid + half)
    })
}

/// A ramp between two random configurations with a smooth random bend.
pub fn random_trajectory(chain: &KinematicChain, steps: usize, rng: &mut ChaCha8Rng) -> JointTrajectory {
    let a = random_config(chain, rng);
    let b = random_config(chain, rng);
    let mut traj = JointTrajectory::linear(&a, &b, steps).unwrap();
    for j in 0..chain.dof() {
        let amp = rng.random_range(-0.15..0.15);
        for t in 0..steps {
            let s = std::f64::consts::PI * t as f64 / (steps - 1) as f64;
            traj.matrix_mut()[(t, j)] += amp * s.sin() + rng.random_range(-0.01..0.01);
        }
    }
    traj.clamp(&chain.q_min, &chain.q_max);
    traj
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(unit_vector(rng));
    UnitQuaternion::from_axis_angle(&axis, rng.random_range(-3.0..3.0))
        .to_rotation_matrix()
        .into_inner()
}

/// Random primitive whose surface passes within a few centimetres of `near`.
pub fn shape_near(near: &Vector3<f64>, rng: &mut ChaCha8Rng) -> Shape {
    let dir = unit_vector(rng);
    let gap = rng.random_range(-0.02..0.03);
    match rng.random_range(0..3) {
        0 => {
            let radius = rng.random_range(0.04..0.12);
            Shape::Sphere { center: near + dir * (radius + gap), radius }
        }
        1 => {
            let radius = rng.random_range(0.02..0.06);
            let axis = unit_vector(rng) * rng.random_range(0.05..0.2);
            let c = near + dir * (radius + gap);
            Shape::Capsule { p0: c - axis, p1: c + axis, radius }
        }
        _ => {
            let half = Vector3::new(
                rng.random_range(0.03..0.2),
                rng.random_range(0.03..0.2),
                rng.random_range(0.01..0.05),
            );
            // Face-on placement below the point.
            Shape::Box { center: near - Vector3::new(0.0, 0.0, half.z + gap), half_extents: half }
        }
    }
}

/// Scene built around a trajectory so every cost term has something to do.
pub fn scene_around(chain: &KinematicChain, traj: &JointTrajectory, t1: usize, rng: &mut ChaCha8Rng) -> Scene {
    let set = chain.body_point_set(BodyPointKind::FullWithEE);
    let n = traj.steps();
    let tip = |t: usize| chain.fk(&traj.row(t)).unwrap().position;
    let goal = tip(n - 1) + unit_vector(rng) * rng.random_range(0.02..0.08);
    let mut scene = Scene::empty(goal, rng.random_range(0.02..0.05), rng.random_range(0.01..0.05));
    scene.goal.frame = random_rotation(rng);

    for _ in 0..rng.random_range(1..=3) {
        let t = rng.random_range(0..n);
        let pts = chain.body_points_world(&traj.row(t), &set).unwrap();
        let p = pts[rng.random_range(0..pts.len())];
        scene.statics.push(ObstaclePrimitive { shape: shape_near(&p, rng), class: ObstacleClass::Static });
    }
    for _ in 0..rng.random_range(0..=2) {
        let t = rng.random_range(0..n);
        let pts = chain.body_points_world(&traj.row(t), &set).unwrap();
        let p = pts[rng.random_range(0..pts.len() / 2 + 1)];
        scene.avoids.push(ObstaclePrimitive { shape: shape_near(&p, rng), class: ObstacleClass::AvoidDynamic });
    }
    for _ in 0..rng.random_range(1..=2) {
        let t = rng.random_range(t1..n);
        let center = tip(t) + unit_vector(rng) * rng.random_range(0.0..0.05);
        let anchor = center + unit_vector(rng) * rng.random_range(0.05..0.15);
        scene.pushables.push(PushableObject { center, radius: rng.random_range(0.01..0.03), anchor, stem_radius: 0.003 });
    }
    scene
}

/// Central differences of `f` with respect to every trajectory entry.
pub fn fd_gradient(traj: &JointTrajectory, h: f64, mut f: impl FnMut(&JointTrajectory) -> f64) -> DMatrix<f64> {
    let (n, dof) = (traj.steps(), traj.dof());
    let mut g = DMatrix::zeros(n, dof);
    for t in 0..n {
        for j in 0..dof {
            let mut plus = traj.clone();
            plus.matrix_mut()[(t, j)] += h;
            let mut minus = traj.clone();
            minus.matrix_mut()[(t, j)] -= h;
            g[(t, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

/// Largest entry error relative to the largest entry of the reference.
pub fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(analytic.amax());
    if scale < 1e-12 {
        return 0.0;
    }
    (analytic - reference).amax() / scale
}
