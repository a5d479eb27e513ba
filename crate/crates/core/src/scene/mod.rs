//! Cluttered environments and the geometric queries the costs need.

mod file;
pub mod geometry;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::Pose;

pub use file::SceneFile;

/// Finite-difference step for [`Scene::sdf_gradient`].
pub const SDF_GRADIENT_STEP: f64 = 1e-5;

/// Default stem radius (m).
pub const DEFAULT_STEM_RADIUS: f64 = 0.003;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vector3<f64>, radius: f64 },
    Capsule { p0: Vector3<f64>, p1: Vector3<f64>, radius: f64 },
    /// Axis-aligned box.
    Box { center: Vector3<f64>, half_extents: Vector3<f64> },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Shape::Sphere { center, radius } => finite(center) && *radius > 0.0 && radius.is_finite(),
            Shape::Capsule { p0, p1, radius } => finite(p0) && finite(p1) && *radius > 0.0 && radius.is_finite(),
            Shape::Box { center, half_extents } => {
                finite(center) && finite(half_extents) && half_extents.iter().all(|h| *h > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid obstacle geometry: {self:?}")))
        }
    }

    /// Exact signed distance: negative inside, zero on the surface.
    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (x - center).norm() - radius,
            Shape::Capsule { p0, p1, radius } => geometry::point_segment_distance(x, p0, p1) - radius,
            Shape::Box { center, half_extents } => {
                let q = (x - center).abs() - half_extents;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
        }
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        match self {
            Shape::Sphere { center, radius } => (x - center).norm_squared() < radius * radius,
            Shape::Capsule { p0, p1, radius } => geometry::point_segment_distance(x, p0, p1) < *radius,
            Shape::Box { center, half_extents } => {
                let d = (x - center).abs();
                d.x < half_extents.x && d.y < half_extents.y && d.z < half_extents.z
            }
        }
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Shape {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere { center: center + offset, radius },
            Shape::Capsule { p0, p1, radius } => Shape::Capsule { p0: p0 + offset, p1: p1 + offset, radius },
            Shape::Box { center, half_extents } => Shape::Box { center: center + offset, half_extents },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleClass {
    Static,
    AvoidDynamic,
    Pushable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstaclePrimitive {
    pub shape: Shape,
    pub class: ObstacleClass,
}

/// Which obstacle classes a distance query considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassFilter {
    pub statics: bool,
    pub avoids: bool,
    pub pushables: bool,
}

impl ClassFilter {
    pub const STATIC: Self = Self { statics: true, avoids: false, pushables: false };
    pub const AVOID: Self = Self { statics: false, avoids: true, pushables: false };
    /// Everything the robot body (minus the end effector) has to keep away from.
    pub const DYNAMIC: Self = Self { statics: false, avoids: true, pushables: true };
    pub const STATIC_AND_AVOID: Self = Self { statics: true, avoids: true, pushables: false };
    pub const ALL: Self = Self { statics: true, avoids: true, pushables: true };
}

/// An occluding object the end effector may displace, hanging from a stem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushableObject {
    pub center: Vector3<f64>,
    pub radius: f64,
    /// Stem anchor point; the stem runs from `center` to `anchor`.
    pub anchor: Vector3<f64>,
    pub stem_radius: f64,
}

impl PushableObject {
    pub fn shape(&self) -> Shape {
        Shape::Sphere { center: self.center, radius: self.radius }
    }

    pub fn stem(&self) -> Shape {
        Shape::Capsule { p0: self.center, p1: self.anchor, radius: self.stem_radius }
    }

    /// Vector `S` from the object center along its stem.
    pub fn stem_vector(&self) -> Vector3<f64> {
        self.anchor - self.center
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSpec {
    pub pose: Pose,
    /// Columns are `x_g`, `y_g`, `z_g`.
    pub frame: Matrix3<f64>,
    pub r_gripper: f64,
}

impl GoalSpec {
    pub fn position(&self) -> Vector3<f64> {
        self.pose.position
    }

    /// Coordinates of a world vector in the goal frame.
    pub fn to_frame(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.frame.transpose() * v
    }

    pub fn y_axis(&self) -> Vector3<f64> {
        self.frame.column(1).into_owned()
    }

    pub fn validate(&self) -> Result<()> {
        let gram = self.frame.transpose() * self.frame;
        if (gram - Matrix3::identity()).amax() > 1e-9 {
            return Err(Error::Config("goal frame axes are not orthonormal".into()));
        }
        if !(self.r_gripper > 0.0 && self.r_gripper.is_finite()) {
            return Err(Error::Config("gripper radius must be > 0".into()));
        }
        if !self.pose.position.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("goal position is not finite".into()));
        }
        Ok(())
    }
}

/// A stem segment passing near a query segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StemHit {
    /// Index into [`Scene::connections`].
    pub stem: usize,
    /// Closest point on the query segment.
    pub point: Vector3<f64>,
    /// Distance from that point to the stem axis.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub statics: Vec<ObstaclePrimitive>,
    pub avoids: Vec<ObstaclePrimitive>,
    pub pushables: Vec<PushableObject>,
    /// Stems not owned by a pushable object (e.g. the target's own peduncle).
    pub extra_stems: Vec<Shape>,
    pub goal: GoalSpec,
    pub epsilon_s: f64,
}

impl Scene {
    /// Checks every invariant, including that the goal lies outside all statics.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_s > 0.0 && self.epsilon_s.is_finite()) {
            return Err(Error::Config("epsilon_s must be > 0".into()));
        }
        self.goal.validate()?;
        for (list, class) in [(&self.statics, ObstacleClass::Static), (&self.avoids, ObstacleClass::AvoidDynamic)] {
            for o in list.iter() {
                if o.class != class {
                    return Err(Error::Config(format!("obstacle {o:?} filed under {class:?}")));
                }
                o.shape.validate()?;
            }
        }
        for p in &self.pushables {
            p.shape().validate()?;
            if p.stem_radius > 0.0 && p.anchor != p.center {
                p.stem().validate()?;
            } else {
                return Err(Error::Config("pushable stem needs radius > 0 and a distinct anchor".into()));
            }
        }
        for s in &self.extra_stems {
            if !matches!(s, Shape::Capsule { .. }) {
                return Err(Error::Config("stems must be capsules".into()));
            }
            s.validate()?;
        }
        if self.sdf(&self.goal.position(), ClassFilter::STATIC) <= 0.0 {
            return Err(Error::Config("target inside static obstacle".into()));
        }
        Ok(())
    }

    fn shapes(&self, filter: ClassFilter) -> impl Iterator<Item = Shape> + '_ {
        let statics = self.statics.iter().filter(move |_| filter.statics).map(|o| o.shape);
        let avoids = self.avoids.iter().filter(move |_| filter.avoids).map(|o| o.shape);
        let pushables = self.pushables.iter().filter(move |_| filter.pushables).map(|p| p.shape());
        statics.chain(avoids).chain(pushables)
    }

    /// Union signed distance over the selected classes; `+∞` when none exist.
    pub fn sdf(&self, x: &Vector3<f64>, filter: ClassFilter) -> f64 {
        self.shapes(filter)
            .map(|s| s.signed_distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Central finite-difference gradient of [`Scene::sdf`].
    pub fn sdf_gradient(&self, x: &Vector3<f64>, filter: ClassFilter) -> Vector3<f64> {
        let h = SDF_GRADIENT_STEP;
        let mut g = Vector3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            g[k] = (self.sdf(&(x + e), filter) - self.sdf(&(x - e), filter)) / (2.0 * h);
        }
        g
    }

    pub fn has_class(&self, filter: ClassFilter) -> bool {
        self.shapes(filter).next().is_some()
    }

    /// Exact minimum of the union SDF over `points`; `+∞` when no obstacle matches.
    pub fn nearest_static_distance(&self, points: &[Vector3<f64>], filter: ClassFilter) -> f64 {
        points
            .iter()
            .map(|p| self.sdf(p, filter))
            .fold(f64::INFINITY, f64::min)
    }

    /// The connection set: every pushable's stem, then the extra stems.
    pub fn connections(&self) -> Vec<Shape> {
        self.pushables
            .iter()
            .map(PushableObject::stem)
            .chain(self.extra_stems.iter().copied())
            .collect()
    }

    /// Stems that segment `[a, b]` passes within stem radius of, in stem order.
    pub fn segment_stem_intersections(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Vec<StemHit> {
        self.connections()
            .iter()
            .enumerate()
            .filter_map(|(stem, shape)| {
                let Shape::Capsule { p0, p1, radius } = shape else {
                    return None;
                };
                let (on_query, on_stem) = geometry::closest_between_segments(a, b, p0, p1);
                let distance = (on_query - on_stem).norm();
                (distance <= *radius).then_some(StemHit { stem, point: on_query, distance })
            })
            .collect()
    }

    /// Crossings of the segment `[a, b]` with one pushable's own stem (0 or 1).
    pub fn own_stem_crossings(&self, pushable: usize, a: &Vector3<f64>, b: &Vector3<f64>) -> usize {
        let p = &self.pushables[pushable];
        let (on_query, on_stem) = geometry::closest_between_segments(a, b, &p.center, &p.anchor);
        usize::from((on_query - on_stem).norm() <= p.stem_radius)
    }

    /// Preferred drift side (`+1` or `-1` along `y_g`) for a pushable object.
    ///
    /// Probes the segments from `center ± r_gripper · y_g` to the goal against
    /// the object's stem and picks the side with fewer crossings. `None` on a tie.
    pub fn drift_side(&self, pushable: usize) -> Option<f64> {
        let p = &self.pushables[pushable];
        let y = self.goal.y_axis() * self.goal.r_gripper;
        let goal = self.goal.position();
        let plus = self.own_stem_crossings(pushable, &(p.center + y), &goal);
        let minus = self.own_stem_crossings(pushable, &(p.center - y), &goal);
        match plus.cmp(&minus) {
            std::cmp::Ordering::Less => Some(1.0),
            std::cmp::Ordering::Greater => Some(-1.0),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Copy of the scene shifted rigidly by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Scene {
        let shift = |o: &ObstaclePrimitive| ObstaclePrimitive { shape: o.shape.translated(offset), class: o.class };
        Scene {
            statics: self.statics.iter().map(shift).collect(),
            avoids: self.avoids.iter().map(shift).collect(),
            pushables: self
                .pushables
                .iter()
                .map(|p| PushableObject { center: p.center + offset, anchor: p.anchor + offset, ..*p })
                .collect(),
            extra_stems: self.extra_stems.iter().map(|s| s.translated(offset)).collect(),
            goal: GoalSpec {
                pose: Pose { position: self.goal.pose.position + offset, orientation: self.goal.pose.orientation },
                ..self.goal
            },
            epsilon_s: self.epsilon_s,
        }
    }

    /// Minimal scene with a goal at `position`, identity frame and no obstacles.
    pub fn empty(position: Vector3<f64>, r_gripper: f64, epsilon_s: f64) -> Scene {
        Scene {
            statics: Vec::new(),
            avoids: Vec::new(),
            pushables: Vec::new(),
            extra_stems: Vec::new(),
            goal: GoalSpec {
                pose: Pose { position, orientation: UnitQuaternion::identity() },
                frame: Matrix3::identity(),
                r_gripper,
            },
            epsilon_s,
        }
    }
}
