//! Serial-chain kinematics.
//!
//! A chain is a list of single-axis joints, each preceded by a fixed
//! transform from the previous frame, followed by a fixed flange transform
//! and a tool (end-effector link) transform. Every joint link and the tool
//! link carry body points used for obstacle queries.

mod file;
mod ik;

use nalgebra::{DVector, Isometry3, Matrix3xX, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use file::{ChainFile, BUILTIN_PANDA7, BUILTIN_SCARA3};
pub use ik::{ik_position, IkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub kind: JointKind,
    /// Joint axis in the joint's own frame.
    pub axis: Unit<Vector3<f64>>,
    /// Fixed transform from the previous frame to this joint's frame.
    pub origin: Isometry3<f64>,
    pub body_radius: f64,
    pub body_points: usize,
}

/// End-effector link: flange offset from the last joint plus the tool segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Tool {
    pub flange: Isometry3<f64>,
    pub tip: Isometry3<f64>,
    pub body_radius: f64,
    pub body_points: usize,
}

/// A sampled point on a robot segment.
///
/// Segments `0..dof` are the joint links; segment `dof` is the tool link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPoint {
    /// Position in the full body-point list (stable identity).
    pub id: usize,
    pub segment: usize,
    pub local: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyPointKind {
    /// Every joint link plus the end-effector link.
    FullWithEE,
    /// Joint links `1..n-1` only: excludes the last joint link and the end effector.
    BodyMinusLastLink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyPointSet {
    pub kind: BodyPointKind,
    pub points: Vec<BodyPoint>,
}

impl BodyPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    /// Position followed by fixed-axis roll, pitch, yaw.
    pub fn to_vector6(&self) -> [f64; 6] {
        let (r, p, y) = self.orientation.euler_angles();
        [self.position.x, self.position.y, self.position.z, r, p, y]
    }
}

impl From<Isometry3<f64>> for Pose {
    fn from(iso: Isometry3<f64>) -> Self {
        Pose {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }
}

/// World frames of a chain at one configuration.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// One frame per joint, after that joint's motion.
    pub joints: Vec<Isometry3<f64>>,
    pub flange: Isometry3<f64>,
    pub tip: Isometry3<f64>,
}

impl ChainFrames {
    /// Frame that body points of `segment` are expressed in.
    pub fn segment(&self, segment: usize) -> &Isometry3<f64> {
        self.joints.get(segment).unwrap_or(&self.flange)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub base: Isometry3<f64>,
    pub links: Vec<Link>,
    pub tool: Tool,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qd_min: DVector<f64>,
    pub qd_max: DVector<f64>,
    body: Vec<BodyPoint>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        base: Isometry3<f64>,
        links: Vec<Link>,
        tool: Tool,
        limits: [DVector<f64>; 4],
    ) -> Result<Self> {
        let [q_min, q_max, qd_min, qd_max] = limits;
        let n = links.len();
        if n == 0 {
            return Err(Error::Config("chain has no joints".into()));
        }
        for v in [&q_min, &q_max, &qd_min, &qd_max] {
            if v.len() != n {
                return Err(Error::Shape(format!("limit vector of length {} for {n} joints", v.len())));
            }
        }
        for j in 0..n {
            if !(q_min[j] < q_max[j]) {
                return Err(Error::Config(format!("joint {}: q_min must be < q_max", links[j].name)));
            }
            if !(qd_min[j] < qd_max[j]) {
                return Err(Error::Config(format!("joint {}: qd_min must be < qd_max", links[j].name)));
            }
        }
        for l in &links {
            if l.body_points == 0 || !(l.body_radius >= 0.0) {
                return Err(Error::Config(format!("link {} needs >= 1 body point and radius >= 0", l.name)));
            }
        }
        if tool.body_points == 0 || !(tool.body_radius >= 0.0) {
            return Err(Error::Config("tool needs >= 1 body point and radius >= 0".into()));
        }

        let mut chain = Self {
            name: name.into(),
            base,
            links,
            tool,
            q_min,
            q_max,
            qd_min,
            qd_max,
            body: Vec::new(),
        };
        chain.body = chain.sample_body_points();
        Ok(chain)
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Segment end points in the segment's own frame.
    fn segment_end(&self, segment: usize) -> Vector3<f64> {
        if segment + 1 < self.dof() {
            self.links[segment + 1].origin.translation.vector
        } else if segment + 1 == self.dof() {
            self.tool.flange.translation.vector
        } else {
            self.tool.tip.translation.vector
        }
    }

    fn sample_body_points(&self) -> Vec<BodyPoint> {
        let mut out = Vec::new();
        for segment in 0..=self.dof() {
            let (count, radius) = match self.links.get(segment) {
                Some(l) => (l.body_points, l.body_radius),
                None => (self.tool.body_points, self.tool.body_radius),
            };
            let end = self.segment_end(segment);
            for k in 0..count {
                let s = if count == 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
                out.push(BodyPoint {
                    id: out.len(),
                    segment,
                    local: end * s,
                    radius,
                });
            }
        }
        out
    }

    pub fn body_point_set(&self, kind: BodyPointKind) -> BodyPointSet {
        let points = match kind {
            BodyPointKind::FullWithEE => self.body.clone(),
            BodyPointKind::BodyMinusLastLink => {
                let last = self.dof() - 1;
                self.body.iter().copied().filter(|p| p.segment < last).collect()
            }
        };
        BodyPointSet { kind, points }
    }

    fn check_len(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Shape(format!(
                "configuration has {} entries, chain '{}' has {} joints",
                q.len(),
                self.name,
                self.dof()
            )));
        }
        Ok(())
    }

    /// World frames of every joint, the flange and the tool tip.
    pub fn frames(&self, q: &DVector<f64>) -> Result<ChainFrames> {
        self.check_len(q)?;
        let mut joints = Vec::with_capacity(self.dof());
        let mut current = self.base;
        for (link, &qi) in self.links.iter().zip(q.iter()) {
            let motion = match link.kind {
                JointKind::Revolute => Isometry3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_axis_angle(&link.axis, qi),
                ),
                JointKind::Prismatic => Isometry3::from_parts(
                    Translation3::from(link.axis.into_inner() * qi),
                    UnitQuaternion::identity(),
                ),
            };
            current = current * link.origin * motion;
            joints.push(current);
        }
        let flange = current * self.tool.flange;
        let tip = flange * self.tool.tip;
        Ok(ChainFrames { joints, flange, tip })
    }

    /// End-effector (tool tip) pose.
    pub fn fk(&self, q: &DVector<f64>) -> Result<Pose> {
        Ok(self.frames(q)?.tip.into())
    }

    /// World positions of every point in `set`, in set order.
    pub fn body_points_world(&self, q: &DVector<f64>, set: &BodyPointSet) -> Result<Vec<Vector3<f64>>> {
        let frames = self.frames(q)?;
        Ok(set
            .points
            .iter()
            .map(|p| frames.segment(p.segment) * nalgebra::Point3::from(p.local))
            .map(|p| p.coords)
            .collect())
    }

    /// Position Jacobian (`3 × dof`) of a world point rigidly attached to `segment`.
    pub fn jacobian_at(&self, frames: &ChainFrames, segment: usize, world: &Vector3<f64>) -> Matrix3xX<f64> {
        let n = self.dof();
        let mut jac = Matrix3xX::zeros(n);
        let last = segment.min(n - 1);
        for (j, link) in self.links.iter().enumerate().take(last + 1) {
            let frame = &frames.joints[j];
            let axis = frame.rotation * link.axis.into_inner();
            let col = match link.kind {
                JointKind::Revolute => axis.cross(&(world - frame.translation.vector)),
                JointKind::Prismatic => axis,
            };
            jac.set_column(j, &col);
        }
        jac
    }

    /// Position Jacobian of one body point at configuration `q`.
    pub fn jacobian_position(&self, q: &DVector<f64>, point: &BodyPoint) -> Result<Matrix3xX<f64>> {
        if point.segment > self.dof() {
            return Err(Error::Index {
                index: point.segment,
                len: self.dof() + 1,
            });
        }
        let frames = self.frames(q)?;
        let world = (frames.segment(point.segment) * nalgebra::Point3::from(point.local)).coords;
        Ok(self.jacobian_at(&frames, point.segment, &world))
    }

    /// Position Jacobian of the tool tip.
    pub fn jacobian_tip(&self, q: &DVector<f64>) -> Result<Matrix3xX<f64>> {
        let frames = self.frames(q)?;
        let tip = frames.tip.translation.vector;
        Ok(self.jacobian_at(&frames, self.dof(), &tip))
    }

    pub fn clamp(&self, q: &DVector<f64>) -> DVector<f64> {
        q.zip_zip_map(&self.q_min, &self.q_max, |v, lo, hi| v.clamp(lo, hi))
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        q.iter()
            .zip(self.q_min.iter().zip(self.q_max.iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Upper bound on the distance from the first joint to the tool tip.
    pub fn reach(&self) -> f64 {
        let mut total = 0.0;
        for (j, link) in self.links.iter().enumerate() {
            if j > 0 {
                total += link.origin.translation.vector.norm();
            }
            if link.kind == JointKind::Prismatic {
                total += self.q_min[j].abs().max(self.q_max[j].abs());
            }
        }
        total + self.tool.flange.translation.vector.norm() + self.tool.tip.translation.vector.norm()
    }

    /// World position of the first joint, the origin of [`Self::reach`].
    pub fn shoulder(&self) -> Vector3<f64> {
        (self.base * self.links[0].origin).translation.vector
    }
}
