//! Scene description schema.
//!
//! ```toml
//! epsilon_s = 0.01                     # safety margin of the obstacle cost (m)
//!
//! [goal]
//! position = [0.55, 0.0, 0.55]
//! orientation = [1.0, 0.0, 0.0, 0.0]   # quaternion w, x, y, z (optional)
//! x_axis = [1.0, 0.0, 0.0]             # goal frame; defaults to the world axes
//! y_axis = [0.0, 1.0, 0.0]
//! z_axis = [0.0, 0.0, 1.0]
//! r_gripper = 0.02
//!
//! [[obstacle]]
//! class = "static"                     # "static" or "avoid"
//! shape = "sphere"                     # "sphere", "capsule" or "box"
//! center = [0.55, 0.32, 0.5]
//! radius = 0.10
//!
//! [[pushable]]
//! center = [0.55, 0.0, 0.45]
//! radius = 0.02
//! anchor = [0.55, 0.05, 0.58]          # stem runs from center to anchor
//! stem_radius = 0.003                  # optional
//!
//! [[stem]]                             # extra connections, optional
//! p0 = [0.55, 0.0, 0.55]
//! p1 = [0.55, 0.0, 0.70]
//! radius = 0.003
//! ```

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::{GoalSpec, ObstacleClass, ObstaclePrimitive, PushableObject, Scene, Shape, DEFAULT_STEM_RADIUS};
use crate::error::{Error, Result};
use crate::kinematics::Pose;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ClassEntry {
    Static,
    Avoid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
enum ShapeEntry {
    Sphere { center: [f64; 3], radius: f64 },
    Capsule { p0: [f64; 3], p1: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
}

#[derive(Debug, Clone, Deserialize)]
struct ObstacleEntry {
    class: ClassEntry,
    #[serde(flatten)]
    shape: ShapeEntry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PushableEntry {
    center: [f64; 3],
    radius: f64,
    anchor: [f64; 3],
    stem_radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StemEntry {
    p0: [f64; 3],
    p1: [f64; 3],
    radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalEntry {
    position: [f64; 3],
    orientation: Option<[f64; 4]>,
    x_axis: Option<[f64; 3]>,
    y_axis: Option<[f64; 3]>,
    z_axis: Option<[f64; 3]>,
    r_gripper: f64,
}

/// Scene section as written in a file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    epsilon_s: f64,
    goal: GoalEntry,
    #[serde(default)]
    obstacle: Vec<ObstacleEntry>,
    #[serde(default)]
    pushable: Vec<PushableEntry>,
    #[serde(default)]
    stem: Vec<StemEntry>,
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::from_row_slice(a)
}

impl ShapeEntry {
    fn to_shape(&self) -> Shape {
        match self {
            ShapeEntry::Sphere { center, radius } => Shape::Sphere { center: v3(center), radius: *radius },
            ShapeEntry::Capsule { p0, p1, radius } => Shape::Capsule { p0: v3(p0), p1: v3(p1), radius: *radius },
            ShapeEntry::Box { center, half_extents } => Shape::Box { center: v3(center), half_extents: v3(half_extents) },
        }
    }
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::from_toml(text, e))
    }

    /// Parses, builds and validates.
    pub fn parse_scene(text: &str) -> Result<Scene> {
        Self::parse(text)?.build()
    }

    pub fn build(&self) -> Result<Scene> {
        let mut statics = Vec::new();
        let mut avoids = Vec::new();
        for o in &self.obstacle {
            let shape = o.shape.to_shape();
            match o.class {
                ClassEntry::Static => statics.push(ObstaclePrimitive { shape, class: ObstacleClass::Static }),
                ClassEntry::Avoid => avoids.push(ObstaclePrimitive { shape, class: ObstacleClass::AvoidDynamic }),
            }
        }
        let pushables = self
            .pushable
            .iter()
            .map(|p| PushableObject {
                center: v3(&p.center),
                radius: p.radius,
                anchor: v3(&p.anchor),
                stem_radius: p.stem_radius.unwrap_or(DEFAULT_STEM_RADIUS),
            })
            .collect();
        let extra_stems = self
            .stem
            .iter()
            .map(|s| Shape::Capsule { p0: v3(&s.p0), p1: v3(&s.p1), radius: s.radius.unwrap_or(DEFAULT_STEM_RADIUS) })
            .collect();

        let g = &self.goal;
        let orientation = match g.orientation {
            Some([w, x, y, z]) => {
                let q = Quaternion::new(w, x, y, z);
                if !(q.norm() > 0.0 && q.norm().is_finite()) {
                    return Err(Error::Config("goal orientation quaternion is zero or non-finite".into()));
                }
                UnitQuaternion::from_quaternion(q)
            }
            None => UnitQuaternion::identity(),
        };
        let frame = Matrix3::from_columns(&[
            v3(&g.x_axis.unwrap_or([1.0, 0.0, 0.0])),
            v3(&g.y_axis.unwrap_or([0.0, 1.0, 0.0])),
            v3(&g.z_axis.unwrap_or([0.0, 0.0, 1.0])),
        ]);
        let scene = Scene {
            statics,
            avoids,
            pushables,
            extra_stems,
            goal: GoalSpec {
                pose: Pose { position: v3(&g.position), orientation },
                frame,
                r_gripper: g.r_gripper,
            },
            epsilon_s: self.epsilon_s,
        };
        scene.validate()?;
        Ok(scene)
    }
}
