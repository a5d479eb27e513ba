//! Chain definition files.
//!
//! ```toml
//! name = "scara3"
//! base = { xyz = [0.0, 0.0, 0.0], rpy = [0.0, 0.0, 0.0] }   # optional
//!
//! [[joint]]
//! name = "shoulder"
//! type = "revolute"            # or "prismatic"
//! axis = [0.0, 0.0, 1.0]
//! xyz = [0.0, 0.0, 0.40]       # offset from the previous frame (m)
//! rpy = [0.0, 0.0, 0.0]        # fixed-axis roll, pitch, yaw (rad)
//! limits = [-2.6, 2.6]
//! velocity_limits = [-2.0, 2.0]
//! body_radius = 0.05
//! body_points = 5
//!
//! [flange]
//! xyz = [0.0, 0.0, 0.05]
//!
//! [tool]
//! xyz = [0.0, 0.0, 0.10]
//! body_radius = 0.04
//! body_points = 5
//! ```

use std::path::Path;

use nalgebra::{DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::{JointKind, KinematicChain, Link, Tool};
use crate::error::{Error, Result};

pub const BUILTIN_SCARA3: &str = include_str!("../../data/scara3.toml");
pub const BUILTIN_PANDA7: &str = include_str!("../../data/panda7.toml");

const DEFAULT_BODY_POINTS: usize = 5;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Placement {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase")]
enum JointType {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntry {
    name: String,
    #[serde(rename = "type")]
    kind: JointType,
    axis: [f64; 3],
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    limits: [f64; 2],
    velocity_limits: [f64; 2],
    #[serde(default)]
    body_radius: f64,
    #[serde(default = "default_points")]
    body_points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolEntry {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    #[serde(default)]
    body_radius: f64,
    #[serde(default = "default_points")]
    body_points: usize,
}

fn default_points() -> usize {
    DEFAULT_BODY_POINTS
}

/// Raw chain definition as read from a file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    name: String,
    base: Option<Placement>,
    joint: Vec<JointEntry>,
    flange: Option<Placement>,
    tool: ToolEntry,
}

fn finite3(v: &[f64; 3], what: &str) -> Result<Vector3<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vector3::from_row_slice(v))
    } else {
        Err(Error::Config(format!("{what} has a non-finite entry")))
    }
}

fn placement(xyz: &[f64; 3], rpy: &[f64; 3], what: &str) -> Result<Isometry3<f64>> {
    let t = finite3(xyz, what)?;
    let r = finite3(rpy, what)?;
    Ok(Isometry3::from_parts(
        Translation3::from(t),
        UnitQuaternion::from_euler_angles(r.x, r.y, r.z),
    ))
}

impl ChainFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::from_toml(text, e))
    }

    /// Parses and builds in one go.
    pub fn parse_chain(text: &str) -> Result<KinematicChain> {
        Self::parse(text)?.build()
    }

    pub fn load(path: &Path) -> Result<KinematicChain> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_chain(&text).map_err(|e| e.with_path(path))
    }

    /// One of the bundled chains: `"scara3"` or `"panda7"`.
    pub fn builtin(name: &str) -> Result<KinematicChain> {
        let text = match name {
            "scara3" => BUILTIN_SCARA3,
            "panda7" => BUILTIN_PANDA7,
            other => return Err(Error::Config(format!("unknown built-in chain '{other}'"))),
        };
        Self::parse_chain(text)
    }

    pub fn build(&self) -> Result<KinematicChain> {
        if self.joint.is_empty() {
            return Err(Error::Config("chain has no [[joint]] entries".into()));
        }
        let base = match &self.base {
            Some(p) => placement(&p.xyz, &p.rpy, "base")?,
            None => Isometry3::identity(),
        };
        let n = self.joint.len();
        let mut links = Vec::with_capacity(n);
        let mut limits = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
        for (j, e) in self.joint.iter().enumerate() {
            let axis = finite3(&e.axis, &format!("joint {} axis", e.name))?;
            let axis = Unit::try_new(axis, 1e-12)
                .ok_or_else(|| Error::Config(format!("joint {} has a zero axis", e.name)))?;
            let values = [e.limits[0], e.limits[1], e.velocity_limits[0], e.velocity_limits[1]];
            if values.iter().any(|v| !v.is_finite()) || !e.body_radius.is_finite() {
                return Err(Error::Config(format!("joint {} has a non-finite limit or radius", e.name)));
            }
            limits[0][j] = e.limits[0];
            limits[1][j] = e.limits[1];
            limits[2][j] = e.velocity_limits[0];
            limits[3][j] = e.velocity_limits[1];
            links.push(Link {
                name: e.name.clone(),
                kind: match e.kind {
                    JointType::Revolute => JointKind::Revolute,
                    JointType::Prismatic => JointKind::Prismatic,
                },
                axis,
                origin: placement(&e.xyz, &e.rpy, &format!("joint {}", e.name))?,
                body_radius: e.body_radius,
                body_points: e.body_points,
            });
        }
        let flange = match &self.flange {
            Some(p) => placement(&p.xyz, &p.rpy, "flange")?,
            None => Isometry3::identity(),
        };
        if !self.tool.body_radius.is_finite() {
            return Err(Error::Config("tool radius is non-finite".into()));
        }
        let tool = Tool {
            flange,
            tip: placement(&self.tool.xyz, &self.tool.rpy, "tool")?,
            body_radius: self.tool.body_radius,
            body_points: self.tool.body_points,
        };
        KinematicChain::new(self.name.clone(), base, links, tool, limits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        assert_eq!(ChainFile::builtin("scara3").unwrap().dof(), 3);
        assert_eq!(ChainFile::builtin("panda7").unwrap().dof(), 7);
        assert!(ChainFile::builtin("ur5").is_err());
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "name = \"x\"\n[[joint]]\nname = \"a\"\ntype = \"revolute\"\naxis = [0, 0, \n";
        match ChainFile::parse(text).unwrap_err() {
            Error::Parse { line, .. } => assert!(line.is_some()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inverted_limits() {
        let text = BUILTIN_SCARA3.replacen("limits = [-2.6, 2.6]", "limits = [2.6, -2.6]", 1);
        assert_ne!(text, BUILTIN_SCARA3);
        assert!(matches!(ChainFile::parse_chain(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_joint_type() {
        let text = BUILTIN_SCARA3.replacen("\"prismatic\"", "\"spherical\"", 1);
        assert!(matches!(ChainFile::parse(&text), Err(Error::Parse { .. })));
    }
}
