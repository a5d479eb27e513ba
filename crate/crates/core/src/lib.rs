//! Trajectory optimization seeded by probabilistic movement primitives, for
//! reaching targets hidden among occluding objects.

pub mod costs;
pub mod demos;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod optimizer;
pub mod promp;
pub mod scenario;
pub mod scene;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::JointTrajectory;
