//! Demonstration trajectories: CSV I/O and synthetic minimum-jerk demos.
//!
//! Demonstration CSV layout: a header row of joint names, then one row per
//! time step with one column per joint.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::trajectory::JointTrajectory;

/// A demonstration together with the joint names from its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub joint_names: Vec<String>,
    pub trajectory: JointTrajectory,
}

/// Parses a demonstration from CSV text.
pub fn parse_demo_csv(text: &str) -> Result<Demonstration> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .clone();
    let joint_names: Vec<String> = header.iter().map(str::to_string).collect();
    if joint_names.is_empty() || joint_names.iter().all(String::is_empty) {
        return Err(Error::parse(Some(1), "missing header row with joint names"));
    }
    let dof = joint_names.len();

    let mut values = Vec::new();
    let mut steps = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize);
        if record.len() != dof {
            return Err(Error::parse(
                line,
                format!("expected {dof} columns, found {}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(line, format!("not a number: '{field}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        steps += 1;
    }
    if steps < 2 {
        return Err(Error::parse(None, format!("need at least 2 rows, found {steps}")));
    }
    let trajectory = JointTrajectory::new(DMatrix::from_row_slice(steps, dof, &values))?;
    Ok(Demonstration {
        joint_names,
        trajectory,
    })
}

pub fn load_demo_csv(path: &Path) -> Result<Demonstration> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_demo_csv(&text).map_err(|e| e.with_path(path))
}

pub fn write_demo_csv<W: Write>(out: W, demo: &Demonstration) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    w.write_record(&demo.joint_names).map_err(io)?;
    for q in demo.trajectory.rows() {
        w.write_record(q.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Fifth-order minimum-jerk profile on `s ∈ [0, 1]`.
pub fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Point-to-point minimum-jerk joint trajectory.
pub fn min_jerk_trajectory(start: &DVector<f64>, end: &DVector<f64>, steps: usize) -> Result<JointTrajectory> {
    if start.len() != end.len() {
        return Err(Error::Shape("endpoint lengths differ".into()));
    }
    let n = steps.max(2);
    let m = DMatrix::from_fn(n, start.len(), |t, j| {
        let s = min_jerk(t as f64 / (n - 1) as f64);
        start[j] + s * (end[j] - start[j])
    });
    JointTrajectory::new(m)
}

/// Settings for [`synthesize_demos`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDemos {
    pub count: usize,
    pub steps: usize,
    /// Standard deviation of the endpoint jitter (rad or m).
    pub jitter: f64,
    /// Standard deviation of the amplitudes of two mid-path sine bumps per joint.
    pub bump: f64,
    pub seed: u64,
}

/// Minimum-jerk demonstrations between jittered copies of `start` and `end`,
/// each joint bent by `a·sin(πs) + b·sin(2πs)` with random `a`, `b`.
pub fn synthesize_demos(start: &DVector<f64>, end: &DVector<f64>, cfg: SyntheticDemos) -> Result<Vec<JointTrajectory>> {
    for (name, v) in [("jitter", cfg.jitter), ("bump", cfg.bump)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("demo {name} must be >= 0, got {v}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.jitter).map_err(|e| Error::Config(e.to_string()))?;
    let bump = Normal::new(0.0, cfg.bump).map_err(|e| Error::Config(e.to_string()))?;
    (0..cfg.count)
        .map(|_| {
            let a = start.map(|v| v + noise.sample(&mut rng));
            let b = end.map(|v| v + noise.sample(&mut rng));
            let mut traj = min_jerk_trajectory(&a, &b, cfg.steps)?;
            let n = traj.steps();
            for j in 0..traj.dof() {
                let (k1, k2) = (bump.sample(&mut rng), bump.sample(&mut rng));
                for t in 0..n {
                    let s = std::f64::consts::PI * t as f64 / (n - 1) as f64;
                    traj.matrix_mut()[(t, j)] += k1 * s.sin() + k2 * (2.0 * s).sin();
                }
            }
            Ok(traj)
        })
        .collect()
}
