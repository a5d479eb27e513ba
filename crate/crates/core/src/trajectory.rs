//! Discretized joint-space paths.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A `T × dof` joint-space path sampled on a uniform time grid.
///
/// Row `t` is the configuration at time `t * dt`. The default grid spans the
/// unit interval, so `dt = 1 / (T - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    points: DMatrix<f64>,
    dt: f64,
}

impl JointTrajectory {
    /// Wraps a `T × dof` matrix on the unit time interval.
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::Shape(format!(
                "trajectory needs at least 2 time steps, got {}",
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::Shape("trajectory has zero joints".into()));
        }
        let dt = 1.0 / (points.nrows() - 1) as f64;
        Ok(Self { points, dt })
    }

    pub fn from_rows(rows: &[DVector<f64>]) -> Result<Self> {
        let dof = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dof) {
            return Err(Error::Shape("rows have differing joint counts".into()));
        }
        let m = DMatrix::from_fn(rows.len(), dof, |t, j| rows[t][j]);
        Self::new(m)
    }

    /// Straight joint-space line from `start` to `end` over `steps` samples.
    pub fn linear(start: &DVector<f64>, end: &DVector<f64>, steps: usize) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::Shape("endpoint lengths differ".into()));
        }
        let n = steps.max(2);
        let m = DMatrix::from_fn(n, start.len(), |t, j| {
            let s = t as f64 / (n - 1) as f64;
            start[j] + s * (end[j] - start[j])
        });
        Self::new(m)
    }

    pub fn steps(&self) -> usize {
        self.points.nrows()
    }

    pub fn dof(&self) -> usize {
        self.points.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.points
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.points
    }

    /// Configuration at time index `t` as an owned vector.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.points.row(t).transpose()
    }

    pub fn set_row(&mut self, t: usize, q: &DVector<f64>) {
        for j in 0..self.dof() {
            self.points[(t, j)] = q[j];
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.steps()).map(move |t| self.row(t))
    }

    /// Copy with the time order reversed.
    pub fn reversed(&self) -> Self {
        let n = self.steps();
        let m = DMatrix::from_fn(n, self.dof(), |t, j| self.points[(n - 1 - t, j)]);
        Self {
            points: m,
            dt: self.dt,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|v| v.is_finite())
    }

    /// Clamps every sample to the box `[lo, hi]` (per joint).
    pub fn clamp(&mut self, lo: &DVector<f64>, hi: &DVector<f64>) {
        for t in 0..self.steps() {
            for j in 0..self.dof() {
                let v = &mut self.points[(t, j)];
                *v = v.clamp(lo[j], hi[j]);
            }
        }
    }

    /// Forward-difference joint velocities, one row per interval (`T - 1` rows).
    pub fn velocities(&self) -> DMatrix<f64> {
        let n = self.steps();
        DMatrix::from_fn(n - 1, self.dof(), |t, j| {
            (self.points[(t + 1, j)] - self.points[(t, j)]) / self.dt
        })
    }
}
