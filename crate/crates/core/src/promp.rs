//! Probabilistic movement primitives over joint trajectories.
//!
//! Each joint is an independent Gaussian over `psi` basis-function weights
//! (block-diagonal weight covariance). Conditioning on a via-point is the
//! usual linear-Gaussian update of every joint's weight distribution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::trajectory::JointTrajectory;

/// Observation variance floor applied when a via-point asks for zero noise.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Default ridge added to the learned weight covariance.
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig {
    /// Number of basis functions.
    pub psi: usize,
    /// Width; larger values give wider, more overlapping bumps.
    pub h: f64,
    /// Number of time steps of the represented trajectory.
    pub steps: usize,
}

impl BasisConfig {
    pub fn new(psi: usize, h: f64, steps: usize) -> Result<Self> {
        let cfg = Self { psi, h, steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi < 2 {
            return Err(Error::Config(format!("psi must be >= 2, got {}", self.psi)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("basis width must be > 0, got {}", self.h)));
        }
        if self.steps < 2 {
            return Err(Error::Config(format!("steps must be >= 2, got {}", self.steps)));
        }
        Ok(())
    }

    fn phase(&self, t_index: usize) -> f64 {
        t_index as f64 / (self.steps - 1) as f64
    }

    /// `T × psi` matrix whose rows are [`rbf_basis`] at every time step.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.steps, self.psi);
        for t in 0..self.steps {
            let row = self.activations(self.phase(t));
            m.row_mut(t).copy_from(&row.transpose());
        }
        m
    }

    fn activations(&self, z: f64) -> DVector<f64> {
        // Squared distance is measured in units of the center spacing and
        // divided by h.
        let spacing = (self.psi - 1) as f64;
        let raw = DVector::from_fn(self.psi, |i, _| {
            let d = (z - i as f64 / spacing) * spacing;
            (-d * d / self.h).exp()
        });
        let total = raw.sum();
        raw / total
    }
}

/// Normalized Gaussian activations of all `psi` basis functions at `t_index`.
///
/// Centers are evenly spaced on the phase interval `[0, 1]`; entries are
/// strictly positive and sum to one.
pub fn rbf_basis(config: &BasisConfig, t_index: usize) -> Result<DVector<f64>> {
    if t_index >= config.steps {
        return Err(Error::Index {
            index: t_index,
            len: config.steps,
        });
    }
    Ok(config.activations(config.phase(t_index)))
}

/// A conditioning observation in joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaPoint {
    pub t_index: usize,
    pub value: DVector<f64>,
    /// Observation variance; zero is replaced by [`NOISE_FLOOR`].
    pub noise: f64,
}

impl ViaPoint {
    pub fn new(t_index: usize, value: DVector<f64>, noise: f64) -> Self {
        Self {
            t_index,
            value,
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrompModel {
    pub basis: BasisConfig,
    /// Weight mean, one `psi`-vector per joint.
    pub mean: Vec<DVector<f64>>,
    /// Weight covariance, one `psi × psi` block per joint.
    pub cov: Vec<DMatrix<f64>>,
}

impl PrompModel {
    /// Model with the given per-joint weight means and a shared covariance.
    pub fn from_parts(basis: BasisConfig, mean: Vec<DVector<f64>>, cov: Vec<DMatrix<f64>>) -> Result<Self> {
        basis.validate()?;
        if mean.is_empty() || mean.len() != cov.len() {
            return Err(Error::Shape("mean and covariance joint counts differ".into()));
        }
        for (m, c) in mean.iter().zip(&cov) {
            if m.len() != basis.psi || c.nrows() != basis.psi || c.ncols() != basis.psi {
                return Err(Error::Shape(format!(
                    "weight blocks must be of size {}",
                    basis.psi
                )));
            }
        }
        Ok(Self { basis, mean, cov })
    }

    pub fn dof(&self) -> usize {
        self.mean.len()
    }

    /// Mean joint configuration at `t_index`.
    pub fn mean_at(&self, t_index: usize) -> Result<DVector<f64>> {
        let phi = rbf_basis(&self.basis, t_index)?;
        Ok(DVector::from_iterator(
            self.dof(),
            self.mean.iter().map(|w| phi.dot(w)),
        ))
    }

    /// Largest absolute joint deviation between the mean and a via value.
    pub fn via_residual(&self, via: &ViaPoint) -> Result<f64> {
        let q = self.mean_at(via.t_index)?;
        if q.len() != via.value.len() {
            return Err(Error::Shape(format!(
                "via-point has {} joints, model has {}",
                via.value.len(),
                q.len()
            )));
        }
        Ok((q - &via.value).amax())
    }

    /// Sum of the traces of all weight covariance blocks.
    pub fn total_variance(&self) -> f64 {
        self.cov.iter().map(|c| c.trace()).sum()
    }

    /// Posterior model given a joint-space observation at `via.t_index`.
    pub fn condition(&self, via: &ViaPoint) -> Result<PrompModel> {
        if via.value.len() != self.dof() {
            return Err(Error::Shape(format!(
                "via-point has {} joints, model has {}",
                via.value.len(),
                self.dof()
            )));
        }
        if !(via.noise >= 0.0) {
            return Err(Error::Config(format!("via-point noise must be >= 0, got {}", via.noise)));
        }
        let phi = rbf_basis(&self.basis, via.t_index)?;
        let noise = via.noise.max(NOISE_FLOOR);
        let eye = DMatrix::<f64>::identity(self.basis.psi, self.basis.psi);

        let mut mean = Vec::with_capacity(self.dof());
        let mut cov = Vec::with_capacity(self.dof());
        for (j, (mu, sigma)) in self.mean.iter().zip(&self.cov).enumerate() {
            let s_phi = sigma * &phi;
            let innovation_var = phi.dot(&s_phi) + noise;
            let gain = s_phi / innovation_var;
            let innovation = via.value[j] - phi.dot(mu);
            mean.push(mu + &gain * innovation);

            // Joseph form keeps the update symmetric positive semidefinite.
            let a = &eye - &gain * phi.transpose();
            let mut post = &a * sigma * a.transpose() + &gain * gain.transpose() * noise;
            symmetrize(&mut post);
            cov.push(post);
        }
        Ok(PrompModel {
            basis: self.basis,
            mean,
            cov,
        })
    }

    /// Conditions on each via-point in turn.
    pub fn condition_all<'a>(&self, vias: impl IntoIterator<Item = &'a ViaPoint>) -> Result<PrompModel> {
        let mut model = self.clone();
        for via in vias {
            model = model.condition(via)?;
        }
        Ok(model)
    }

    /// `ξ(t) = φ(t)ᵀ μ_w` for every joint and time step.
    pub fn mean_trajectory(&self) -> JointTrajectory {
        let phi = self.basis.matrix();
        let w = DMatrix::from_fn(self.basis.psi, self.dof(), |i, j| self.mean[j][i]);
        JointTrajectory::new(phi * w).expect("basis config guarantees >= 2 steps")
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Least-squares basis weights of one joint's samples.
fn fit_weights(phi: &DMatrix<f64>, gram: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = phi.transpose() * y;
    gram.clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Shape(format!("weight fit failed: {e}")))
}

/// Fits a primitive to demonstrations by per-joint ridge regression.
///
/// The weight mean is the sample mean over demonstrations; the covariance
/// is the unbiased sample covariance plus `ridge · I`.
pub fn learn_promp(demos: &[JointTrajectory], config: BasisConfig, ridge: f64) -> Result<PrompModel> {
    config.validate()?;
    if demos.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 demonstrations, got {}",
            demos.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be >= 0, got {ridge}")));
    }
    let dof = demos[0].dof();
    for (i, d) in demos.iter().enumerate() {
        if d.steps() != config.steps || d.dof() != dof {
            return Err(Error::Shape(format!(
                "demo {i} is {}x{}, expected {}x{}",
                d.steps(),
                d.dof(),
                config.steps,
                dof
            )));
        }
    }

    let psi = config.psi;
    let phi = config.matrix();
    let gram = phi.transpose() * &phi + DMatrix::identity(psi, psi) * ridge;
    let n = demos.len() as f64;

    let mut mean = Vec::with_capacity(dof);
    let mut cov = Vec::with_capacity(dof);
    for j in 0..dof {
        let weights = demos
            .iter()
            .map(|d| fit_weights(&phi, &gram, &d.matrix().column(j).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        let mu = weights.iter().fold(DVector::zeros(psi), |acc, w| acc + w) / n;
        let mut sigma = DMatrix::zeros(psi, psi);
        for w in &weights {
            let d = w - &mu;
            sigma += &d * d.transpose();
        }
        sigma /= n - 1.0;
        symmetrize(&mut sigma);
        sigma += DMatrix::identity(psi, psi) * ridge;
        mean.push(mu);
        cov.push(sigma);
    }
    Ok(PrompModel {
        basis: config,
        mean,
        cov,
    })
}
