use nalgebra::{DVector, Matrix3, Vector3};

use super::KinematicChain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub max_iterations: usize,
    /// Position tolerance (m).
    pub tolerance: f64,
    /// Damping factor λ in `Jᵀ (J Jᵀ + λ² I)⁻¹`.
    pub damping: f64,
    /// Largest per-joint change in a single iteration.
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-4,
            damping: 0.01,
            max_step: 0.2,
        }
    }
}

/// Damped least-squares position IK for the tool tip.
///
/// Joints are clamped to their limits after every step. Fails with
/// [`Error::NoConvergence`] carrying the best residual seen.
pub fn ik_position(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    q_seed: &DVector<f64>,
    cfg: &IkConfig,
) -> Result<DVector<f64>> {
    if !target.iter().all(|v| v.is_finite()) {
        return Err(Error::Config("IK target is not finite".into()));
    }
    let mut q = chain.clamp(q_seed);
    let mut best = f64::INFINITY;
    let lambda2 = cfg.damping * cfg.damping;

    for _ in 0..cfg.max_iterations {
        let frames = chain.frames(&q)?;
        let tip = frames.tip.translation.vector;
        let err = target - tip;
        let residual = err.norm();
        best = best.min(residual);
        if residual < cfg.tolerance {
            return Ok(q);
        }
        let jac = chain.jacobian_at(&frames, chain.dof(), &tip);
        let jjt: Matrix3<f64> = &jac * jac.transpose() + Matrix3::identity() * lambda2;
        let Some(inv) = jjt.try_inverse() else {
            break;
        };
        let mut dq = jac.transpose() * (inv * err);
        let largest = dq.amax();
        if largest > cfg.max_step {
            dq *= cfg.max_step / largest;
        }
        q = chain.clamp(&(q + dq));
    }
    let residual = (target - chain.fk(&q)?.position).norm();
    best = best.min(residual);
    if residual < cfg.tolerance {
        return Ok(q);
    }
    Err(Error::NoConvergence { residual: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::ChainFile;

    #[test]
    fn seed_on_target_is_returned() {
        let chain = ChainFile::builtin("panda7").unwrap();
        let seed = DVector::from_vec(vec![0.1, -0.3, 0.2, -2.0, 0.1, 1.8, 0.3]);
        let target = chain.fk(&seed).unwrap().position;
        let q = ik_position(&chain, &target, &seed, &IkConfig::default()).unwrap();
        assert!((q - seed).amax() < 1e-9);
    }

    #[test]
    fn scara_reaches_reachable_target() {
        let chain = ChainFile::builtin("scara3").unwrap();
        let target = Vector3::new(0.35, 0.25, 0.65);
        let seed = DVector::from_vec(vec![0.2, 0.5, 0.0]);
        let q = ik_position(&chain, &target, &seed, &IkConfig::default()).unwrap();
        assert!((chain.fk(&q).unwrap().position - target).norm() < 1e-4);
        assert!(chain.within_limits(&q));
    }

    #[test]
    fn panda_reaches_reachable_target() {
        let chain = ChainFile::builtin("panda7").unwrap();
        let seed = DVector::from_vec(vec![0.0, -0.3, 0.0, -2.2, 0.0, 2.0, 0.8]);
        let target = Vector3::new(0.5, 0.1, 0.5);
        let q = ik_position(&chain, &target, &seed, &IkConfig::default()).unwrap();
        assert!((chain.fk(&q).unwrap().position - target).norm() < 1e-4);
        assert!(chain.within_limits(&q));
    }

    #[test]
    fn unreachable_target_fails_with_residual() {
        let chain = ChainFile::builtin("scara3").unwrap();
        let far = chain.shoulder() + Vector3::new(chain.reach() + 0.2, 0.0, 0.0);
        match ik_position(&chain, &far, &DVector::zeros(3), &IkConfig::default()) {
            Err(Error::NoConvergence { residual }) => assert!(residual > 0.1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
