use nalgebra::DVector;

use super::lbfgsb;
use crate::error::{Error, Result};

/// Maximum step halvings before a stage gives up on an iteration.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GradientDescent,
    BoundedQuasiNewton,
    TrustRegion,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GradientDescent => "gradient-descent",
            Method::BoundedQuasiNewton => "bounded-quasi-newton",
            Method::TrustRegion => "trust-region",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub max_iters: usize,
    /// Initial step size for gradient descent.
    pub gamma: f64,
    /// Relative-improvement (descent, trust region) or projected-gradient
    /// (quasi-Newton) stopping threshold.
    pub tolerance: f64,
    /// Initial trust radius (Euclidean norm of the step).
    pub radius: f64,
    /// Quasi-Newton memory.
    pub history: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self { max_iters: 50, gamma: 1e-2, tolerance: 1e-6, radius: 0.05, history: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    /// Improvement or projected gradient fell below tolerance.
    Converged,
    /// No decrease found after [`MAX_HALVINGS`] halvings.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Iterate<B> {
    pub x: DVector<f64>,
    pub value: f64,
    pub info: B,
    /// Step length (gradient descent: γ, trust region: radius, quasi-Newton: α) that produced it.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome<B> {
    /// Starting point first, then every accepted iterate.
    pub iterates: Vec<Iterate<B>>,
    pub stop: StopReason,
}

impl<B> Outcome<B> {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn last(&self) -> &Iterate<B> {
        self.iterates.last().expect("outcome always holds the start point")
    }
}

/// Objective callback: value, gradient and caller-side bookkeeping.
pub trait Problem {
    type Info: Clone;
    fn eval(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, Self::Info)>;

    /// Trial points failing this are rejected like an increase in value.
    fn admissible(&self, _info: &Self::Info) -> bool {
        true
    }
}

impl<B: Clone, F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>, B)>> Problem for F {
    type Info = B;
    fn eval(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, B)> {
        self(x)
    }
}

pub(crate) fn checked<P: Problem>(
    problem: &mut P,
    x: &DVector<f64>,
    iteration: usize,
) -> Result<(f64, DVector<f64>, P::Info)> {
    let (f, g, info) = problem.eval(x)?;
    if !f.is_finite() {
        return Err(Error::Numerical { iteration, what: "objective" });
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical { iteration, what: "gradient" });
    }
    Ok((f, g, info))
}

pub(crate) fn project(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    x.zip_zip_map(lo, hi, |v, l, h| v.clamp(l, h))
}

/// Gradient with components that push against an active bound removed.
pub(crate) fn projected_gradient(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let blocked = (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0);
        if blocked { 0.0 } else { g[i] }
    })
}

fn improved_enough(before: f64, after: f64, tol: f64) -> bool {
    (before - after) > tol * before.abs().max(f64::MIN_POSITIVE)
}

/// Minimizes `problem` inside the box `[lo, hi]`, starting from `x0` (projected).
///
/// Every accepted iterate strictly decreases the objective.
pub fn minimize<P: Problem>(
    method: Method,
    settings: &Settings,
    problem: &mut P,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<Outcome<P::Info>> {
    if settings.max_iters == 0 {
        return Err(Error::Config("max_iters must be >= 1".into()));
    }
    if lo.len() != x0.len() || hi.len() != x0.len() || lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
        return Err(Error::Shape("bounds do not match the start point".into()));
    }
    let x0 = project(x0, lo, hi);
    match method {
        Method::BoundedQuasiNewton => lbfgsb::minimize(settings, problem, &x0, lo, hi),
        Method::GradientDescent | Method::TrustRegion => first_order(method, settings, problem, &x0, lo, hi),
    }
}

fn first_order<P: Problem>(
    method: Method,
    s: &Settings,
    problem: &mut P,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<Outcome<P::Info>> {
    let (mut f, mut g, info) = checked(problem, x0, 0)?;
    let mut x = x0.clone();
    let mut iterates = vec![Iterate { x: x.clone(), value: f, info, step: 0.0 }];
    let mut radius = s.radius;

    for iteration in 1..=s.max_iters {
        let pg = projected_gradient(&x, &g, lo, hi);
        let norm = pg.norm();
        if norm == 0.0 {
            return Ok(Outcome { iterates, stop: StopReason::Converged });
        }
        let mut step = match method {
            Method::TrustRegion => radius,
            _ => s.gamma,
        };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = match method {
                Method::TrustRegion => project(&(&x - &pg * (step / norm)), lo, hi),
                _ => project(&(&x - &pg * step), lo, hi),
            };
            let (fc, gc, ic) = checked(problem, &candidate, iteration)?;
            if fc < f && problem.admissible(&ic) {
                accepted = Some((candidate, fc, gc, ic));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn, info)) = accepted else {
            return Ok(Outcome { iterates, stop: StopReason::LineSearchFailed });
        };
        let enough = improved_enough(f, fnew, s.tolerance);
        iterates.push(Iterate { x: xn.clone(), value: fnew, info, step });
        if method == Method::TrustRegion {
            radius = if step == radius { radius * 2.0 } else { step };
        }
        x = xn;
        f = fnew;
        g = gn;
        if !enough {
            return Ok(Outcome { iterates, stop: StopReason::Converged });
        }
    }
    Ok(Outcome { iterates, stop: StopReason::MaxIterations })
}
