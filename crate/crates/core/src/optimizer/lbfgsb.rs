//! Projected limited-memory BFGS with box bounds.
//!
//! Variables at a bound whose gradient pushes outward are held fixed for the
//! iteration; the two-loop direction is computed on the rest and the step is
//! projected back into the box, with Armijo backtracking along the projected path.

use std::collections::VecDeque;

use nalgebra::DVector;

use super::descent::{checked, project, projected_gradient, Iterate, Outcome, Problem, Settings, StopReason, MAX_HALVINGS};
use crate::error::Result;

const ARMIJO: f64 = 1e-4;

struct Memory {
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    capacity: usize,
}

impl Memory {
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy <= 1e-12 * s.norm() * y.norm() || sy <= 0.0 {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `H · q` restricted to the coordinates where `free` is true.
    fn apply(&self, q: &DVector<f64>, free: &[bool]) -> DVector<f64> {
        let mask = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| if free[i] { v[i] } else { 0.0 });
        let mut q = mask(q);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let s = mask(s);
            let y = mask(y);
            let a = rho * s.dot(&q);
            q -= y * a;
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let (s, y) = (mask(s), mask(y));
            let yy = y.norm_squared();
            if yy > 0.0 {
                q *= s.dot(&y) / yy;
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let s = mask(s);
            let y = mask(y);
            let b = rho * y.dot(&q);
            q += s * (a - b);
        }
        mask(&q)
    }
}

pub(crate) fn minimize<P: Problem>(
    settings: &Settings,
    problem: &mut P,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<Outcome<P::Info>> {
    let (mut f, mut g, info) = checked(problem, x0, 0)?;
    let mut x = x0.clone();
    let mut iterates = vec![Iterate { x: x.clone(), value: f, info, step: 0.0 }];
    let mut memory = Memory { pairs: VecDeque::new(), capacity: settings.history.max(1) };

    for iteration in 1..=settings.max_iters {
        let pg = projected_gradient(&x, &g, lo, hi);
        if pg.amax() < settings.tolerance {
            return Ok(Outcome { iterates, stop: StopReason::Converged });
        }
        let free: Vec<bool> = pg.iter().zip(g.iter()).map(|(p, g)| *p != 0.0 || *g == 0.0).collect();
        let mut d = -memory.apply(&pg, &free);
        if d.dot(&pg) >= 0.0 {
            memory.pairs.clear();
            d = -pg.clone();
        }
        if memory.pairs.is_empty() {
            // First step: scale so the largest move is modest.
            let m = d.amax();
            if m > settings.radius {
                d *= settings.radius / m;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = project(&(&x + &d * alpha), lo, hi);
            let (fc, gc, ic) = checked(problem, &candidate, iteration)?;
            if fc < f && fc <= f + ARMIJO * g.dot(&(&candidate - &x)) && problem.admissible(&ic) {
                accepted = Some((candidate, fc, gc, ic));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn, info)) = accepted else {
            if memory.pairs.is_empty() {
                return Ok(Outcome { iterates, stop: StopReason::LineSearchFailed });
            }
            // Curvature model went stale; retry from steepest descent next round.
            memory.pairs.clear();
            continue;
        };
        memory.push(&xn - &x, &gn - &g);
        iterates.push(Iterate { x: xn.clone(), value: fnew, info, step: alpha });
        x = xn;
        f = fnew;
        g = gn;
    }
    let pg = projected_gradient(&x, &g, lo, hi);
    let stop = if pg.amax() < settings.tolerance { StopReason::Converged } else { StopReason::MaxIterations };
    Ok(Outcome { iterates, stop })
}
