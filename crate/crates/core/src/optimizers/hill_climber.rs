//! Bound-constrained limited-memory quasi-Newton descent with finite-difference
//! gradients and random restarts.
//!
//! The search runs in unit-cube coordinates; steps are projected back onto the
//! box and the inverse Hessian is approximated by the two-loop recursion over
//! the last `lmm` curvature pairs.

use std::collections::VecDeque;

use super::problem::{Evaluator, OptProblem, OptResult};
use super::OptError;
use crate::rng::rng_from;

/// Finite-difference step in unit coordinates, i.e. `1e-6 * (hi - lo)` in raw units.
const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-8;
const REL_FTOL: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
const FIRST_STEP: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ClimbStats {
    pub restarts: usize,
    /// Evaluations consumed before the first restart (or in total when none happened).
    pub evals_before_first_restart: usize,
}

pub fn hill_climber(problem: &OptProblem, seed: u64, lmm: usize) -> Result<OptResult, OptError> {
    hill_climber_from(problem, seed, lmm, None).map(|(r, _)| r)
}

/// Like [`hill_climber`], optionally starting the first descent at `init` (raw coordinates).
pub(crate) fn hill_climber_from(
    problem: &OptProblem,
    seed: u64,
    lmm: usize,
    init: Option<&[f64]>,
) -> Result<(OptResult, ClimbStats), OptError> {
    if lmm == 0 {
        return Err(OptError::Config("lmm must be at least 1".into()));
    }
    let mut rng = rng_from(seed);
    let mut ev = problem.evaluator();
    let mut stats = ClimbStats::default();
    let dim = problem.dim();
    let mut start = init.map(|x| problem.bounds().to_unit(x));

    loop {
        if ev.remaining() == 0 {
            break;
        }
        let u0 = start.take().unwrap_or_else(|| (0..dim).map(|_| rand::Rng::random::<f64>(&mut rng)).collect());
        descend(&mut ev, u0, lmm)?;
        if ev.remaining() == 0 {
            break;
        }
        if stats.restarts == 0 {
            stats.evals_before_first_restart = ev.used();
        }
        stats.restarts += 1;
    }
    if stats.restarts == 0 {
        stats.evals_before_first_restart = ev.used();
    }
    Ok((ev.finish(), stats))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central differences, one-sided where the stencil would leave the box.
/// Returns `None` when the budget runs out mid-gradient; the evaluations made
/// so far still count, so a shorter budget replays a prefix of a longer run.
fn gradient(ev: &mut Evaluator, u: &[f64], fu: f64) -> Result<Option<Vec<f64>>, OptError> {
    let mut g = vec![0.0; u.len()];
    for i in 0..u.len() {
        let up = u[i] + FD_STEP <= 1.0;
        let down = u[i] - FD_STEP >= 0.0;
        if ev.remaining() == 0 {
            return Ok(None);
        }
        let mut p = u.to_vec();
        g[i] = if up && down {
            p[i] = u[i] + FD_STEP;
            let f1 = ev.evaluate_unit(&p)?;
            if ev.remaining() == 0 {
                return Ok(None);
            }
            p[i] = u[i] - FD_STEP;
            let f0 = ev.evaluate_unit(&p)?;
            (f1 - f0) / (2.0 * FD_STEP)
        } else if up {
            p[i] = u[i] + FD_STEP;
            (ev.evaluate_unit(&p)? - fu) / FD_STEP
        } else {
            p[i] = u[i] - FD_STEP;
            (fu - ev.evaluate_unit(&p)?) / FD_STEP
        };
    }
    Ok(Some(g))
}

/// Gradient with components pointing out of an active bound removed.
fn projected_gradient(u: &[f64], g: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(g)
        .map(|(&ui, &gi)| if (ui <= 0.0 && gi > 0.0) || (ui >= 1.0 && gi < 0.0) { 0.0 } else { gi })
        .collect()
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    if let Some((s, y)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter().map(|v| -v).collect()
}

fn state_bytes(dim: usize, pairs: usize) -> u64 {
    // x, g, direction, trial point plus the stored curvature pairs.
    (8 * dim * (4 + 2 * pairs) + 32) as u64
}

/// One descent from `u`; returns when converged or out of budget.
fn descend(ev: &mut Evaluator, mut u: Vec<f64>, lmm: usize) -> Result<(), OptError> {
    let dim = u.len();
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(lmm);
    ev.track_memory(state_bytes(dim, 0));
    if ev.remaining() == 0 {
        return Ok(());
    }
    let mut f = ev.evaluate_unit(&u)?;
    let Some(mut g) = gradient(ev, &u, f)? else { return Ok(()) };

    loop {
        let pg = projected_gradient(&u, &g);
        if pg.iter().all(|v| v.abs() <= GRAD_TOL) {
            return Ok(());
        }
        let mut d = if pairs.is_empty() {
            let scale = FIRST_STEP / pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            pg.iter().map(|v| -v * scale).collect::<Vec<_>>()
        } else {
            two_loop(&pg, &pairs)
        };
        if dot(&d, &pg) >= 0.0 {
            pairs.clear();
            let scale = FIRST_STEP / pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            d = pg.iter().map(|v| -v * scale).collect();
        }

        // Backtracking along the projected path.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(ui, di)| (ui + step * di).clamp(0.0, 1.0)).collect();
            let moved: Vec<f64> = trial.iter().zip(&u).map(|(t, ui)| t - ui).collect();
            if moved.iter().all(|m| m.abs() < 1e-15) {
                break;
            }
            if ev.remaining() == 0 {
                return Ok(());
            }
            let ft = ev.evaluate_unit(&trial)?;
            if ft <= f + ARMIJO * dot(&g, &moved) {
                accepted = Some((trial, ft, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((u_new, f_new, s)) = accepted else { return Ok(()) };
        let Some(g_new) = gradient(ev, &u_new, f_new)? else { return Ok(()) };

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == lmm {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
            ev.track_memory(state_bytes(dim, pairs.len()));
        }
        let converged = (f - f_new).abs() <= REL_FTOL * (f.abs() + f_new.abs() + 1e-300);
        u = u_new;
        f = f_new;
        g = g_new;
        if converged {
            return Ok(());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Bounds;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2);
        let p = OptProblem::new(&f, Bounds::interval(0.0, 1.0).unwrap(), 60).unwrap();
        for seed in 0..20 {
            let r = hill_climber(&p, seed, 5).unwrap();
            assert!((r.best_x[0] - 0.3).abs() < 1e-3, "seed {seed}: {:?}", r.best_x);
            assert!(r.evals_used <= 60);
        }
    }

    #[test]
    fn starting_at_optimum_converges_immediately() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2);
        let p = OptProblem::new(&f, Bounds::interval(0.0, 1.0).unwrap(), 60).unwrap();
        let (r, stats) = hill_climber_from(&p, 0, 5, Some(&[0.3])).unwrap();
        assert!(stats.restarts >= 1);
        // One evaluation plus a central-difference gradient.
        assert_eq!(stats.evals_before_first_restart, 3);
        assert_eq!(r.evals_used, 60);
    }

    #[test]
    fn clamps_to_active_bound() {
        let f = |x: &[f64]| x[0];
        let p = OptProblem::new(&f, Bounds::interval(0.0, 1.0).unwrap(), 40).unwrap();
        for seed in 0..10 {
            let r = hill_climber(&p, seed, 5).unwrap();
            assert!(r.best_x[0].abs() <= 1e-6, "{:?}", r.best_x);
        }
    }

    #[test]
    fn handles_raw_scale_and_two_dimensions() {
        let f = |x: &[f64]| ((x[0] - 2000.0) / 1000.0).powi(2) + (x[1] - 0.5).powi(2) * 4.0;
        let b = Bounds::new(vec![(500.0, 7000.0), (0.0, 1.0)]).unwrap();
        let p = OptProblem::new(&f, b, 120).unwrap();
        let r = hill_climber(&p, 3, 5).unwrap();
        assert!(r.best_y < 1e-6, "{}", r.best_y);
    }

    #[test]
    fn rejects_zero_memory() {
        let f = |x: &[f64]| x[0];
        let p = OptProblem::new(&f, Bounds::unit(1), 5).unwrap();
        assert!(matches!(hill_climber(&p, 0, 0), Err(OptError::Config(_))));
    }
}
