//! Differential evolution with optional success-based adaptation of F and CR.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use super::problem::{OptProblem, OptResult};
use super::OptError;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Rand1 = 1,
    Best1 = 2,
    CurrentToBest1 = 3,
    Best2 = 4,
    Rand2 = 5,
}

impl Strategy {
    pub fn from_code(code: i64) -> Result<Self, OptError> {
        Ok(match code {
            1 => Self::Rand1,
            2 => Self::Best1,
            3 => Self::CurrentToBest1,
            4 => Self::Best2,
            5 => Self::Rand2,
            other => return Err(OptError::Config(format!("strategy must be in 1..=5, got {other}"))),
        })
    }

    fn donors(self) -> usize {
        match self {
            Self::Best1 | Self::CurrentToBest1 => 2,
            Self::Rand1 => 3,
            Self::Best2 => 4,
            Self::Rand2 => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeParams {
    pub popsize: usize,
    pub strategy: Strategy,
    pub f: f64,
    pub cr: f64,
    /// Adaptation speed; 0 keeps F and CR fixed.
    pub c: f64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self { popsize: 5, strategy: Strategy::Best1, f: 0.8, cr: 0.5, c: 0.5 }
    }
}

impl DeParams {
    pub(crate) fn validate(&self) -> Result<(), OptError> {
        if self.popsize < 4 {
            return Err(OptError::Config(format!("popsize must be at least 4, got {}", self.popsize)));
        }
        if !(0.0..=2.0).contains(&self.f) {
            return Err(OptError::Config(format!("F must lie in [0, 2], got {}", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(OptError::Config(format!("CR must lie in [0, 1], got {}", self.cr)));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(OptError::Config(format!("c must lie in [0, 1], got {}", self.c)));
        }
        Ok(())
    }
}

/// Picks `k` donor indices different from `target`, distinct while possible.
fn pick_donors<R: Rng + ?Sized>(n: usize, target: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).filter(|&i| i != target).collect();
    let mut out = Vec::with_capacity(k);
    let mut left = pool.len();
    for _ in 0..k {
        if left == 0 {
            left = pool.len();
        }
        let j = rng.random_range(0..left);
        out.push(pool[j]);
        pool.swap(j, left - 1);
        left -= 1;
    }
    out
}

fn arg_best(fitness: &[f64]) -> usize {
    fitness.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).expect("population is non-empty")
}

pub fn differential_evolution(problem: &OptProblem, seed: u64, params: DeParams) -> Result<OptResult, OptError> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let mut ev = problem.evaluator();
    let dim = problem.dim();
    let np = params.popsize;
    // population + trial population with fitness values, plus success memories
    ev.track_memory((2 * np * (dim + 1) * 8 + 2 * np * 8) as u64);

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    let mut fit: Vec<f64> = Vec::with_capacity(np);
    for _ in 0..np {
        if ev.remaining() == 0 {
            return Ok(ev.finish());
        }
        let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        fit.push(ev.evaluate_unit(&u)?);
        pop.push(u);
    }

    let adaptive = params.c > 0.0;
    let (mut mu_f, mut mu_cr) = (params.f, params.cr);
    let spread = Normal::new(0.0, 0.1).expect("valid sd");

    while ev.remaining() > 0 {
        let best = arg_best(&fit);
        let mut next_pop = pop.clone();
        let mut next_fit = fit.clone();
        let (mut good_f, mut good_cr) = (Vec::new(), Vec::new());

        for i in 0..np {
            if ev.remaining() == 0 {
                break;
            }
            let (fi, cri) = if adaptive {
                let cr = (mu_cr + spread.sample(&mut rng)).clamp(0.0, 1.0);
                let cauchy = Cauchy::new(mu_f, 0.1).expect("valid scale");
                let f = (0..20).map(|_| cauchy.sample(&mut rng)).find(|v| *v > 0.0).unwrap_or(mu_f).min(2.0);
                (f, cr)
            } else {
                (params.f, params.cr)
            };

            let r = pick_donors(np, i, params.strategy.donors(), &mut rng);
            let diff = |a: usize, b: usize, k: usize| pop[a][k] - pop[b][k];
            let mutant: Vec<f64> = (0..dim)
                .map(|k| match params.strategy {
                    Strategy::Rand1 => pop[r[0]][k] + fi * diff(r[1], r[2], k),
                    Strategy::Best1 => pop[best][k] + fi * diff(r[0], r[1], k),
                    Strategy::CurrentToBest1 => pop[i][k] + fi * (pop[best][k] - pop[i][k]) + fi * diff(r[0], r[1], k),
                    Strategy::Best2 => pop[best][k] + fi * diff(r[0], r[1], k) + fi * diff(r[2], r[3], k),
                    Strategy::Rand2 => pop[r[0]][k] + fi * diff(r[1], r[2], k) + fi * diff(r[3], r[4], k),
                })
                .collect();

            // Binomial crossover. CR = 0 disables crossover altogether; any
            // positive CR forces at least one mutant coordinate.
            let mut trial = pop[i].clone();
            if cri > 0.0 {
                let forced = rng.random_range(0..dim);
                for k in 0..dim {
                    if k == forced || rng.random::<f64>() < cri {
                        trial[k] = mutant[k].clamp(0.0, 1.0);
                    }
                }
            }

            let ft = ev.evaluate_unit(&trial)?;
            if ft <= fit[i] {
                if ft < fit[i] {
                    good_f.push(fi);
                    good_cr.push(cri);
                }
                next_pop[i] = trial;
                next_fit[i] = ft;
            }
        }
        pop = next_pop;
        fit = next_fit;

        if adaptive && !good_f.is_empty() {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            mu_f = (1.0 - params.c) * mu_f + params.c * mean(&good_f);
            mu_cr = (1.0 - params.c) * mu_cr + params.c * mean(&good_cr);
        }
    }
    Ok(ev.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Bounds;
    use crate::rng::rng_from;

    fn sphere_problem(f: &(dyn Fn(&[f64]) -> f64 + Sync), budget: usize) -> OptProblem<'_> {
        OptProblem::new(f, Bounds::interval(-1.0, 1.0).unwrap(), budget).unwrap()
    }

    #[test]
    fn degenerate_operators_keep_initial_best() {
        let f = |x: &[f64]| x[0] * x[0];
        let p = sphere_problem(&f, 40);
        let params = DeParams { f: 0.0, cr: 0.0, c: 0.0, ..Default::default() };
        let r = differential_evolution(&p, 3, params).unwrap();
        assert_eq!(r.evals_used, 40);
        let initial_best = r.trace[params.popsize - 1];
        assert!(r.trace[params.popsize..].iter().all(|&v| v == initial_best));
    }

    #[test]
    fn budget_smaller_than_population() {
        let f = |x: &[f64]| x[0];
        let p = sphere_problem(&f, 3);
        let r = differential_evolution(&p, 0, DeParams::default()).unwrap();
        assert_eq!(r.evals_used, 3);
    }

    #[test]
    fn every_strategy_makes_progress() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let b = Bounds::new(vec![(-1.0, 1.0); 2]).unwrap();
        for code in 1..=5 {
            let p = OptProblem::new(&f, b.clone(), 400).unwrap();
            let params = DeParams { popsize: 8, strategy: Strategy::from_code(code).unwrap(), ..Default::default() };
            let r = differential_evolution(&p, 1, params).unwrap();
            assert!(r.best_y < 1e-2, "strategy {code}: {}", r.best_y);
        }
    }

    #[test]
    fn config_errors() {
        let f = |x: &[f64]| x[0];
        let p = sphere_problem(&f, 10);
        assert!(differential_evolution(&p, 0, DeParams { popsize: 3, ..Default::default() }).is_err());
        assert!(differential_evolution(&p, 0, DeParams { f: 2.5, ..Default::default() }).is_err());
        assert!(Strategy::from_code(6).is_err());
    }

    #[test]
    fn donors_are_distinct_when_possible() {
        let mut rng = rng_from(2);
        for _ in 0..100 {
            let d = pick_donors(6, 2, 5, &mut rng);
            let mut s = d.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 5);
            assert!(!d.contains(&2));
        }
        // Four members cannot supply five distinct donors; repeats are allowed.
        let d = pick_donors(4, 0, 5, &mut rng);
        assert!(!d.contains(&0) && d.len() == 5);
    }
}
