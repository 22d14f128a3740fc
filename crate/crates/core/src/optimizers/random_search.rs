use super::problem::{OptProblem, OptResult};
use super::OptError;
use crate::rng::rng_from;

/// Uniform random sampling: `budget` i.i.d. points, best one returned.
pub fn random_search(problem: &OptProblem, seed: u64) -> Result<OptResult, OptError> {
    let mut rng = rng_from(seed);
    let mut ev = problem.evaluator();
    let dim = problem.dim() as u64;
    // Best point, current sample and their values.
    ev.track_memory(2 * 8 * dim + 16);
    while ev.remaining() > 0 {
        let x = problem.bounds().sample_uniform(&mut rng);
        ev.evaluate(&x)?;
    }
    Ok(ev.finish())
}
