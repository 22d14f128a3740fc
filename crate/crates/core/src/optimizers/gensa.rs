//! Generalized simulated annealing.
//!
//! Visiting steps follow the Tsallis distribution with shape `qv`, sampled per
//! coordinate as a scaled Student-t built from two gamma variates. Worse
//! candidates are accepted with the generalized Metropolis rule of shape `qa`.
//! The visiting temperature after `t` iterations is
//! `temp * (2^(qv-1) - 1) / ((1+t)^(qv-1) - 1)`; the acceptance temperature is
//! that value divided by `t`. Work happens in unit-cube coordinates, and
//! candidates are reflected back into the box.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::problem::{OptProblem, OptResult};
use super::OptError;
use crate::rng::rng_from;

/// Re-anneal once the temperature drops below this fraction of `temp`.
const RESTART_RATIO: f64 = 2e-5;
const MAX_VISIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSaParams {
    pub temp: f64,
    pub qv: f64,
    pub qa: f64,
}

impl Default for GenSaParams {
    fn default() -> Self {
        Self { temp: 100.0, qv: 2.5, qa: -1.0 }
    }
}

impl GenSaParams {
    pub(crate) fn validate(&self) -> Result<(), OptError> {
        if !(self.qv > 1.0 && self.qv < 3.0) {
            return Err(OptError::Config(format!("qv must lie in (1, 3), got {}", self.qv)));
        }
        if !(self.temp > 0.0 && self.temp.is_finite()) {
            return Err(OptError::Config(format!("temp must be positive, got {}", self.temp)));
        }
        if !self.qa.is_finite() {
            return Err(OptError::Config("qa must be finite".into()));
        }
        Ok(())
    }

    pub fn visiting_temperature(&self, t: u64) -> f64 {
        let e = self.qv - 1.0;
        self.temp * (2f64.powf(e) - 1.0) / ((1.0 + t as f64).powf(e) - 1.0)
    }
}

/// Probability of accepting a move that changes the energy by `delta`.
pub fn acceptance_probability(delta: f64, temperature: f64, qa: f64) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    if temperature <= 0.0 {
        return 0.0;
    }
    if (qa - 1.0).abs() < 1e-12 {
        return (-delta / temperature).exp();
    }
    let base = 1.0 - (1.0 - qa) * delta / temperature;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / (1.0 - qa)).min(1.0)
    }
}

struct Visitor {
    qv: f64,
    half: Gamma<f64>,
    tail: Gamma<f64>,
    dof: f64,
}

impl Visitor {
    fn new(qv: f64) -> Self {
        // Student-t with dof = (3 - qv) / (qv - 1) has the Tsallis shape in 1-D.
        let dof = (3.0 - qv) / (qv - 1.0);
        Self {
            qv,
            half: Gamma::new(0.5, 1.0).expect("valid shape"),
            tail: Gamma::new(0.5 * dof, 1.0).expect("valid shape"),
            dof,
        }
    }

    fn step<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> f64 {
        let g1 = self.half.sample(rng);
        let g2 = self.tail.sample(rng).max(f64::MIN_POSITIVE);
        let t = (self.dof * g1 / g2).sqrt();
        let t = if rng.random::<bool>() { t } else { -t };
        let scale = temperature.powf(1.0 / (3.0 - self.qv)) / (3.0 - self.qv).sqrt();
        (t * scale).clamp(-MAX_VISIT, MAX_VISIT)
    }
}

/// Folds `v` into [0, 1] by mirroring at the faces.
fn reflect(v: f64) -> f64 {
    let r = v.rem_euclid(2.0);
    if r > 1.0 {
        2.0 - r
    } else {
        r
    }
}

pub fn generalized_sa(problem: &OptProblem, seed: u64, params: GenSaParams) -> Result<OptResult, OptError> {
    anneal(problem, seed, params, None)
}

/// Annealing loop; `accepted` receives the energy after every accepted move.
pub(crate) fn anneal(
    problem: &OptProblem,
    seed: u64,
    params: GenSaParams,
    mut accepted: Option<&mut Vec<f64>>,
) -> Result<OptResult, OptError> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let mut ev = problem.evaluator();
    let dim = problem.dim();
    let visitor = Visitor::new(params.qv);
    // current, candidate and best points with their energies
    ev.track_memory((3 * 8 * dim + 24) as u64);

    'restart: while ev.remaining() > 0 {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut e = ev.evaluate_unit(&x)?;
        let mut t: u64 = 1;
        while ev.remaining() > 0 {
            let temperature = params.visiting_temperature(t);
            if temperature < params.temp * RESTART_RATIO {
                continue 'restart;
            }
            let accept_temperature = temperature / t as f64;
            for j in 0..2 * dim {
                if ev.remaining() == 0 {
                    break;
                }
                let mut y = x.clone();
                if j < dim {
                    for v in y.iter_mut() {
                        *v = reflect(*v + visitor.step(temperature, &mut rng));
                    }
                } else {
                    let k = j - dim;
                    y[k] = reflect(y[k] + visitor.step(temperature, &mut rng));
                }
                let ey = ev.evaluate_unit(&y)?;
                let p = acceptance_probability(ey - e, accept_temperature, params.qa);
                if p >= 1.0 || rng.random::<f64>() < p {
                    x = y;
                    e = ey;
                    if let Some(log) = accepted.as_deref_mut() {
                        log.push(e);
                    }
                }
            }
            t += 1;
        }
    }
    Ok(ev.finish())
}
