//! Unconditional and conditional simulation of a fitted GP on a 1-D grid.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GpError, GpModel, JITTER_LADDER};
use crate::rng::rng_from;

/// Number of cosine features in a spectral realization.
pub const SPECTRAL_FEATURES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMethod {
    Spectral,
    Decomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealizationKind {
    Conditional,
    Unconditional,
}

/// One sampled path, stored on a grid and linearly interpolated in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    kind: RealizationKind,
    grid: Vec<f64>,
    values: Vec<f64>,
    seed: u64,
}

pub fn equidistant_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}

fn check_grid(grid: &[f64]) -> Result<(), GpError> {
    if grid.len() < 2 {
        return Err(GpError::InvalidGrid("need at least two grid points".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GpError::InvalidGrid("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl Realization {
    pub fn new(kind: RealizationKind, grid: Vec<f64>, values: Vec<f64>, seed: u64) -> Result<Self, GpError> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(GpError::InvalidGrid("grid and values differ in length".into()));
        }
        Ok(Self { kind, grid, values, seed })
    }

    pub fn kind(&self) -> RealizationKind {
        self.kind
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Piecewise-linear evaluation; constant extrapolation beyond the grid ends.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return self.values[0];
        }
        if x >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let hi = g.partition_point(|&v| v <= x);
        let lo = hi - 1;
        if g[lo] == x {
            return self.values[lo];
        }
        let t = (x - g[lo]) / (g[hi] - g[lo]);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }

    /// Grid point with the smallest value.
    pub fn argmin(&self) -> (f64, f64) {
        let (i, v) = self.values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("grid is non-empty");
        (self.grid[i], *v)
    }

    pub fn range(&self) -> (f64, f64) {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// Pointwise `sum_i w_i * r_i` over realizations sharing one grid.
    pub fn weighted_sum(parts: &[&Realization], weights: &[f64]) -> Result<Self, GpError> {
        let first = parts.first().ok_or_else(|| GpError::InvalidGrid("no realizations".into()))?;
        if parts.len() != weights.len() || parts.iter().any(|r| r.grid != first.grid) {
            return Err(GpError::InvalidGrid("realizations must share one grid".into()));
        }
        let values =
            (0..first.grid.len()).map(|i| parts.iter().zip(weights).map(|(r, w)| w * r.values[i]).sum()).collect();
        Ok(Self { kind: first.kind, grid: first.grid.clone(), values, seed: first.seed })
    }

    /// Writes `x,y` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GpError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| GpError::Export(e.to_string());
        w.write_record(["x", "y"]).map_err(err)?;
        for (x, y) in self.grid.iter().zip(&self.values) {
            w.write_record([x.to_string(), y.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| GpError::Export(e.to_string()))
    }
}

fn covariance_factor(model: &GpModel, points: &[f64]) -> Result<DMatrix<f64>, GpError> {
    let m = points.len();
    let base = DMatrix::from_fn(m, m, |i, j| model.covariance(&[points[i]], &[points[j]]));
    let sv = model.signal_variance();
    JITTER_LADDER
        .iter()
        .find_map(|&j| {
            let mut c = base.clone();
            for i in 0..m {
                c[(i, i)] += j * sv;
            }
            c.cholesky().map(|ch| ch.unpack())
        })
        .ok_or(GpError::SingularCovariance)
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Decomposition(DMatrix<f64>),
    Spectral,
}

/// Draws unconditional realizations on a fixed grid. The covariance factor is
/// computed once and reused for every draw.
#[derive(Debug, Clone)]
pub struct UnconditionalSampler {
    grid: Vec<f64>,
    mean: f64,
    signal_var: f64,
    lengthscale: f64,
    kind: SamplerKind,
}

impl UnconditionalSampler {
    pub fn new(model: &GpModel, grid: &[f64], method: SimulationMethod) -> Result<Self, GpError> {
        if model.data().dim() != 1 {
            return Err(GpError::UnsupportedDimension(model.data().dim()));
        }
        check_grid(grid)?;
        let b = model.data().bounds();
        if grid[0] < b.lo(0) || grid[grid.len() - 1] > b.hi(0) {
            return Err(GpError::InvalidGrid("grid leaves the model bounds".into()));
        }
        let kind = match method {
            SimulationMethod::Decomposition => SamplerKind::Decomposition(covariance_factor(model, grid)?),
            SimulationMethod::Spectral => SamplerKind::Spectral,
        };
        Ok(Self {
            grid: grid.to_vec(),
            mean: model.prior_mean(),
            signal_var: model.signal_variance(),
            lengthscale: model.lengthscale(),
            kind,
        })
    }

    pub fn draw(&self, seed: u64) -> Realization {
        let mut rng = rng_from(seed);
        let values = match &self.kind {
            SamplerKind::Decomposition(l) => {
                let z = DVector::from_iterator(
                    self.grid.len(),
                    (0..self.grid.len()).map(|_| StandardNormal.sample(&mut rng)),
                );
                (l * z).iter().map(|v| self.mean + v).collect()
            }
            SamplerKind::Spectral => {
                // SE spectral density: frequencies ~ N(0, 1 / lengthscale^2).
                let freq = Normal::new(0.0, 1.0 / self.lengthscale).expect("lengthscale is positive");
                let features: Vec<(f64, f64)> =
                    (0..SPECTRAL_FEATURES).map(|_| (freq.sample(&mut rng), 2.0 * PI * rng.random::<f64>())).collect();
                let amp = (2.0 * self.signal_var / SPECTRAL_FEATURES as f64).sqrt();
                self.grid
                    .iter()
                    .map(|&x| self.mean + amp * features.iter().map(|(w, p)| (w * x + p).cos()).sum::<f64>())
                    .collect()
            }
        };
        Realization { kind: RealizationKind::Unconditional, grid: self.grid.clone(), values, seed }
    }
}

impl GpModel {
    pub fn simulate_unconditional(
        &self,
        grid: &[f64],
        method: SimulationMethod,
        seed: u64,
    ) -> Result<Realization, GpError> {
        Ok(UnconditionalSampler::new(self, grid, method)?.draw(seed))
    }

    /// Conditioning by kriging: `f_c = f_u + m_data - m_u`, where `m_u` is the
    /// posterior mean computed from the unconditional draw at the training
    /// inputs. The returned grid also contains every training input, so the
    /// realization reproduces the data there.
    pub fn simulate_conditional(&self, grid: &[f64], seed: u64) -> Result<Realization, GpError> {
        let data = self.data();
        if data.dim() != 1 {
            return Err(GpError::UnsupportedDimension(data.dim()));
        }
        check_grid(grid)?;
        let b = data.bounds();
        if grid[0] < b.lo(0) || grid[grid.len() - 1] > b.hi(0) {
            return Err(GpError::InvalidGrid("grid leaves the model bounds".into()));
        }

        let train: Vec<f64> = data.x().iter().map(|x| x[0]).collect();
        let mut unique = train.clone();
        unique.dedup();
        let tol = 1e-6 * b.width(0);
        let mut points: Vec<f64> = grid
            .iter()
            .copied()
            .filter(|g| unique.iter().all(|t| (g - t).abs() > tol))
            .chain(unique.iter().copied())
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();

        let l = covariance_factor(self, &points)?;
        let mut rng = rng_from(seed);
        let z = DVector::from_iterator(points.len(), (0..points.len()).map(|_| StandardNormal.sample(&mut rng)));
        let uncond: Vec<f64> = (l * z).iter().map(|v| self.prior_mean() + v).collect();

        // Unconditional responses at the training rows, with simulated noise
        // when the nugget stands for observation noise.
        let noise = Normal::new(0.0, self.nugget().sqrt()).expect("nugget is non-negative");
        let at_train: Vec<f64> = train
            .iter()
            .map(|t| {
                let idx = points.partition_point(|p| p < t);
                let e = if self.models_noise() { noise.sample(&mut rng) } else { 0.0 };
                uncond[idx] + e
            })
            .collect();
        let delta = self.alpha() - self.weights_for(&at_train);
        let values =
            points.iter().zip(&uncond).map(|(&p, &u)| u + self.cross_covariance_at(&[p]).dot(&delta)).collect();
        Ok(Realization { kind: RealizationKind::Conditional, grid: points, values, seed })
    }
}
