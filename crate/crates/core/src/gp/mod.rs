//! Gaussian process regression with a squared-exponential kernel.
//!
//! Hyperparameters are chosen by maximizing the log marginal likelihood over a
//! log-spaced grid, refined by a pattern search. The constant prior mean is the
//! generalized least-squares estimate for the current correlation matrix.

mod simulate;

pub use simulate::{equidistant_grid, Realization, RealizationKind, SimulationMethod, UnconditionalSampler};

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Bounds;

/// Nugget ladder for noise-free models, relative to the signal variance.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
/// Grid resolution of the hyperparameter search, per axis.
pub const SEARCH_GRID: usize = 32;
const LENGTHSCALE_RANGE: (f64, f64) = (1e-3, 2.0);
const SIGNAL_VAR_RANGE: (f64, f64) = (1e-4, 4.0);
const NOISE_RATIO_RANGE: (f64, f64) = (1e-6, 1.0);
const NOISE_GRID: usize = 13;
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("identical inputs with different outputs require the noise model")]
    ConflictingDuplicates,
    #[error("covariance matrix is not positive definite even with maximal jitter")]
    SingularCovariance,
    #[error("simulation supports one-dimensional inputs only (got dim = {0})")]
    UnsupportedDimension(usize),
    #[error("invalid simulation grid: {0}")]
    InvalidGrid(String),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// Training inputs and scalar responses on a bounded domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    bounds: Bounds,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, bounds: Bounds) -> Result<Self, GpError> {
        if x.len() != y.len() {
            return Err(GpError::InvalidDataset(format!("{} inputs but {} outputs", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(GpError::InvalidDataset("at least two observations required".into()));
        }
        for (i, xi) in x.iter().enumerate() {
            if !bounds.contains(xi) {
                return Err(GpError::InvalidDataset(format!("row {i} lies outside the bounds")));
            }
            if !y[i].is_finite() {
                return Err(GpError::InvalidDataset(format!("row {i} has a non-finite output")));
            }
        }
        Ok(Self { x, y, bounds })
    }

    pub fn from_1d(xs: &[f64], ys: &[f64], bounds: Bounds) -> Result<Self, GpError> {
        Self::new(xs.iter().map(|&v| vec![v]).collect(), ys.to_vec(), bounds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Rows sorted by input (lexicographic), then by output.
    fn canonical(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| cmp_points(&self.x[a], &self.x[b]).then(self.y[a].total_cmp(&self.y[b])));
        Self {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            bounds: self.bounds.clone(),
        }
    }

    fn has_conflicting_duplicates(&self) -> bool {
        // Rows are canonical here, so duplicates are adjacent.
        self.x.windows(2).zip(self.y.windows(2)).any(|(xs, ys)| xs[0] == xs[1] && ys[0] != ys[1])
    }
}

fn cmp_points(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(u, v)| u.total_cmp(v)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscale: f64,
    pub signal_var: f64,
    /// Nugget divided by the signal variance.
    pub nugget_ratio: f64,
}

/// A fitted Gaussian process. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    data: Dataset,
    hyper: Hyperparameters,
    noise: bool,
    mean: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn correlation(a: &[f64], b: &[f64], lengthscale: f64) -> f64 {
    (-0.5 * sq_dist(a, b) / (lengthscale * lengthscale)).exp()
}

fn correlation_matrix(xs: &[Vec<f64>], lengthscale: f64) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| correlation(&xs[i], &xs[j], lengthscale))
}

/// Tries each nugget ratio in turn on `corr + ratio * I`.
fn factor_with_ladder(corr: &DMatrix<f64>, ratios: &[f64]) -> Option<(Cholesky<f64, Dyn>, f64)> {
    ratios.iter().find_map(|&ratio| {
        let mut m = corr.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ratio;
        }
        m.cholesky().map(|c| (c, ratio))
    })
}

/// Quantities of the likelihood that depend only on the correlation structure.
struct Profile {
    chol: Cholesky<f64, Dyn>,
    ratio: f64,
    mean: f64,
    quad: f64,
    logdet: f64,
}

impl Profile {
    fn new(xs: &[Vec<f64>], y: &DVector<f64>, lengthscale: f64, ratios: &[f64]) -> Option<Self> {
        let corr = correlation_matrix(xs, lengthscale);
        let (chol, ratio) = factor_with_ladder(&corr, ratios)?;
        let n = y.len();
        let ones = DVector::from_element(n, 1.0);
        let r_inv_ones = chol.solve(&ones);
        let r_inv_y = chol.solve(y);
        let denom = ones.dot(&r_inv_ones);
        if !(denom.is_finite() && denom > 0.0) {
            return None;
        }
        let mean = ones.dot(&r_inv_y) / denom;
        let resid = y.map(|v| v - mean);
        let quad = resid.dot(&chol.solve(&resid)).max(0.0);
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !(quad.is_finite() && logdet.is_finite()) {
            return None;
        }
        Some(Self { chol, ratio, mean, quad, logdet })
    }

    /// Log marginal likelihood with covariance `signal_var * (R + ratio * I)`.
    fn log_likelihood(&self, signal_var: f64, n: usize) -> f64 {
        let nf = n as f64;
        -0.5 * self.quad / signal_var - 0.5 * (self.logdet + nf * signal_var.ln()) - 0.5 * nf * (2.0 * PI).ln()
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

struct SearchSpace {
    ell: (f64, f64),
    var: (f64, f64),
    noise: Option<(f64, f64)>,
}

impl SearchSpace {
    fn clamp(&self, p: &mut [f64]) {
        p[0] = p[0].clamp(self.ell.0, self.ell.1);
        p[1] = p[1].clamp(self.var.0, self.var.1);
        if let Some((lo, hi)) = self.noise {
            p[2] = p[2].clamp(lo, hi);
        }
    }
}

/// Fits hyperparameters by maximum likelihood.
///
/// Without `noise` the nugget is pure jitter, taken from [`JITTER_LADDER`].
/// With `noise` the nugget ratio is a third search coordinate.
pub fn fit(data: &Dataset, noise: bool) -> Result<GpModel, GpError> {
    let data = data.canonical();
    if !noise && data.has_conflicting_duplicates() {
        return Err(GpError::ConflictingDuplicates);
    }
    let n = data.len();
    let y = DVector::from_column_slice(&data.y);
    let width = data.bounds.max_width();
    let var_ref = population_variance(&data.y).max(VARIANCE_FLOOR);

    let space = SearchSpace {
        ell: ((LENGTHSCALE_RANGE.0 * width).log10(), (LENGTHSCALE_RANGE.1 * width).log10()),
        var: ((SIGNAL_VAR_RANGE.0 * var_ref).log10(), (SIGNAL_VAR_RANGE.1 * var_ref).log10()),
        noise: noise.then(|| (NOISE_RATIO_RANGE.0.log10(), NOISE_RATIO_RANGE.1.log10())),
    };
    let ell_grid = log_grid(LENGTHSCALE_RANGE.0 * width, LENGTHSCALE_RANGE.1 * width, SEARCH_GRID);
    let var_grid = log_grid(SIGNAL_VAR_RANGE.0 * var_ref, SIGNAL_VAR_RANGE.1 * var_ref, SEARCH_GRID);
    let noise_grid =
        if noise { log_grid(NOISE_RATIO_RANGE.0, NOISE_RATIO_RANGE.1, NOISE_GRID) } else { vec![f64::NAN] };

    let ratios_for = |log_noise: f64| -> Vec<f64> {
        if noise {
            vec![10f64.powf(log_noise)]
        } else {
            JITTER_LADDER.to_vec()
        }
    };
    let score = |p: &[f64]| -> f64 {
        let ratios = ratios_for(if noise { p[2] } else { f64::NAN });
        match Profile::new(&data.x, &y, 10f64.powf(p[0]), &ratios) {
            Some(prof) => prof.log_likelihood(10f64.powf(p[1]), n),
            None => f64::NEG_INFINITY,
        }
    };

    // Grid stage: the signal variance enters the likelihood in closed form
    // once the correlation factor is known, so only (lengthscale, noise)
    // pairs need a decomposition.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &le in &ell_grid {
        for &ln in &noise_grid {
            let Some(prof) = Profile::new(&data.x, &y, 10f64.powf(le), &ratios_for(ln)) else {
                continue;
            };
            for &lv in &var_grid {
                let ll = prof.log_likelihood(10f64.powf(lv), n);
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    let mut p = vec![le, lv];
                    if noise {
                        p.push(ln);
                    }
                    best = Some((ll, p));
                }
            }
        }
    }
    let (mut best_ll, mut best_p) = best.ok_or(GpError::SingularCovariance)?;

    // Pattern search in log10 space, starting at one grid spacing.
    let mut steps = vec![ell_grid[1] - ell_grid[0], var_grid[1] - var_grid[0]];
    if noise {
        steps.push(noise_grid[1] - noise_grid[0]);
    }
    let min_steps: Vec<f64> = steps.iter().map(|s| s / 64.0).collect();
    for _ in 0..400 {
        let mut improved = false;
        for k in 0..steps.len() {
            for sign in [1.0, -1.0] {
                let mut cand = best_p.clone();
                cand[k] += sign * steps[k];
                space.clamp(&mut cand);
                if cand == best_p {
                    continue;
                }
                let ll = score(&cand);
                if ll > best_ll + 1e-12 {
                    best_ll = ll;
                    best_p = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
            if steps.iter().zip(&min_steps).all(|(s, m)| s < m) {
                break;
            }
        }
    }

    let ratio = if noise { 10f64.powf(best_p[2]) } else { JITTER_LADDER[0] };
    let hyper =
        Hyperparameters { lengthscale: 10f64.powf(best_p[0]), signal_var: 10f64.powf(best_p[1]), nugget_ratio: ratio };
    GpModel::build(data, hyper, noise)
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on `data`.
    ///
    /// Without `noise`, `hyper.nugget_ratio` is ignored and the jitter ladder
    /// applies.
    pub fn with_hyperparameters(data: &Dataset, hyper: Hyperparameters, noise: bool) -> Result<Self, GpError> {
        if !(hyper.lengthscale > 0.0 && hyper.signal_var > 0.0 && hyper.nugget_ratio >= 0.0) {
            return Err(GpError::InvalidDataset("hyperparameters must be positive".into()));
        }
        let data = data.canonical();
        if !noise && data.has_conflicting_duplicates() {
            return Err(GpError::ConflictingDuplicates);
        }
        Self::build(data, hyper, noise)
    }

    fn build(data: Dataset, hyper: Hyperparameters, noise: bool) -> Result<Self, GpError> {
        let y = DVector::from_column_slice(&data.y);
        let ratios: Vec<f64> = if noise {
            std::iter::once(hyper.nugget_ratio)
                .chain(JITTER_LADDER.iter().map(|&j| hyper.nugget_ratio.max(j)))
                .collect()
        } else {
            JITTER_LADDER.to_vec()
        };
        let prof = Profile::new(&data.x, &y, hyper.lengthscale, &ratios).ok_or(GpError::SingularCovariance)?;
        let n = data.len();
        let log_likelihood = prof.log_likelihood(hyper.signal_var, n);
        // The profile factors the correlation matrix; covariance = signal_var * R.
        let resid = y.map(|v| v - prof.mean);
        let alpha = prof.chol.solve(&resid) / hyper.signal_var;
        Ok(Self {
            hyper: Hyperparameters { nugget_ratio: prof.ratio, ..hyper },
            noise,
            mean: prof.mean,
            chol: prof.chol,
            alpha,
            log_likelihood,
            data,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyper
    }

    pub fn lengthscale(&self) -> f64 {
        self.hyper.lengthscale
    }

    pub fn signal_variance(&self) -> f64 {
        self.hyper.signal_var
    }

    /// Absolute nugget added to the covariance diagonal.
    pub fn nugget(&self) -> f64 {
        self.hyper.nugget_ratio * self.hyper.signal_var
    }

    /// True when the nugget models observation noise rather than jitter.
    pub fn models_noise(&self) -> bool {
        self.noise
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.hyper.signal_var * correlation(a, b, self.hyper.lengthscale)
    }

    fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.data.len(), self.data.x.iter().map(|xi| self.covariance(x, xi)))
    }

    /// Posterior mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = self.cross_covariance(x);
        let mean = self.mean + k.dot(&self.alpha);
        // Correlation-scale solve: v^T v = k^T K^{-1} k with K = signal_var * R.
        let kr = &k / self.hyper.signal_var;
        let quad = kr.dot(&self.chol.solve(&kr)) * self.hyper.signal_var;
        let var = (self.hyper.signal_var - quad).clamp(0.0, self.hyper.signal_var);
        (mean, var)
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.mean + self.cross_covariance(x).dot(&self.alpha)
    }

    /// Kriging weights `K^{-1} (values - mean)` for alternative responses at the training inputs.
    pub(crate) fn weights_for(&self, values: &[f64]) -> DVector<f64> {
        let resid = DVector::from_iterator(values.len(), values.iter().map(|v| v - self.mean));
        self.chol.solve(&resid) / self.hyper.signal_var
    }

    pub(crate) fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub(crate) fn cross_covariance_at(&self, x: &[f64]) -> DVector<f64> {
        self.cross_covariance(x)
    }
}
