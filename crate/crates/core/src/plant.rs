//! Plant adapters and the simulated popcorn plant whose three objectives are
//! conditional GP realizations over a bundled seed dataset.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Bounds;
use crate::gp::{equidistant_grid, fit, Dataset, GpError, Realization};
use crate::rating::{validate_weights, RatingError};
use crate::rng::{derive_seed, derived_rng, hash_str, Rng};

const SEED_CSV: &str = include_str!("../data/vps_seed.csv");
/// Range of the conveyor settings in the seed dataset, in ms.
const SEED_RANGE: (f64, f64) = (500.0, 7000.0);
const TRUTH_GRID: usize = 512;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("parameter {0:?} is outside the plant bounds")]
    OutOfBounds(Vec<f64>),
    #[error("no parameter has been applied yet")]
    NotStarted,
    #[error(transparent)]
    Weights(#[from] RatingError),
    #[error("invalid plant configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("seed data: {0}")]
    SeedData(String),
    #[error("plant failure: {0}")]
    Failure(String),
}

/// One production cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionCycleRecord {
    pub cycle: u64,
    pub x: Vec<f64>,
    /// Normalized objectives: energy, processing time, corn amount.
    pub f: Vec<f64>,
    pub aggregate: f64,
    /// Simulated seconds since the plant started.
    pub timestamp: f64,
}

/// The cognition loop's view of a plant. Cycle indices start at 1.
pub trait PlantAdapter {
    fn bounds(&self) -> &Bounds;

    fn weights(&self) -> &[f64];

    /// Switches to setting `x` and produces the cycles that run at it.
    /// Returns the last of them.
    fn apply(&mut self, x: &[f64]) -> Result<ProductionCycleRecord, PlantError>;

    /// One more cycle at the current setting.
    fn run_cycle(&mut self) -> Result<ProductionCycleRecord, PlantError>;

    /// Records with `cycle > since`, in order.
    fn receive_new_data(&self, since: u64) -> Vec<ProductionCycleRecord>;

    /// Number of `apply` calls so far.
    fn applications(&self) -> usize;
}

/// Weighted scalarization `sum_i w_i f_i`.
pub fn weighted_aggregate(f: &[f64], weights: &[f64]) -> f64 {
    f.iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Record keeping shared by plant implementations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    records: Vec<ProductionCycleRecord>,
}

impl CycleLog {
    pub fn push(&mut self, x: &[f64], f: Vec<f64>, weights: &[f64], cycle_seconds: f64) -> ProductionCycleRecord {
        let cycle = self.records.len() as u64 + 1;
        let rec = ProductionCycleRecord {
            cycle,
            x: x.to_vec(),
            aggregate: weighted_aggregate(&f, weights),
            f,
            timestamp: cycle as f64 * cycle_seconds,
        };
        self.records.push(rec.clone());
        rec
    }

    pub fn since(&self, since: u64) -> Vec<ProductionCycleRecord> {
        let start = (since as usize).min(self.records.len());
        self.records[start..].to_vec()
    }

    pub fn latest(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn records(&self) -> &[ProductionCycleRecord] {
        &self.records
    }
}

/// One row of the bundled seed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub x: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub rep: u32,
}

impl SeedRow {
    pub fn objectives(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }
}

/// The 12 settings x 3 repetitions the simulator is conditioned on.
pub fn seed_rows() -> Vec<SeedRow> {
    csv::Reader::from_reader(SEED_CSV.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("bundled seed data is well formed")
}

fn rescale(x: f64, bounds: &Bounds) -> f64 {
    bounds.lo(0) + (x - SEED_RANGE.0) / (SEED_RANGE.1 - SEED_RANGE.0) * bounds.width(0)
}

/// Seed data with the weighted aggregate as response, rescaled to `bounds`.
pub fn seed_aggregate_dataset(weights: &[f64], bounds: &Bounds) -> Result<Dataset, PlantError> {
    validate_weights(weights)?;
    let rows = seed_rows();
    let xs: Vec<f64> = rows.iter().map(|r| rescale(r.x, bounds)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| weighted_aggregate(&r.objectives(), weights)).collect();
    Ok(Dataset::from_1d(&xs, &ys, bounds.clone())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpsConfig {
    /// Conveyor runtime range in ms.
    pub lo: f64,
    pub hi: f64,
    pub weights: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
    pub cycles_per_setting: usize,
    pub cycle_seconds: f64,
}

impl Default for VpsConfig {
    fn default() -> Self {
        Self {
            lo: SEED_RANGE.0,
            hi: SEED_RANGE.1,
            weights: vec![1.0 / 3.0; 3],
            noise_sd: 0.02,
            seed: 0,
            cycles_per_setting: 3,
            cycle_seconds: 60.0,
        }
    }
}

impl VpsConfig {
    pub fn bounds(&self) -> Result<Bounds, PlantError> {
        Bounds::interval(self.lo, self.hi).map_err(|e| PlantError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        self.bounds()?;
        if self.weights.len() != 3 {
            return Err(PlantError::Config(format!("need 3 weights, got {}", self.weights.len())));
        }
        validate_weights(&self.weights)?;
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(PlantError::Config("noise_sd must be finite and non-negative".into()));
        }
        if self.cycles_per_setting == 0 {
            return Err(PlantError::Config("cycles_per_setting must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ground-truth curves for batch `batch`: one conditional realization per objective.
fn ground_truth_curves(config: &VpsConfig, bounds: &Bounds, batch: u64) -> Result<Vec<Realization>, PlantError> {
    let rows = seed_rows();
    let xs: Vec<f64> = rows.iter().map(|r| rescale(r.x, bounds)).collect();
    let grid = equidistant_grid(bounds.lo(0), bounds.hi(0), TRUTH_GRID);
    (0..3)
        .map(|i| {
            let ys: Vec<f64> = rows.iter().map(|r| r.objectives()[i]).collect();
            let model = fit(&Dataset::from_1d(&xs, &ys, bounds.clone())?, true)?;
            let seed = derive_seed(config.seed, &[hash_str("ground-truth"), batch, i as u64]);
            Ok(model.simulate_conditional(&grid, seed)?)
        })
        .collect()
}

/// The simulated popcorn plant.
#[derive(Debug, Clone)]
pub struct VpsSimulator {
    config: VpsConfig,
    bounds: Bounds,
    batch: u64,
    curves: Vec<Realization>,
    noise: Rng,
    current: Option<Vec<f64>>,
    log: CycleLog,
    applications: usize,
}

impl VpsSimulator {
    pub fn new(config: VpsConfig) -> Result<Self, PlantError> {
        config.validate()?;
        let bounds = config.bounds()?;
        let curves = ground_truth_curves(&config, &bounds, 0)?;
        let noise = derived_rng(config.seed, &[hash_str("plant-noise")]);
        Ok(Self { config, bounds, batch: 0, curves, noise, current: None, log: CycleLog::default(), applications: 0 })
    }

    pub fn config(&self) -> &VpsConfig {
        &self.config
    }

    pub fn batch(&self) -> u64 {
        self.batch
    }

    /// Starts a new raw-material batch: fresh ground-truth curves, history kept.
    pub fn new_batch(&mut self) -> Result<(), PlantError> {
        self.batch += 1;
        self.curves = ground_truth_curves(&self.config, &self.bounds, self.batch)?;
        Ok(())
    }

    pub fn curves(&self) -> &[Realization] {
        &self.curves
    }

    /// The noise-free weighted aggregate of the current batch.
    pub fn ground_truth(&self) -> Realization {
        let parts: Vec<&Realization> = self.curves.iter().collect();
        Realization::weighted_sum(&parts, &self.config.weights).expect("curves share one grid")
    }

    /// Noise-free objectives at `x`.
    pub fn objectives_at(&self, x: f64) -> Vec<f64> {
        self.curves.iter().map(|c| c.eval(x)).collect()
    }

    pub fn history(&self) -> &[ProductionCycleRecord] {
        self.log.records()
    }

    fn cycle(&mut self, x: &[f64]) -> ProductionCycleRecord {
        let mut f = self.objectives_at(x[0]);
        if self.config.noise_sd > 0.0 {
            let n = Normal::new(0.0, self.config.noise_sd).expect("noise_sd is validated");
            for v in &mut f {
                *v += n.sample(&mut self.noise);
            }
        }
        self.log.push(x, f, &self.config.weights, self.config.cycle_seconds)
    }
}

impl PlantAdapter for VpsSimulator {
    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn weights(&self) -> &[f64] {
        &self.config.weights
    }

    fn apply(&mut self, x: &[f64]) -> Result<ProductionCycleRecord, PlantError> {
        if x.len() != 1 || !self.bounds.contains(x) {
            return Err(PlantError::OutOfBounds(x.to_vec()));
        }
        self.current = Some(x.to_vec());
        self.applications += 1;
        let mut last = None;
        for _ in 0..self.config.cycles_per_setting {
            last = Some(self.cycle(x));
        }
        Ok(last.expect("cycles_per_setting >= 1"))
    }

    fn run_cycle(&mut self) -> Result<ProductionCycleRecord, PlantError> {
        let x = self.current.clone().ok_or(PlantError::NotStarted)?;
        Ok(self.cycle(&x))
    }

    fn receive_new_data(&self, since: u64) -> Vec<ProductionCycleRecord> {
        self.log.since(since)
    }

    fn applications(&self) -> usize {
        self.applications
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> VpsSimulator {
        VpsSimulator::new(VpsConfig { noise_sd: 0.0, cycles_per_setting: 1, ..Default::default() }).unwrap()
    }

    #[test]
    fn seed_data_shape() {
        let rows = seed_rows();
        assert_eq!(rows.len(), 36);
        let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
        xs.dedup();
        assert_eq!(xs.len(), 12);
    }

    #[test]
    fn aggregate_is_weighted_sum() {
        let w = [1.0 / 3.0; 3];
        assert!((weighted_aggregate(&[0.3, 0.6, 0.9], &w) - 0.6).abs() < 1e-12);
        let mut p = VpsSimulator::new(VpsConfig::default()).unwrap();
        let r = p.apply(&[3000.0]).unwrap();
        assert_eq!(r.aggregate, weighted_aggregate(&r.f, &w));
    }

    #[test]
    fn bounds_and_determinism() {
        let mut p = quiet();
        assert!(matches!(p.apply(&[499.0]), Err(PlantError::OutOfBounds(_))));
        assert!(matches!(p.run_cycle(), Err(PlantError::NotStarted)));
        let a = p.apply(&[2500.0]).unwrap();
        let b = p.apply(&[2500.0]).unwrap();
        assert_eq!((a.f.clone(), a.aggregate), (b.f.clone(), b.aggregate));
        assert_eq!(b.cycle, a.cycle + 1);
        assert_eq!(p.applications(), 2);
    }

    #[test]
    fn receive_counts_and_orders() {
        let mut p = VpsSimulator::new(VpsConfig::default()).unwrap();
        for x in [600.0, 1200.0, 1800.0] {
            p.apply(&[x]).unwrap();
        }
        assert_eq!(p.receive_new_data(0).len(), 9);
        let latest = p.receive_new_data(0).last().unwrap().cycle;
        assert!(p.receive_new_data(latest).is_empty());
        assert!(p.receive_new_data(0).windows(2).all(|w| w[1].cycle > w[0].cycle));
        p.run_cycle().unwrap();
        assert_eq!(p.receive_new_data(latest).len(), 1);
    }

    #[test]
    fn ground_truth_respects_seed_data() {
        let p = quiet();
        let rows = seed_rows();
        for (i, c) in p.curves().iter().enumerate() {
            let (lo, hi) = c.range();
            // Each curve stays near the per-setting means of its objective.
            for x in [500.0, 3454.5, 7000.0] {
                let m: f64 = rows.iter().filter(|r| r.x == x).map(|r| r.objectives()[i]).sum::<f64>() / 3.0;
                assert!((c.eval(x) - m).abs() < 0.1 * (hi - lo).max(0.1), "objective {i} at {x}");
            }
        }
    }

    #[test]
    fn batches_change_truth_and_keep_history() {
        let mut p = quiet();
        p.apply(&[4000.0]).unwrap();
        let before = p.ground_truth();
        p.new_batch().unwrap();
        assert_ne!(before.values(), p.ground_truth().values());
        assert_eq!(p.history().len(), 1);
    }

    #[test]
    fn config_validation() {
        let bad = VpsConfig { weights: vec![1.0, 0.0, 0.0], ..Default::default() };
        assert!(matches!(VpsSimulator::new(bad), Err(PlantError::Weights(_))));
        assert!(VpsSimulator::new(VpsConfig { noise_sd: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn aggregate_dataset_matches_rows() {
        let b = Bounds::interval(500.0, 7000.0).unwrap();
        let d = seed_aggregate_dataset(&[0.8, 0.1, 0.1], &b).unwrap();
        assert_eq!(d.len(), 36);
    }
}
