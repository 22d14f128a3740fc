//! Ground truth versus simulated test functions: the same portfolio is run on
//! the plant's noise-free aggregate and on unconditional realizations fitted
//! to the seed data, and the two rank structures are correlated.

use crate::gp::SimulationMethod;
use crate::optimizers::{Algorithm, OptimizerConfig};
use crate::plant::{seed_aggregate_dataset, PlantAdapter, VpsSimulator};

use super::{
    generate_test_functions, rank_correlation, run_campaign, BenchmarkError, CampaignOutput, CampaignSettings,
    Correlation, TestInstance,
};

pub const GROUND_TRUTH_ID: &str = "ground-truth";

#[derive(Debug, Clone)]
pub struct FidelityOutput {
    pub ground_truth: CampaignOutput,
    pub simulation: CampaignOutput,
    pub correlation: Correlation,
}

/// Every portfolio algorithm at its default configuration.
pub fn portfolio_entries() -> Vec<(String, OptimizerConfig)> {
    Algorithm::ALL.iter().map(|a| (a.name().to_string(), OptimizerConfig::new(*a))).collect()
}

/// Runs `entries` on the plant's ground truth and on `k` simulated instances.
/// Simulated instances draw from `settings.seed`.
pub fn fidelity_experiment(
    plant: &VpsSimulator,
    entries: &[(String, OptimizerConfig)],
    k: usize,
    method: SimulationMethod,
    settings: &CampaignSettings,
) -> Result<FidelityOutput, BenchmarkError> {
    let gt = TestInstance::new(GROUND_TRUTH_ID, plant.ground_truth());
    let data =
        seed_aggregate_dataset(plant.weights(), plant.bounds()).map_err(|e| BenchmarkError::Config(e.to_string()))?;
    let set = generate_test_functions(&data, k, method, settings.seed)?;
    let ground_truth = run_campaign(entries, std::slice::from_ref(&gt), settings)?;
    let simulation = run_campaign(entries, set.instances(), settings)?;
    let correlation = rank_correlation(&ground_truth.records, &simulation.records)?;
    Ok(FidelityOutput { ground_truth, simulation, correlation })
}
