use std::path::{Path, PathBuf};

use caai_core::benchmark::{CampaignSettings, CpuClock, DEFAULT_CHECKPOINTS, DEFAULT_REPS};
use caai_core::cognition::CognitionConfig;
use caai_core::gp::SimulationMethod;
use caai_core::plant::VpsConfig;
use caai_core::rating::RatingWeights;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Settings of the standalone `benchmark` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub k_instances: usize,
    pub reps: usize,
    pub checkpoints: Vec<usize>,
    pub simulation: SimulationMethod,
    pub cpu_clock: CpuClock,
    pub parallel: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            k_instances: 5,
            reps: DEFAULT_REPS,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            simulation: SimulationMethod::Spectral,
            cpu_clock: CpuClock::Thread,
            parallel: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn settings(&self, seed: u64) -> CampaignSettings {
        CampaignSettings {
            checkpoints: self.checkpoints.clone(),
            reps: self.reps,
            tuning_budget: 1,
            seed,
            parallel: self.parallel,
            cpu_clock: self.cpu_clock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Relative paths resolve against the config file's directory. `None` uses the template KB.
    pub kb_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub cycles: usize,
    /// Steps before which the plant switches to a new raw-material batch.
    pub batch_schedule: Vec<usize>,
    pub cognition: CognitionConfig,
    pub plant: VpsConfig,
    pub benchmark: BenchmarkConfig,
    /// Weight vectors for the report's aggregate-rank tables.
    pub scenarios: Vec<RatingWeights>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kb_path: None,
            output_dir: None,
            cycles: 36,
            batch_schedule: vec![],
            cognition: CognitionConfig::default(),
            plant: VpsConfig::default(),
            benchmark: BenchmarkConfig::default(),
            scenarios: vec![RatingWeights::new(0.8, 0.1, 0.1), RatingWeights::new(0.5, 0.25, 0.25)],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_yaml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(kb) = &cfg.kb_path {
            if kb.is_relative() {
                cfg.kb_path = Some(base.join(kb));
            }
        }
        Ok(cfg)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    /// Applies the master seed to every stochastic component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.cognition.master_seed = seed;
        self.plant.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.cognition.validate().map_err(|e| cfg(&e))?;
        self.plant.validate().map_err(|e| cfg(&e))?;
        self.benchmark.settings(0).validate().map_err(|e| cfg(&e))?;
        if self.benchmark.k_instances < 1 {
            return Err(CliError::Config("benchmark.k_instances must be at least 1".into()));
        }
        for w in &self.scenarios {
            w.validate().map_err(|e| cfg(&e))?;
        }
        Ok(())
    }
}
