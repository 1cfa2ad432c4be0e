//! Study orchestration: sampling, evaluation, repair, retraining and reports.

mod bootstrap;
mod metrics;
mod report;
mod study;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::TrainConfig;
use crate::plant::{PlantId, PlantModel};
use crate::repair::{RepairConfig, Strategy};

pub use bootstrap::{bootstrap, demonstrations, BootstrapConfig};
pub use metrics::{normalize, safety_rate, summarize, trace_metrics, MetricReport, TraceMetrics};
pub use report::{StrategyResult, StudyReport, TimingRow};
pub use study::{run_study, sample_traces};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "CTRLREPAIR_OUTPUT_DIR";

/// Seed offsets of the trace sets; train and test seeds never overlap for
/// fewer than a billion traces.
pub const TEST_SEED_OFFSET: u64 = 1_000_000_000;
pub const REPAIR_SEED_OFFSET: u64 = 2_000_000_000;
pub const BOOTSTRAP_SEED_OFFSET: u64 = 3_000_000_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error(transparent)]
    Stl(#[from] crate::stl::StlError),
    #[error(transparent)]
    Repair(#[from] crate::repair::RepairError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub plant: PlantId,
    /// Plant constants; defaults to the benchmark model of `plant`.
    pub model: Option<PlantModel>,
    /// Weight file of the original controller. Without one, a controller is
    /// bootstrapped from the plant's reference law.
    pub controller: Option<PathBuf>,
    /// Original training set (CSV). Defaults to the bootstrap demonstrations,
    /// or to an empty set when a controller file is given.
    pub dataset: Option<PathBuf>,
    /// Requirement text; defaults to the plant's benchmark requirement.
    pub requirement: Option<String>,
    pub train_traces: usize,
    pub test_traces: usize,
    pub strategies: Vec<Strategy>,
    pub repair: RepairConfig,
    pub retrain: TrainConfig,
    pub bootstrap: Option<BootstrapConfig>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Write every evaluated trace as CSV under `traces/`.
    pub persist_traces: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            plant: PlantId::Acc,
            model: None,
            controller: None,
            dataset: None,
            requirement: None,
            train_traces: 200,
            test_traces: 100,
            strategies: vec![Strategy::MinSat, Strategy::Similar, Strategy::Random],
            repair: RepairConfig::default(),
            retrain: TrainConfig::default(),
            bootstrap: None,
            output_dir: PathBuf::from("study-out"),
            master_seed: 2024,
            persist_traces: false,
        }
    }
}

impl StudyConfig {
    pub fn for_plant(plant: PlantId) -> Self {
        Self {
            plant,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("study config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_traces == 0 || self.test_traces == 0 {
            return Err(HarnessError::Config("train_traces and test_traces must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(HarnessError::Config("at least one strategy is required".into()));
        }
        if let Some(m) = &self.model {
            if m.id() != self.plant {
                return Err(HarnessError::Config(format!(
                    "model constants are for {} but plant is {}",
                    m.id(),
                    self.plant
                )));
            }
        }
        self.repair.validate()?;
        Ok(())
    }

    pub fn plant_model(&self) -> PlantModel {
        self.model.clone().unwrap_or_else(|| PlantModel::for_id(self.plant))
    }

    pub fn requirement_text(&self) -> String {
        self.requirement
            .clone()
            .unwrap_or_else(|| self.plant_model().default_requirement())
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        self.bootstrap
            .clone()
            .unwrap_or_else(|| BootstrapConfig::for_plant(self.plant))
    }

    /// Output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}
