//! Job configuration file (TOML). Every section is optional and defaults to
//! the sodium experiment at full scale.

use std::path::{Path, PathBuf};

use qcga::error_model::AssayParams;
use qcga::ga::GaParams;
use qcga::genome::GenomeLayout;
use qcga::objective::ObjectiveConfig;
use qcga::rng::{Lcg, StreamKey};
use qcga::rules::ControlLayout;
use qcga::simulator::{HistoryPolicy, SimulationPlan};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    pub measurements_per_level: usize,
    pub levels: u8,
    pub per_level: u8,
    pub history: HistoryPolicy,
    pub seed: u64,
    pub stream_id: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        let plan = SimulationPlan::default();
        Self {
            measurements_per_level: plan.measurements_per_level,
            levels: plan.control.levels,
            per_level: plan.control.per_level,
            history: plan.history,
            seed: plan.stream.seed,
            stream_id: plan.stream.stream_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub replicates: usize,
    pub base_seed: u64,
    /// Procedures compared besides the library, in either notation.
    pub procedures: Vec<String>,
    pub include_builtin: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            replicates: qcga::stats::DEFAULT_REPLICATES,
            base_seed: 1,
            procedures: Vec::new(),
            include_builtin: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// Self-describing JSON document.
    Doc,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobConfig {
    pub assay: AssayParams,
    pub objective: ObjectiveConfig,
    pub ga: GaParams,
    pub plan: PlanConfig,
    pub layout: GenomeLayout,
    pub rng: Lcg,
    pub compare: CompareConfig,
    pub library_files: Vec<PathBuf>,
    pub output: OutputConfig,
}

impl JobConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Library paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for file in &mut cfg.library_files {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        Ok(cfg)
    }

    /// Sets every seed of the job: search, simulation and comparison.
    pub fn set_seed(&mut self, seed: u64) {
        self.ga.seed = seed;
        self.plan.seed = seed;
        self.compare.base_seed = seed;
    }

    pub fn simulation_plan(&self) -> SimulationPlan {
        SimulationPlan {
            measurements_per_level: self.plan.measurements_per_level,
            control: ControlLayout { levels: self.plan.levels, per_level: self.plan.per_level },
            history: self.plan.history,
            lcg: self.rng,
            stream: StreamKey::new(self.plan.seed, self.plan.stream_id),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |section: &str, e: qcga::Error| CliError::Config(format!("[{section}] {e}"));
        self.assay.validate().map_err(|e| field("assay", e))?;
        self.objective.validate().map_err(|e| field("objective", e))?;
        self.ga.validate().map_err(|e| field("ga", e))?;
        self.layout.validate().map_err(|e| field("layout", e))?;
        self.rng.validate().map_err(|e| field("rng", e))?;
        self.simulation_plan().validate().map_err(|e| field("plan", e))?;
        self.rng.stream(self.plan.seed, self.plan.stream_id).map_err(|e| field("plan", e))?;
        if self.compare.replicates < 2 {
            return Err(CliError::Config(format!(
                "[compare] replicates must be at least 2, got {}",
                self.compare.replicates
            )));
        }
        self.rng.stream(self.compare.base_seed, 0).map_err(|e| field("compare", e))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
