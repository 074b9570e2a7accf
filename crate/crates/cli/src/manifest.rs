use std::fs;
use std::path::Path;

use eyeball_core::backend::{BackendConfig, MockOracleConfig};
use eyeball_core::strategies::StrategyKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: String,
    pub sha256: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    pub sizes: Option<Vec<usize>>,
    pub limit: Option<usize>,
    pub k: usize,
    pub ensemble_sizes: Vec<usize>,
    pub iters: usize,
    pub demos: usize,
    pub initial_retry_cap: u32,
    pub single_temperature: f64,
    pub ensemble_temperature: f64,
}

/// Everything that determines the result rows of a run. Two runs with the
/// same experiment share an `experiment_id`, whichever backend served them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub strategy: StrategyKind,
    pub dataset_sha256: String,
    pub instances: Vec<String>,
    pub params: StrategyParams,
    pub prompt_template_version: u32,
    pub style_digest: String,
}

impl Experiment {
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("experiment serialize");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_utc: String,
    pub tool_version: String,
    pub experiment_id: String,
    pub experiment: Experiment,
    pub dataset: DatasetRef,
    /// The API key is never stored, only the name of its variable.
    pub backend: BackendConfig,
    pub text_model: Option<String>,
    pub mock: Option<MockOracleConfig>,
    pub transcript: Option<String>,
    pub workers: usize,
}

impl RunManifest {
    /// Short digest used in the run ID.
    pub fn digest(&self) -> String {
        let mut copy = self.clone();
        copy.run_id.clear();
        let json = serde_json::to_vec(&copy).expect("manifest serialize");
        hex::encode(&Sha256::digest(json)[..4])
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialize");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::Fault(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
