//! `eyeball.toml`: optional defaults for `generate` and `run`, overridden
//! by flags. Keys mirror the flag names with underscores.
//!
//! ```toml
//! [generate]
//! seed = 1
//!
//! [run]
//! backend = "http"
//! model = "gpt-4o"
//! workers = 8
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "eyeball.toml";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub generate: GenerateFile,
    #[serde(default)]
    pub run: RunFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateFile {
    pub sizes: Option<Vec<usize>>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub dataset: Option<PathBuf>,
    pub strategy: Option<String>,
    pub sizes: Option<Vec<usize>>,
    pub limit: Option<usize>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub text_model: Option<String>,
    pub api_key_env: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub timeout: Option<u64>,
    pub max_retries: Option<u32>,
    pub retry_base_ms: Option<u64>,
    pub max_concurrent: Option<usize>,
    /// Provider-specific fields merged into every request body.
    pub extra_body: Option<toml::Table>,
    pub mock_p_optimal: Option<f64>,
    pub mock_p_perturbed: Option<f64>,
    pub mock_p_incorrect_id: Option<f64>,
    pub mock_p_incomplete: Option<f64>,
    pub mock_p_unparseable: Option<f64>,
    pub mock_perturb_moves: Option<u32>,
    pub mock_seed: Option<u64>,
    pub transcript: Option<PathBuf>,
    pub k: Option<usize>,
    pub ensemble_sizes: Option<Vec<usize>>,
    pub iters: Option<usize>,
    pub demos: Option<usize>,
    pub workers: Option<usize>,
    pub dump_prompts: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

/// Reads the explicit config file, or `./eyeball.toml` when it exists.
pub fn load(explicit: Option<&Path>) -> Result<FileConfig, CliError> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = PathBuf::from(DEFAULT_CONFIG_FILE);
            if !p.exists() {
                return Ok(FileConfig::default());
            }
            p
        }
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg: FileConfig = toml::from_str(
            "[generate]\nseed = 3\n[run]\nstrategy = \"ensemble\"\nensemble_sizes = [3, 5]\n\
             [run.extra_body]\nsafety = \"off\"\n",
        )
        .unwrap();
        assert_eq!(cfg.generate.seed, Some(3));
        assert_eq!(cfg.run.ensemble_sizes, Some(vec![3, 5]));
        assert!(cfg.run.extra_body.is_some());
        assert!(toml::from_str::<FileConfig>("[run]\nbogus = 1\n").is_err());
    }
}
