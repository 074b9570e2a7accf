//! Exact optima stored beside a dataset as `<stem>.optima.json`.

use std::fs;
use std::path::{Path, PathBuf};

use eyeball_core::instances::Dataset;
use eyeball_core::solver::{solve_exact, tour_length, Route, SolvedInstance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OPTIMA_SCHEMA: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct OptimaFile {
    schema: u32,
    solutions: Vec<Solution>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Solution {
    instance_id: String,
    optimal_route: Route,
    optimal_length: f64,
}

pub fn optima_path(dataset_path: &Path) -> PathBuf {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset_path.with_file_name(format!("{stem}.optima.json"))
}

pub fn solve_all(dataset: &Dataset) -> Result<Vec<SolvedInstance>, CliError> {
    dataset
        .instances
        .par_iter()
        .map(|i| solve_exact(i).map_err(|e| CliError::Fault(format!("{}: {e}", i.instance_id))))
        .collect()
}

pub fn save(solved: &[SolvedInstance], path: &Path) -> Result<(), CliError> {
    let file = OptimaFile {
        schema: OPTIMA_SCHEMA,
        solutions: solved
            .iter()
            .map(|s| Solution {
                instance_id: s.instance.instance_id.clone(),
                optimal_route: s.optimal_route.clone(),
                optimal_length: s.optimal_length,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("optima serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Fault(format!("cannot write {}: {e}", path.display())))
}

/// Optima for every dataset instance, read from `path` when present and
/// consistent, otherwise solved afresh.
pub fn load_or_solve(dataset: &Dataset, path: &Path) -> Result<Vec<SolvedInstance>, CliError> {
    if !path.exists() {
        log::info!("{} not found; solving {} instances", path.display(), dataset.instances.len());
        return solve_all(dataset);
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Fault(format!("cannot read {}: {e}", path.display())))?;
    let file: OptimaFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid optima file {}: {e}", path.display())))?;
    if file.schema != OPTIMA_SCHEMA {
        return Err(CliError::Usage(format!(
            "{}: unsupported optima schema {}",
            path.display(),
            file.schema
        )));
    }
    dataset
        .instances
        .iter()
        .map(|inst| {
            let sol = file
                .solutions
                .iter()
                .find(|s| s.instance_id == inst.instance_id)
                .ok_or_else(|| {
                    CliError::Usage(format!("{} lacks an optimum for {}", path.display(), inst.instance_id))
                })?;
            let length = tour_length(&sol.optimal_route, inst)
                .map_err(|e| CliError::Usage(format!("{}: {e}", inst.instance_id)))?;
            if (length - sol.optimal_length).abs() > 1e-6 {
                return Err(CliError::Usage(format!(
                    "{}: stored optimum {} does not match its route ({length})",
                    inst.instance_id, sol.optimal_length
                )));
            }
            Ok(SolvedInstance {
                instance: inst.clone(),
                optimal_route: sol.optimal_route.clone(),
                optimal_length: sol.optimal_length,
            })
        })
        .collect()
}
