//! The fitted-model file: a forest plus the settings that produced it.

use std::path::Path;

use cifrf_core::{ForestModel, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

pub const FORMAT: &str = "cifrf-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// Resolved settings of the `fit` run.
    pub config: serde_json::Value,
    pub covariate_names: Vec<String>,
    pub forest: ForestModel,
}

impl ModelFile {
    pub fn new(config: serde_json::Value, covariate_names: Vec<String>, forest: ForestModel) -> Self {
        ModelFile { format: FORMAT.into(), version: VERSION, config, covariate_names, forest }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let file: ModelFile = io::read_json(path)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(CliError::format(path, format!("unsupported model format {} v{}", file.format, file.version)));
        }
        if file.covariate_names.is_empty() {
            return Err(CliError::format(path, "model lists no covariates"));
        }
        let grid = file.forest.grid();
        TimeGrid::new(grid.times().to_vec(), grid.weights().to_vec()).map_err(|e| CliError::format(path, e))?;
        Ok(file)
    }
}
