//! On-disk model format: kernel specs, noise variances and a reference to
//! the training data CSV.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use gpbound_core::gp::{Dataset, FitDiagnostics, GpModel};
use gpbound_core::kernels::KernelSpec;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub kernels: Vec<KernelSpec>,
    pub noise_var: Vec<f64>,
    /// Path of the training CSV, relative to this file's directory when not
    /// absolute.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Vec<FitDiagnostics>>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?)
    }

    fn data_path(&self, model_path: &Path) -> PathBuf {
        let direct = PathBuf::from(&self.data);
        if direct.is_absolute() || direct.exists() {
            direct
        } else {
            model_path.parent().unwrap_or(Path::new(".")).join(&self.data)
        }
    }

    /// Loads the referenced dataset and assembles the model.
    pub fn instantiate(&self, model_path: &Path) -> Result<(Arc<Dataset>, GpModel)> {
        let data_path = self.data_path(model_path);
        let data = Dataset::from_csv_path(&data_path, self.noise_var.clone())
            .with_context(|| format!("loading dataset {}", data_path.display()))?;
        let data = Arc::new(data);
        let model = GpModel::new(Arc::clone(&data), self.kernels.clone())?;
        Ok((data, model))
    }
}
