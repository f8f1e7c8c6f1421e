//! `gpbound fit`: maximum-likelihood hyperparameters for a CSV dataset.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use gpbound_core::gp::{fit_model, Dataset, FitConfig};

use crate::manifest::ManifestBuilder;
use crate::model::ModelFile;
use crate::util::{parse_family, parse_floats};

#[derive(Args)]
pub struct FitArgs {
    /// Training data CSV with x_1..x_k,y_1..y_j columns.
    #[arg(long)]
    pub data: PathBuf,

    /// Kernel family: poly, rq, se_ard or matern.
    #[arg(long)]
    pub family: String,

    /// Structural parameter (degree for poly, p for rq/matern).
    #[arg(long)]
    pub p: Option<u32>,

    /// Observation-noise variance; one value per output column, or a single
    /// value applied to all.
    #[arg(long, default_value = "0.01")]
    pub noise_var: String,

    #[arg(long, default_value_t = 10)]
    pub restarts: usize,

    #[arg(long, default_value = "model.json")]
    pub output: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Counts x_*/y_* columns from the header line so the noise vector can be
/// sized before the full parse.
fn peek_dims(path: &PathBuf) -> Result<(usize, usize)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or("");
    let n_x = header.split(',').filter(|c| c.trim().starts_with("x_")).count();
    let n_y = header.split(',').filter(|c| c.trim().starts_with("y_")).count();
    Ok((n_x, n_y))
}

pub fn run(args: &FitArgs, seed: u64) -> Result<()> {
    let mut manifest = ManifestBuilder::new("fit", seed, args.output.parent().unwrap_or(".".as_ref()));

    let (n_x, n_y) = peek_dims(&args.data)?;
    if n_x == 0 || n_y == 0 {
        bail!(gpbound_core::Error::CsvParse {
            line: 1,
            detail: format!("{} has no x_*/y_* header", args.data.display()),
        });
    }
    let mut noise = parse_floats(&args.noise_var)?;
    if noise.len() == 1 && n_y > 1 {
        noise = vec![noise[0]; n_y];
    }
    let data = Arc::new(Dataset::from_csv_path(&args.data, noise.clone())?);
    let family = parse_family(&args.family, args.p, n_x + 1)?;

    let cfg = FitConfig {
        restarts: args.restarts,
        seed,
        ..FitConfig::default()
    };
    let (model, diagnostics) = fit_model(&family, &data, &cfg)?;
    for (i, diag) in diagnostics.iter().enumerate() {
        log::info!(
            "output {}: phi {:?}, log likelihood {:.4}",
            i + 1,
            model.spec(i).phi(),
            diag.best_lml
        );
    }

    let file = ModelFile {
        kernels: model.specs().to_vec(),
        noise_var: noise,
        data: args.data.display().to_string(),
        diagnostics: Some(diagnostics),
    };
    file.save(&args.output)?;
    manifest.record(&args.output);
    if let Some(path) = &args.manifest {
        manifest.write(path)?;
    }
    Ok(())
}
