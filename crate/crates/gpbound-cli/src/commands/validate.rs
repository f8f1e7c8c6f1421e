//! `gpbound validate`: Monte Carlo cross-check of the analytic MSPE.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use gpbound_core::bound::exact_mspe;
use gpbound_core::oracle::{mc_mspe, McConfig};

use crate::manifest::ManifestBuilder;
use crate::model::ModelFile;
use crate::util::parse_floats;

#[derive(Args)]
pub struct ValidateArgs {
    /// Ground-truth model JSON.
    #[arg(long)]
    pub truth: PathBuf,

    /// Estimate model JSON.
    #[arg(long)]
    pub estimate: PathBuf,

    /// Test point, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,

    #[arg(long, default_value_t = 200_000)]
    pub n_samples: usize,

    #[arg(long, default_value = "oracle.json")]
    pub output: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: &ValidateArgs, seed: u64) -> Result<()> {
    let mut manifest =
        ManifestBuilder::new("validate", seed, args.output.parent().unwrap_or(".".as_ref()));

    let (_, truth) = ModelFile::load(&args.truth)?.instantiate(&args.truth)?;
    let (_, estimate) = ModelFile::load(&args.estimate)?.instantiate(&args.estimate)?;
    let x = parse_floats(&args.x)?;

    let mc = mc_mspe(&truth, &estimate, &x, &McConfig::new(args.n_samples, seed))?;
    let analytic = exact_mspe(&truth, &estimate, &x)?;
    log::info!(
        "monte carlo {:.6} +- {:.6}, analytic {:.6}",
        mc.estimate,
        mc.std_error,
        analytic
    );

    let mut value = serde_json::to_value(&mc)?;
    value["exact_mspe"] = serde_json::json!(analytic);
    value["x"] = serde_json::json!(x);
    std::fs::write(&args.output, serde_json::to_string_pretty(&value)?)
        .with_context(|| format!("writing {}", args.output.display()))?;
    manifest.record(&args.output);
    if let Some(path) = &args.manifest {
        manifest.write(path)?;
    }
    Ok(())
}
