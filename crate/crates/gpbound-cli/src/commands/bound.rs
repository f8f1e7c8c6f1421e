//! `gpbound bound`: MSPE bounds over a grid of test points.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gpbound_core::bound::{bound_report, write_reports_csv, BoundMethod, CandidateSet};

use crate::manifest::ManifestBuilder;
use crate::model::ModelFile;
use crate::util::parse_grid;

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Thm1,
    Thm2,
    Both,
}

impl From<MethodArg> for BoundMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Thm1 => BoundMethod::Thm1,
            MethodArg::Thm2 => BoundMethod::Thm2,
            MethodArg::Both => BoundMethod::Both,
        }
    }
}

#[derive(Args)]
pub struct BoundArgs {
    /// Estimate model JSON (as written by `fit`).
    #[arg(long)]
    pub estimate: PathBuf,

    /// Candidate set JSON: a list of {"family", "p", "lower", "upper"}.
    #[arg(long)]
    pub cands: PathBuf,

    /// Grid spec, one lo:hi:count segment per input dimension.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,

    /// Optional ground-truth model JSON; adds the exact_mspe column.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,

    /// Skip the monotonicity/quasi-concavity certification the closed-form
    /// bound normally requires.
    #[arg(long = "unsafe")]
    pub waive_certificates: bool,

    /// Sample budget for the certification checks.
    #[arg(long, default_value_t = 1000)]
    pub budget: usize,

    #[arg(long, default_value = "bounds.csv")]
    pub output: PathBuf,

    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn run(args: &BoundArgs, seed: u64) -> Result<()> {
    let mut manifest =
        ManifestBuilder::new("bound", seed, args.output.parent().unwrap_or(".".as_ref()));

    let estimate_file = ModelFile::load(&args.estimate)?;
    let (_, estimate) = estimate_file.instantiate(&args.estimate)?;

    let truth = match &args.truth {
        Some(path) => {
            let file = ModelFile::load(path)?;
            Some(file.instantiate(path)?.1)
        }
        None => None,
    };

    let text = std::fs::read_to_string(&args.cands)
        .with_context(|| format!("reading {}", args.cands.display()))?;
    let mut cands: CandidateSet =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.cands.display()))?;

    let method: BoundMethod = args.method.into();
    if matches!(method, BoundMethod::Thm2 | BoundMethod::Both) {
        if args.waive_certificates {
            log::warn!("skipping kernel property certification on request");
            cands.assume_certified();
        } else {
            cands.certify(args.budget, seed)?;
        }
    }

    let grid = parse_grid(&args.grid)?;
    if let Some(first) = grid.first() {
        if first.len() != estimate.data().input_dim() {
            bail!(
                "grid has {} dimensions but the data has {}",
                first.len(),
                estimate.data().input_dim()
            );
        }
    }

    let reports = bound_report(truth.as_ref(), &estimate, &cands, &grid, method)?;
    let file = std::fs::File::create(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    write_reports_csv(file, &reports)?;
    manifest.record(&args.output);
    if let Some(path) = &args.manifest {
        manifest.write(path)?;
    }
    Ok(())
}
