//! `gpbound check-kernel`: property checks for one family over a box.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use gpbound_core::bound::HyperRectangle;
use gpbound_core::kernels::{
    check_componentwise_monotone, check_line_quasiconcave, PropertyReport,
};
use serde::Serialize;

use crate::util::{parse_box, parse_family};

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Monotone,
    Quasiconcave,
    Both,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Kernel family: poly, rq, se_ard or matern.
    #[arg(long)]
    pub family: String,

    /// Structural parameter (degree for poly, p for rq/matern).
    #[arg(long)]
    pub p: Option<u32>,

    /// Hyperparameter box as lower:upper, comma-separated coordinates.
    #[arg(long = "box")]
    pub phi_box: String,

    #[arg(long, default_value_t = 1000)]
    pub budget: usize,

    #[arg(long, value_enum, default_value_t = CheckKind::Both)]
    pub check: CheckKind,

    /// Report file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct CheckOut {
    passed: bool,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
}

impl From<PropertyReport> for CheckOut {
    fn from(report: PropertyReport) -> Self {
        CheckOut {
            passed: report.passed,
            samples: report.samples,
            witness: report.witness.map(|w| format!("{w:?}")),
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    family: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
    budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    monotone: Option<CheckOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quasiconcave: Option<CheckOut>,
}

pub fn run(args: &CheckArgs, seed: u64) -> Result<()> {
    let (lower, upper) = parse_box(&args.phi_box)?;
    let family = parse_family(&args.family, args.p, lower.len())?;
    let phi_box = HyperRectangle::new(lower.clone(), upper.clone())?;

    let monotone = match args.check {
        CheckKind::Monotone | CheckKind::Both => Some(CheckOut::from(
            check_componentwise_monotone(&family, &phi_box, args.budget, seed)?,
        )),
        CheckKind::Quasiconcave => None,
    };
    let quasiconcave = match args.check {
        CheckKind::Quasiconcave | CheckKind::Both => Some(CheckOut::from(
            check_line_quasiconcave(&family, &phi_box, args.budget, seed.wrapping_add(1))?,
        )),
        CheckKind::Monotone => None,
    };

    let report = CheckReport {
        family: args.family.clone(),
        lower,
        upper,
        budget: args.budget,
        monotone,
        quasiconcave,
    };
    let json = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => std::fs::write(path, json)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}
