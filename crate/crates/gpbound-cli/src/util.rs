//! Argument parsing helpers shared by the subcommands.

use anyhow::{bail, Context, Result};
use gpbound_core::kernels::{family_from_parts, KernelFamily};
use gpbound_core::Error;

pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::DimensionMismatch { .. } => "dimension-mismatch",
        Error::PhiOutOfDomain { .. } => "phi-out-of-domain",
        Error::InputOutOfDomain { .. } => "input-out-of-domain",
        Error::InvalidBox(_) => "invalid-box",
        Error::EmptyCandidateSet => "empty-candidate-set",
        Error::MissingCertificate => "missing-certificate",
        Error::PropertyCheckFailed { .. } => "property-check-failed",
        Error::IllConditionedGram { .. } => "ill-conditioned-gram",
        Error::NonConvergence { .. } => "non-convergence",
        Error::FitFailed(_) => "fit-failed",
        Error::InvalidConfig(_) => "invalid-config",
        Error::CsvParse { .. } => "csv-parse",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// `"0.5,1.0"` -> `[0.5, 1.0]`.
pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .with_context(|| format!("bad float \"{f}\""))
        })
        .collect()
}

/// Grid spec: one `lo:hi:count` segment per input dimension, separated by
/// commas. `-10:15:251` is a 1-D grid; `-1:1:21,-1:1:21` a 21x21 plane.
pub fn parse_grid(spec: &str) -> Result<Vec<Vec<f64>>> {
    let mut axes = Vec::new();
    for segment in spec.split(',') {
        let parts: Vec<&str> = segment.split(':').collect();
        if parts.len() != 3 {
            bail!("grid segment \"{segment}\" is not lo:hi:count");
        }
        let lo: f64 = parts[0].trim().parse().context("bad grid lower limit")?;
        let hi: f64 = parts[1].trim().parse().context("bad grid upper limit")?;
        let count: usize = parts[2].trim().parse().context("bad grid count")?;
        if count == 0 || !(hi >= lo) {
            bail!("grid segment \"{segment}\" is empty");
        }
        let axis: Vec<f64> = if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        };
        axes.push(axis);
    }
    let total: usize = axes.iter().map(Vec::len).product();
    if total > 1_000_000 {
        bail!("grid of {total} points is too large");
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(grid.len() * axis.len());
        for prefix in &grid {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        grid = next;
    }
    Ok(grid)
}

/// `"1,0.5:5,2"` -> box with lower `[1, 0.5]`, upper `[5, 2]`.
pub fn parse_box(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        bail!("box \"{text}\" is not lower:upper");
    }
    Ok((parse_floats(parts[0])?, parse_floats(parts[1])?))
}

pub fn parse_family(name: &str, p: Option<u32>, phi_len: usize) -> Result<KernelFamily> {
    Ok(family_from_parts(name, p, phi_len)?)
}
