//! Marginal-likelihood evaluation and hyperparameter optimization.
//!
//! The fit maximizes `log P(Y | X, phi)` by projected gradient ascent in
//! log-hyperparameter coordinates, restarted from points drawn log-uniformly
//! inside a configurable bracket. Observation noise is supplied by the data,
//! not optimized.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chol::jittered_cholesky;
use crate::error::{Error, Result};
use crate::gp::{gram, Dataset, GpModel};
use crate::kernels::{KernelFamily, KernelSpec, PHI_FLOOR};
use crate::opt::{projected_ascent, AscentConfig};

const LN_2PI: f64 = 1.8378770664093453;

/// `log P(y | X, phi) = -1/2 y^T K^{-1} y - 1/2 log det K - m/2 log 2pi`,
/// evaluated through a (jitter-stabilized) Cholesky factorization.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    points: &[Vec<f64>],
    y: &DVector<f64>,
    noise_var: f64,
) -> Result<f64> {
    let m = points.len();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            context: "training outputs",
            expected: m,
            got: y.len(),
        });
    }
    let k = gram(spec, points, noise_var)?;
    let chol = jittered_cholesky(&k)?;
    let alpha = chol.solve(y);
    Ok(-0.5 * y.dot(&alpha) - 0.5 * chol.ln_det() - 0.5 * m as f64 * LN_2PI)
}

/// Gradient of the log marginal likelihood with respect to `log phi`; this is
/// the ascent direction used by [`fit_hyperparameters`].
///
/// Uses `d lml / d phi_j = 1/2 (alpha^T dK/dphi_j alpha - tr(K^{-1} dK/dphi_j))`
/// with `alpha = K^{-1} y`, then chains through `phi_j = exp(theta_j)`.
pub fn lml_grad_logphi(
    spec: &KernelSpec,
    points: &[Vec<f64>],
    y: &DVector<f64>,
    noise_var: f64,
) -> Result<Vec<f64>> {
    let m = points.len();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            context: "training outputs",
            expected: m,
            got: y.len(),
        });
    }
    let k = gram(spec, points, noise_var)?;
    let chol = jittered_cholesky(&k)?;
    let alpha = chol.solve(y);
    let k_inv = chol.inverse();

    let l = spec.phi().len();
    let mut grad = vec![0.0; l];
    for a in 0..m {
        for b in 0..=a {
            let g = spec.grad_phi(&points[a], &points[b])?;
            // dK is symmetric; off-diagonal entries appear twice
            let w = alpha[a] * alpha[b] - k_inv[(a, b)];
            let factor = if a == b { 0.5 } else { 1.0 };
            for j in 0..l {
                grad[j] += factor * w * g[j];
            }
        }
    }
    for j in 0..l {
        grad[j] *= spec.phi()[j];
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub restarts: usize,
    pub seed: u64,
    /// Bracket for every hyperparameter during the fit.
    pub phi_min: f64,
    pub phi_max: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 10,
            seed: 0,
            phi_min: 1e-2,
            phi_max: 1e2,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RestartRecord {
    pub start_phi: Vec<f64>,
    pub phi: Vec<f64>,
    pub lml: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    pub restarts: Vec<RestartRecord>,
    pub best_lml: f64,
}

/// Multi-start maximum-likelihood fit of one output column. Deterministic for
/// a fixed `cfg.seed`.
pub fn fit_hyperparameters(
    family: &KernelFamily,
    points: &[Vec<f64>],
    y: &DVector<f64>,
    noise_var: f64,
    cfg: &FitConfig,
) -> Result<(KernelSpec, FitDiagnostics)> {
    family.validate()?;
    if cfg.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be >= 1".into()));
    }
    if !(cfg.phi_min >= PHI_FLOOR && cfg.phi_max > cfg.phi_min) {
        return Err(Error::InvalidConfig(format!(
            "fit bracket [{}, {}] is invalid",
            cfg.phi_min, cfg.phi_max
        )));
    }
    let l = family.phi_len();
    let theta_lo = vec![cfg.phi_min.ln(); l];
    let theta_hi = vec![cfg.phi_max.ln(); l];

    let objective = |theta: &[f64]| -> f64 {
        let phi: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        match KernelSpec::new(*family, phi) {
            Ok(spec) => log_marginal_likelihood(&spec, points, y, noise_var)
                .unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let gradient = |theta: &[f64]| -> Vec<f64> {
        let phi: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        KernelSpec::new(*family, phi)
            .ok()
            .and_then(|spec| lml_grad_logphi(&spec, points, y, noise_var).ok())
            .unwrap_or_else(|| vec![0.0; theta.len()])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ascent_cfg = AscentConfig {
        tol: cfg.tol,
        max_iters: cfg.max_iters,
        ..AscentConfig::default()
    };

    let mut records = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.restarts {
        let theta0: Vec<f64> = (0..l)
            .map(|_| rng.gen_range(cfg.phi_min.ln()..cfg.phi_max.ln()))
            .collect();
        let res = projected_ascent(objective, gradient, &theta_lo, &theta_hi, &theta0, &ascent_cfg);
        let phi: Vec<f64> = res.x.iter().map(|t| t.exp()).collect();
        records.push(RestartRecord {
            start_phi: theta0.iter().map(|t| t.exp()).collect(),
            phi: phi.clone(),
            lml: res.value,
            converged: res.converged,
        });
        if res.value.is_finite() && best.as_ref().map_or(true, |(v, _)| res.value > *v) {
            best = Some((res.value, phi));
        }
    }

    match best {
        Some((best_lml, phi)) => {
            let spec = KernelSpec::new(*family, phi)?;
            Ok((
                spec,
                FitDiagnostics {
                    restarts: records,
                    best_lml,
                },
            ))
        }
        None => Err(Error::FitFailed(
            "no restart produced a positive-definite Gram matrix".into(),
        )),
    }
}

/// Fits every output column of `data` with the same family and assembles the
/// resulting model. Per-column restarts use decorrelated seed streams.
pub fn fit_model(
    family: &KernelFamily,
    data: &Arc<Dataset>,
    cfg: &FitConfig,
) -> Result<(GpModel, Vec<FitDiagnostics>)> {
    let mut specs = Vec::with_capacity(data.output_dim());
    let mut diags = Vec::with_capacity(data.output_dim());
    for i in 0..data.output_dim() {
        let col_cfg = FitConfig {
            seed: cfg.seed.wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15)),
            ..cfg.clone()
        };
        let (spec, diag) =
            fit_hyperparameters(family, data.points(), &data.output_col(i), data.noise_var(i), &col_cfg)?;
        specs.push(spec);
        diags.push(diag);
    }
    let model = GpModel::new(Arc::clone(data), specs)?;
    Ok((model, diags))
}
