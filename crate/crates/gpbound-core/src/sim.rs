//! End-to-end 1-D state-space scenario: a ground-truth GP with a Matern
//! covariance generates training data, a squared-exponential GP is fitted to
//! it by maximum likelihood, and the misspecification error is quantified
//! over the state space and along a rollout of the learned dynamics.
//!
//! The candidate battery pairs the truth's own family (with a configurable
//! error interval around its hyperparameters) with fixed Matern, rational
//! quadratic and squared exponential entries, so the data-generating kernel
//! is always an element of the set and the closed-form bound applies.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{BoundEngine, BoundMethod, CandidateEntry, CandidateSet, HyperRectangle};
use crate::chol::jittered_cholesky;
use crate::error::{Error, Result};
use crate::gp::{fit_model, Dataset, FitConfig, FitDiagnostics, GpModel};
use crate::kernels::{KernelFamily, KernelSpec, PHI_FLOOR};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridRange {
    pub fn linspace(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lo];
        }
        (0..self.points)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// Which dynamics drive the rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    Estimated,
    True,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutConfig {
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_dynamics")]
    pub dynamics: Dynamics,
    /// Index into `interval_scales` selecting the candidate set used along
    /// the rollout.
    #[serde(default)]
    pub variant: usize,
}

fn default_x0() -> f64 {
    1.0
}

fn default_steps() -> usize {
    10
}

fn default_dynamics() -> Dynamics {
    Dynamics::Estimated
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            x0: default_x0(),
            steps: default_steps(),
            dynamics: default_dynamics(),
            variant: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_truth_kernel")]
    pub truth_kernel: KernelSpec,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_train_range")]
    pub train_range: (f64, f64),
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_eval_grid")]
    pub eval_grid: GridRange,
    /// `(lower_factor, upper_factor)` pairs scaling the truth's
    /// hyperparameters into one candidate box per pair; a zero lower factor
    /// is clipped to the positive floor.
    #[serde(default = "default_interval_scales")]
    pub interval_scales: Vec<(f64, f64)>,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default = "default_fit_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "default_certify_budget")]
    pub certify_budget: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_truth_kernel() -> KernelSpec {
    KernelSpec::new(KernelFamily::Matern { p: 1 }, vec![5.2, 1.6]).expect("valid default kernel")
}

fn default_n_train() -> usize {
    10
}

fn default_train_range() -> (f64, f64) {
    (-10.0, 15.0)
}

fn default_noise_var() -> f64 {
    0.01
}

fn default_eval_grid() -> GridRange {
    GridRange {
        lo: -10.0,
        hi: 15.0,
        points: 251,
    }
}

fn default_interval_scales() -> Vec<(f64, f64)> {
    vec![(0.9, 1.1), (0.0, 2.0), (0.0, 3.0)]
}

fn default_fit_restarts() -> usize {
    10
}

fn default_certify_budget() -> usize {
    1000
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            truth_kernel: default_truth_kernel(),
            n_train: default_n_train(),
            train_range: default_train_range(),
            noise_var: default_noise_var(),
            eval_grid: default_eval_grid(),
            interval_scales: default_interval_scales(),
            rollout: RolloutConfig::default(),
            fit_restarts: default_fit_restarts(),
            certify_budget: default_certify_budget(),
            seed: 0,
        }
    }
}

/// A fully generated scenario: data, both models and the candidate-set
/// variants.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub data: Arc<Dataset>,
    pub truth: GpModel,
    pub estimate: GpModel,
    pub fit_diagnostics: Vec<FitDiagnostics>,
    pub cands_variants: Vec<CandidateSet>,
}

/// The candidate battery for one error-interval scale: a box around the
/// truth's hyperparameters plus the fixed entries listed in the module docs.
pub fn scaled_candidate_entries(
    truth_kernel: &KernelSpec,
    lower_factor: f64,
    upper_factor: f64,
) -> Result<Vec<CandidateEntry>> {
    if !(upper_factor.is_finite() && lower_factor.is_finite() && upper_factor >= lower_factor) {
        return Err(Error::InvalidConfig(format!(
            "invalid interval scale ({lower_factor}, {upper_factor})"
        )));
    }
    if lower_factor < 0.0 {
        return Err(Error::InvalidConfig(
            "interval lower factor must be nonnegative".into(),
        ));
    }
    let lower: Vec<f64> = truth_kernel
        .phi()
        .iter()
        .map(|v| (lower_factor * v).max(PHI_FLOOR))
        .collect();
    let upper: Vec<f64> = truth_kernel
        .phi()
        .iter()
        .map(|v| (upper_factor * v).max(PHI_FLOOR))
        .collect();
    let mut entries = vec![CandidateEntry::new(
        *truth_kernel.family(),
        HyperRectangle::new(lower, upper)?,
    )?];
    for p in [0, 2] {
        entries.push(CandidateEntry::new(
            KernelFamily::Matern { p },
            HyperRectangle::new(vec![1.0, 1.5], vec![10.0, 2.0])?,
        )?);
    }
    entries.push(CandidateEntry::new(
        KernelFamily::RationalQuadratic { p: 1 },
        HyperRectangle::new(vec![1.0, 0.1], vec![20.0, 1.0])?,
    )?);
    entries.push(CandidateEntry::new(
        KernelFamily::SquaredExponentialArd { input_dim: 1 },
        HyperRectangle::new(vec![0.1, 0.01], vec![10.0, 1.0])?,
    )?);
    Ok(entries)
}

/// Draws a training set from the truth GP's prior, fits the squared
/// exponential estimate by maximum likelihood and builds one certified
/// candidate set per error-interval scale. Deterministic in `config.seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    if config.n_train < 1 {
        return Err(Error::InvalidConfig("n_train must be >= 1".into()));
    }
    if !(config.train_range.1 > config.train_range.0) {
        return Err(Error::InvalidConfig("empty training range".into()));
    }
    if config.interval_scales.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one interval scale required".into(),
        ));
    }
    if config.rollout.variant >= config.interval_scales.len() {
        return Err(Error::InvalidConfig(format!(
            "rollout variant {} out of range",
            config.rollout.variant
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // training inputs, sorted for readability of the exported data
    rng.set_stream(0);
    let (lo, hi) = config.train_range;
    let mut xs: Vec<f64> = (0..config.n_train).map(|_| rng.gen_range(lo..hi)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();

    // one joint draw of the latent function values, plus observation noise
    rng.set_stream(1);
    let k0 = crate::gp::kernel_matrix(&config.truth_kernel, &points)?;
    let l = jittered_cholesky(&k0)?.l_matrix();
    let xi = DVector::from_iterator(
        config.n_train,
        (0..config.n_train).map(|_| -> f64 { StandardNormal.sample(&mut rng) }),
    );
    let latent = l * xi;
    rng.set_stream(2);
    let sigma = config.noise_var.sqrt();
    let outputs: Vec<Vec<f64>> = latent
        .iter()
        .map(|f| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            vec![f + sigma * eps]
        })
        .collect();

    let data = Arc::new(Dataset::new(points, outputs, vec![config.noise_var])?);
    let truth = GpModel::new(Arc::clone(&data), vec![config.truth_kernel.clone()])?;

    let fit_cfg = FitConfig {
        restarts: config.fit_restarts,
        seed: config.seed.wrapping_add(0xF17),
        ..FitConfig::default()
    };
    let family = KernelFamily::SquaredExponentialArd { input_dim: 1 };
    let (estimate, fit_diagnostics) = fit_model(&family, &data, &fit_cfg)?;

    let mut cands_variants = Vec::with_capacity(config.interval_scales.len());
    for (idx, &(lo_f, hi_f)) in config.interval_scales.iter().enumerate() {
        let entries = scaled_candidate_entries(&config.truth_kernel, lo_f, hi_f)?;
        cands_variants.push(CandidateSet::certified(
            entries,
            config.certify_budget,
            config.seed.wrapping_add(0xCE27 + idx as u64),
        )?);
    }

    Ok(Scenario {
        config: config.clone(),
        data,
        truth,
        estimate,
        fit_diagnostics,
        cands_variants,
    })
}

/// One row of the state-space comparison: exact error, the estimate's own
/// variance, and the closed-form bound per candidate-set variant.
#[derive(Debug, Clone, Serialize)]
pub struct StateRow {
    pub x: f64,
    pub exact_mspe: f64,
    pub est_var: f64,
    pub thm2: Vec<f64>,
}

/// Truth and estimate posterior curves over the evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct ModelRow {
    pub x: f64,
    pub true_mean: f64,
    pub true_var: f64,
    pub est_mean: f64,
    pub est_var: f64,
}

pub fn model_curves(scenario: &Scenario) -> Result<Vec<ModelRow>> {
    scenario
        .config
        .eval_grid
        .linspace()
        .par_iter()
        .map(|&x| {
            let t = scenario.truth.posterior(&[x])?;
            let e = scenario.estimate.posterior(&[x])?;
            Ok(ModelRow {
                x,
                true_mean: t.mean[0],
                true_var: t.var[0],
                est_mean: e.mean[0],
                est_var: e.var[0],
            })
        })
        .collect()
}

pub fn state_space_curves(scenario: &Scenario) -> Result<Vec<StateRow>> {
    let engines = scenario
        .cands_variants
        .iter()
        .map(|cands| BoundEngine::new(&scenario.estimate, cands, BoundMethod::Thm2))
        .collect::<Result<Vec<_>>>()?;
    scenario
        .config
        .eval_grid
        .linspace()
        .par_iter()
        .map(|&x| {
            let exact = crate::bound::exact_mspe(&scenario.truth, &scenario.estimate, &[x])?;
            let est_var = scenario.estimate.posterior_var_trace(&[x])?;
            let thm2 = engines
                .iter()
                .map(|e| e.thm2_at(&[x]))
                .collect::<Result<Vec<_>>>()?;
            Ok(StateRow {
                x,
                exact_mspe: exact,
                est_var,
                thm2,
            })
        })
        .collect()
}

/// Rollout of the learned (or true) mean dynamics with pointwise error
/// measures at every visited state.
#[derive(Debug, Clone, Serialize)]
pub struct RolloutTrace {
    pub states: Vec<f64>,
    pub exact_mspe: Vec<f64>,
    pub est_var: Vec<f64>,
    pub thm2: Vec<f64>,
    /// Set when a state left the evaluation domain before `steps` were done.
    pub truncated: bool,
}

pub fn rollout_curves(scenario: &Scenario) -> Result<RolloutTrace> {
    let cfg = &scenario.config.rollout;
    let cands = &scenario.cands_variants[cfg.variant];
    let engine = BoundEngine::new(&scenario.estimate, cands, BoundMethod::Thm2)?;

    let mut trace = RolloutTrace {
        states: Vec::with_capacity(cfg.steps + 1),
        exact_mspe: Vec::with_capacity(cfg.steps + 1),
        est_var: Vec::with_capacity(cfg.steps + 1),
        thm2: Vec::with_capacity(cfg.steps + 1),
        truncated: false,
    };

    let mut x = cfg.x0;
    for tau in 0..=cfg.steps {
        if !x.is_finite() {
            trace.truncated = true;
            break;
        }
        let point = [x];
        let exact = crate::bound::exact_mspe(&scenario.truth, &scenario.estimate, &point);
        let est_var = scenario.estimate.posterior_var_trace(&point);
        let thm2 = engine.thm2_at(&point);
        match (exact, est_var, thm2) {
            (Ok(e), Ok(v), Ok(b)) => {
                trace.states.push(x);
                trace.exact_mspe.push(e);
                trace.est_var.push(v);
                trace.thm2.push(b);
            }
            _ => {
                trace.truncated = true;
                break;
            }
        }
        if tau < cfg.steps {
            let mean = match cfg.dynamics {
                Dynamics::Estimated => scenario.estimate.posterior_mean(&point),
                Dynamics::True => scenario.truth.posterior_mean(&point),
            };
            match mean {
                Ok(v) => x = v[0],
                Err(_) => {
                    trace.truncated = true;
                    break;
                }
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            eval_grid: GridRange {
                lo: -10.0,
                hi: 15.0,
                points: 41,
            },
            certify_budget: 200,
            fit_restarts: 4,
            seed: 1,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn candidate_battery_matches_the_documented_boxes() {
        let entries = scaled_candidate_entries(&default_truth_kernel(), 0.9, 1.1).unwrap();
        assert_eq!(entries.len(), 5);
        assert_eq!(entries[0].family(), &KernelFamily::Matern { p: 1 });
        let b = entries[0].phi_box();
        assert!((b.lower()[0] - 0.9 * 5.2).abs() < 1e-12);
        assert!((b.upper()[1] - 1.1 * 1.6).abs() < 1e-12);
        assert_eq!(entries[1].family(), &KernelFamily::Matern { p: 0 });
        assert_eq!(entries[1].phi_box().lower(), &[1.0, 1.5]);
        assert_eq!(entries[1].phi_box().upper(), &[10.0, 2.0]);
        assert_eq!(entries[2].family(), &KernelFamily::Matern { p: 2 });
        assert_eq!(entries[3].family(), &KernelFamily::RationalQuadratic { p: 1 });
        assert_eq!(entries[3].phi_box().lower(), &[1.0, 0.1]);
        assert_eq!(entries[3].phi_box().upper(), &[20.0, 1.0]);
        assert_eq!(
            entries[4].family(),
            &KernelFamily::SquaredExponentialArd { input_dim: 1 }
        );
        assert_eq!(entries[4].phi_box().lower(), &[0.1, 0.01]);
        assert_eq!(entries[4].phi_box().upper(), &[10.0, 1.0]);

        // zero lower factors are clipped to the positive floor
        let wide = scaled_candidate_entries(&default_truth_kernel(), 0.0, 2.0).unwrap();
        assert_eq!(wide[0].phi_box().lower(), &[PHI_FLOOR, PHI_FLOOR]);
        assert!((wide[0].phi_box().upper()[0] - 10.4).abs() < 1e-12);
    }

    #[test]
    fn scenario_is_deterministic_in_the_seed() {
        let cfg = small_config();
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a.data.points(), b.data.points());
        assert_eq!(a.data.output_col(0), b.data.output_col(0));
        assert_eq!(a.estimate.spec(0).phi(), b.estimate.spec(0).phi());

        let c = generate_scenario(&ScenarioConfig {
            seed: 2,
            ..small_config()
        })
        .unwrap();
        assert_ne!(a.data.output_col(0), c.data.output_col(0));
    }

    #[test]
    fn truth_posterior_interpolates_the_training_draw() {
        let scenario = generate_scenario(&small_config()).unwrap();
        for j in 0..scenario.data.m() {
            let x = scenario.data.point(j).to_vec();
            let y = scenario.data.output_row(j)[0];
            let mean = scenario.truth.posterior_mean(&x).unwrap()[0];
            // noise 0.01 keeps the posterior close to, not on, the data
            assert!((mean - y).abs() < 3.0 * 0.1, "mean {mean} vs sample {y}");
        }
    }

    #[test]
    fn state_curves_are_ordered_and_dominated() {
        let scenario = generate_scenario(&small_config()).unwrap();
        let rows = state_space_curves(&scenario).unwrap();
        assert_eq!(rows.len(), 41);
        for row in &rows {
            assert!(row.thm2.len() == 3);
            // wider interval, weaker bound
            assert!(row.thm2[0] <= row.thm2[1] + 1e-9);
            assert!(row.thm2[1] <= row.thm2[2] + 1e-9);
            // every bound dominates the exact error
            assert!(row.thm2[0] >= row.exact_mspe - 1e-8);
        }
        // the fitted model underestimates its own error somewhere
        assert!(rows.iter().any(|r| r.est_var < r.exact_mspe));
    }

    #[test]
    fn rollout_has_steps_plus_one_states_and_pointwise_dominance() {
        let scenario = generate_scenario(&small_config()).unwrap();
        let trace = rollout_curves(&scenario).unwrap();
        assert!(!trace.truncated);
        assert_eq!(trace.states.len(), scenario.config.rollout.steps + 1);
        for (b, e) in trace.thm2.iter().zip(&trace.exact_mspe) {
            assert!(b >= &(e - 1e-8));
        }

        let again = rollout_curves(&scenario).unwrap();
        assert_eq!(trace.states, again.states);
    }

    #[test]
    fn zero_step_rollout_is_a_single_state() {
        let mut cfg = small_config();
        cfg.rollout.steps = 0;
        let scenario = generate_scenario(&cfg).unwrap();
        let trace = rollout_curves(&scenario).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert_eq!(trace.states[0], cfg.rollout.x0);
    }

    #[test]
    fn config_round_trips_through_json_with_defaults() {
        let cfg: ScenarioConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.n_train, 10);
        assert_eq!(cfg.eval_grid.points, 251);
        assert_eq!(cfg.interval_scales.len(), 3);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n_train, cfg.n_train);
        assert_eq!(back.truth_kernel, cfg.truth_kernel);
    }
}
