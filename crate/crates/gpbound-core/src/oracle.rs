//! Independent validators for the analytic MSPE and its bounds.
//!
//! * [`mc_mspe`] estimates the MSPE empirically by drawing test and training
//!   outputs jointly from the truth's prior and replaying the estimate's
//!   prediction weights.
//! * [`grid_max`] brute-forces the per-box kernel maximization on a dense
//!   grid.
//! * [`corner_enum_bound`] recomputes the closed-form bound with exhaustive
//!   corner enumeration instead of the sign-directed corner choice.
//!
//! None of these share code with the computation they check.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bound::{CandidateSet, HyperRectangle};
use crate::chol::jittered_cholesky;
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::KernelFamily;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Samples per RNG stream; the reduction is done in fixed batch order so
    /// the result does not depend on scheduling.
    pub batch: usize,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        McConfig {
            n_samples,
            seed,
            batch: 8192,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of the MSPE between `truth` and the mean prediction
/// of `estimate` at `x`.
///
/// Per output, a joint sample of (training outputs, test output) is drawn
/// from the truth's prior — observation noise on the training block only —
/// and the squared error of the weighted prediction is averaged.
pub fn mc_mspe(
    truth: &GpModel,
    estimate: &GpModel,
    x: &[f64],
    cfg: &McConfig,
) -> Result<McEstimate> {
    if !truth.data().same_inputs(estimate.data()) {
        return Err(Error::InvalidConfig(
            "truth and estimate must share training inputs and noise".into(),
        ));
    }
    if truth.output_dim() != estimate.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "model outputs",
            expected: truth.output_dim(),
            got: estimate.output_dim(),
        });
    }
    if cfg.n_samples == 0 || cfg.batch == 0 {
        return Err(Error::InvalidConfig(
            "n_samples and batch must be positive".into(),
        ));
    }

    let m = truth.data().m();
    let n_y = truth.output_dim();

    // per output: Cholesky factor of the joint (m+1) x (m+1) covariance and
    // the estimate's prediction weights
    let mut factors = Vec::with_capacity(n_y);
    let mut weights = Vec::with_capacity(n_y);
    for i in 0..n_y {
        let mut joint = DMatrix::zeros(m + 1, m + 1);
        joint
            .view_mut((0, 0), (m, m))
            .copy_from(truth.kernel_mat(i));
        for d in 0..m {
            joint[(d, d)] += truth.data().noise_var(i);
        }
        let spec = truth.spec(i);
        for (j, p) in truth.data().points().iter().enumerate() {
            let v = spec.eval(x, p)?;
            joint[(m, j)] = v;
            joint[(j, m)] = v;
        }
        joint[(m, m)] = spec.eval(x, x)?;
        factors.push(jittered_cholesky(&joint)?.l_matrix());
        weights.push(estimate.weight_vector(i, x)?);
    }

    let n_batches = cfg.n_samples.div_ceil(cfg.batch);
    let partials: Vec<(f64, f64)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64 + 1);
            let count = cfg.batch.min(cfg.n_samples - b * cfg.batch);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut xi = DVector::zeros(m + 1);
            for _ in 0..count {
                let mut total = 0.0;
                for i in 0..n_y {
                    for v in xi.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    let z = &factors[i] * &xi;
                    let y_star = z[m];
                    let pred = weights[i].dot(&z.rows(0, m));
                    let err = y_star - pred;
                    total += err * err;
                }
                sum += total;
                sum_sq += total * total;
            }
            (sum, sum_sq)
        })
        .collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (s, s2) in partials {
        sum += s;
        sum_sq += s2;
    }
    let n = cfg.n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        n_samples: cfg.n_samples,
        seed: cfg.seed,
    })
}

/// Dense-grid maximization of `phi -> k(phi, x, x')` over a box, at
/// `resolution` ticks per axis. Exponential in the box dimension; rejected
/// above 4 axes.
pub fn grid_max(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    x: &[f64],
    x_prime: &[f64],
    resolution: usize,
) -> Result<f64> {
    family.validate()?;
    family.check_phi(phi_box.lower())?;
    family.check_phi(phi_box.upper())?;
    family.check_inputs(x, x_prime)?;
    let l = phi_box.dim();
    if l > 4 {
        return Err(Error::InvalidConfig(format!(
            "grid search over {l} hyperparameters is intractable; limit is 4"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be >= 2".into()));
    }

    let ticks: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            let lo = phi_box.lower()[i];
            let hi = phi_box.upper()[i];
            if hi > lo {
                (0..resolution)
                    .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                    .collect()
            } else {
                vec![lo]
            }
        })
        .collect();

    let mut idx = vec![0usize; l];
    let mut phi = vec![0.0; l];
    let mut best = f64::NEG_INFINITY;
    loop {
        for (i, &t) in idx.iter().enumerate() {
            phi[i] = ticks[i][t];
        }
        best = best.max(family.eval_unchecked(&phi, x, x_prime));
        // mixed-radix increment
        let mut axis = 0;
        loop {
            if axis == l {
                return Ok(best);
            }
            idx[axis] += 1;
            if idx[axis] < ticks[axis].len() {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Closed-form bound recomputed with exhaustive enumeration over box corners
/// for every term, instead of picking the corner from the sign of the
/// coefficient. For componentwise monotone families both selections coincide,
/// so this must reproduce `thm2_bound` exactly.
pub fn corner_enum_bound(cands: &CandidateSet, estimate: &GpModel, x: &[f64]) -> Result<f64> {
    if !cands.is_certified() {
        return Err(Error::MissingCertificate);
    }
    for entry in cands.entries() {
        for p in estimate.data().points() {
            entry.family().check_inputs(p, p)?;
        }
        entry.family().check_inputs(x, x)?;
        if entry.phi_box().dim() > 16 {
            return Err(Error::InvalidConfig(
                "corner enumeration is limited to 16 hyperparameters".into(),
            ));
        }
    }

    let points = estimate.data().points();
    let m = points.len();

    struct EntryExtremes {
        prior_max: f64,
        cross_max: Vec<f64>,
        cross_min: Vec<f64>,
        pair_max: DMatrix<f64>,
        pair_min: DMatrix<f64>,
    }

    let mut extremes = Vec::with_capacity(cands.len());
    for entry in cands.entries() {
        let family = entry.family();
        let mut prior_max = f64::NEG_INFINITY;
        let mut cross_max = vec![f64::NEG_INFINITY; m];
        let mut cross_min = vec![f64::INFINITY; m];
        let mut pair_max = DMatrix::from_element(m, m, f64::NEG_INFINITY);
        let mut pair_min = DMatrix::from_element(m, m, f64::INFINITY);
        for corner in entry.phi_box().corners() {
            prior_max = prior_max.max(family.eval_unchecked(&corner, x, x));
            for (j, p) in points.iter().enumerate() {
                let v = family.eval_unchecked(&corner, x, p);
                cross_max[j] = cross_max[j].max(v);
                cross_min[j] = cross_min[j].min(v);
            }
            for q in 0..m {
                for p in 0..=q {
                    let v = family.eval_unchecked(&corner, &points[q], &points[p]);
                    if v > pair_max[(q, p)] {
                        pair_max[(q, p)] = v;
                        pair_max[(p, q)] = v;
                    }
                    if v < pair_min[(q, p)] {
                        pair_min[(q, p)] = v;
                        pair_min[(p, q)] = v;
                    }
                }
            }
        }
        extremes.push(EntryExtremes {
            prior_max,
            cross_max,
            cross_min,
            pair_max,
            pair_min,
        });
    }

    let mut total = 0.0;
    for i in 0..estimate.output_dim() {
        let mut h = estimate.weight_vector(i, x)?;
        for v in h.iter_mut() {
            if v.abs() < 1e-14 {
                *v = 0.0;
            }
        }
        let noise_term = estimate.data().noise_var(i) * h.norm_squared();
        let mut best = f64::NEG_INFINITY;
        for e in &extremes {
            let mut eta = 0.0;
            for p in 0..m {
                eta += if h[p] < 0.0 {
                    h[p] * e.cross_max[p]
                } else {
                    h[p] * e.cross_min[p]
                };
            }
            eta *= 2.0;
            let mut kappa = noise_term;
            for q in 0..m {
                for p in 0..m {
                    let w = h[q] * h[p];
                    if w > 0.0 {
                        kappa += w * e.pair_max[(q, p)];
                    } else if w < 0.0 {
                        kappa += w * e.pair_min[(q, p)];
                    }
                }
            }
            best = best.max(e.prior_max + kappa - eta);
        }
        total += best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::{
        exact_mspe, thm2_bound, BoundMethod, CandidateEntry, OptMode,
    };
    use crate::gp::{Dataset, GpModel};
    use crate::kernels::KernelSpec;
    use rand::{Rng, SeedableRng};

    fn se_family() -> KernelFamily {
        KernelFamily::SquaredExponentialArd { input_dim: 1 }
    }

    fn models() -> (GpModel, GpModel) {
        let data = std::sync::Arc::new(
            Dataset::new(
                vec![vec![-1.5], vec![-0.2], vec![0.9], vec![2.1]],
                vec![vec![0.3], vec![-0.6], vec![1.0], vec![0.1]],
                vec![0.05],
            )
            .unwrap(),
        );
        let truth = GpModel::new(
            std::sync::Arc::clone(&data),
            vec![KernelSpec::new(KernelFamily::Matern { p: 1 }, vec![2.0, 1.2]).unwrap()],
        )
        .unwrap();
        let estimate = GpModel::new(
            data,
            vec![KernelSpec::new(se_family(), vec![0.7, 0.9]).unwrap()],
        )
        .unwrap();
        (truth, estimate)
    }

    #[test]
    fn mc_matches_the_posterior_variance_for_the_true_model() {
        let (_, estimate) = models();
        let x = [0.4];
        let mc = mc_mspe(&estimate, &estimate, &x, &McConfig::new(100_000, 5)).unwrap();
        let var = estimate.posterior_var_trace(&x).unwrap();
        assert!(
            (mc.estimate - var).abs() <= 3.0 * mc.std_error,
            "mc {} +- {} vs var {}",
            mc.estimate,
            mc.std_error,
            var
        );
    }

    #[test]
    fn mc_matches_the_analytic_mspe_for_a_misspecified_pair() {
        let (truth, estimate) = models();
        let x = [1.7];
        let mc = mc_mspe(&truth, &estimate, &x, &McConfig::new(200_000, 6)).unwrap();
        let analytic = exact_mspe(&truth, &estimate, &x).unwrap();
        assert!(
            (mc.estimate - analytic).abs() <= 3.0 * mc.std_error,
            "mc {} +- {} vs analytic {}",
            mc.estimate,
            mc.std_error,
            analytic
        );
    }

    #[test]
    fn std_error_shrinks_like_sqrt_n() {
        let (truth, estimate) = models();
        let x = [0.0];
        let small = mc_mspe(&truth, &estimate, &x, &McConfig::new(1_000, 7)).unwrap();
        let large = mc_mspe(&truth, &estimate, &x, &McConfig::new(100_000, 7)).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!(
            (5.0..20.0).contains(&ratio),
            "expected ~10x shrink, got {ratio}"
        );
    }

    #[test]
    fn identical_seeds_give_bit_identical_estimates() {
        let (truth, estimate) = models();
        let x = [0.4];
        let a = mc_mspe(&truth, &estimate, &x, &McConfig::new(50_000, 9)).unwrap();
        let b = mc_mspe(&truth, &estimate, &x, &McConfig::new(50_000, 9)).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.std_error, b.std_error);
        // batch size must not change the draw, only the partition
        let c = mc_mspe(
            &truth,
            &estimate,
            &x,
            &McConfig {
                n_samples: 50_000,
                seed: 10,
                batch: 8192,
            },
        )
        .unwrap();
        let d = mc_mspe(&truth, &estimate, &x, &McConfig::new(50_000, 9)).unwrap();
        assert_ne!(c.estimate, d.estimate);
    }

    #[test]
    fn grid_max_agrees_with_the_projected_ascent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(47);
        for _ in 0..25 {
            let phi_box = HyperRectangle::new(
                vec![rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)],
                vec![rng.gen_range(1.5..5.0), rng.gen_range(1.5..5.0)],
            )
            .unwrap();
            let x = [rng.gen_range(-2.0..2.0)];
            let xp = [rng.gen_range(-2.0..2.0)];
            let g = grid_max(&se_family(), &phi_box, &x, &xp, 200).unwrap();
            let o = crate::bound::maximize_over_box(&se_family(), &phi_box, &x, &xp, OptMode::Max)
                .unwrap();
            assert!(
                (g - o.value).abs() / o.value.abs().max(1e-12) < 1e-3,
                "grid {g} vs ascent {}",
                o.value
            );
        }
    }

    #[test]
    fn grid_max_handles_degenerate_boxes_and_rejects_big_ones() {
        let phi = [1.2, 0.7];
        let b = HyperRectangle::degenerate(&phi).unwrap();
        let v = grid_max(&se_family(), &b, &[0.1], &[0.9], 50).unwrap();
        assert_eq!(v, se_family().eval(&phi, &[0.1], &[0.9]).unwrap());

        let big = HyperRectangle::new(vec![0.1; 5], vec![1.0; 5]).unwrap();
        let fam = KernelFamily::SquaredExponentialArd { input_dim: 4 };
        assert!(grid_max(&fam, &big, &[0.0; 4], &[0.5; 4], 10).is_err());
    }

    #[test]
    fn grid_max_of_a_monotone_family_hits_the_upper_corner() {
        let b = HyperRectangle::new(vec![0.5, 0.5], vec![2.0, 3.0]).unwrap();
        let x = [0.4];
        let v = grid_max(&se_family(), &b, &x, &x, 41).unwrap();
        assert_eq!(v, se_family().eval(&[2.0, 3.0], &x, &x).unwrap());
    }

    fn certified_set() -> CandidateSet {
        CandidateSet::certified(
            vec![
                CandidateEntry::new(
                    KernelFamily::Matern { p: 1 },
                    HyperRectangle::new(vec![1.0, 0.5], vec![4.0, 1.5]).unwrap(),
                )
                .unwrap(),
                CandidateEntry::new(
                    se_family(),
                    HyperRectangle::new(vec![0.3, 0.3], vec![2.0, 1.2]).unwrap(),
                )
                .unwrap(),
            ],
            300,
            11,
        )
        .unwrap()
    }

    #[test]
    fn corner_enumeration_reproduces_the_closed_form_exactly() {
        let (_, estimate) = models();
        let cands = certified_set();
        for x in [-2.0, -0.3, 0.8, 2.5, 4.0] {
            let enumerated = corner_enum_bound(&cands, &estimate, &[x]).unwrap();
            let closed = thm2_bound(&cands, &estimate, &[x]).unwrap();
            assert!(
                (enumerated - closed).abs() <= 1e-12 * closed.abs().max(1.0),
                "corner {enumerated} vs closed {closed} at {x}"
            );
        }
    }

    #[test]
    fn corner_enumeration_collapses_for_a_degenerate_singleton() {
        let (_, estimate) = models();
        let entry = CandidateEntry::new(
            se_family(),
            HyperRectangle::degenerate(estimate.spec(0).phi()).unwrap(),
        )
        .unwrap();
        let cands = CandidateSet::certified(vec![entry], 200, 12).unwrap();
        let x = [0.6];
        let enumerated = corner_enum_bound(&cands, &estimate, &x).unwrap();
        let var = estimate.posterior_var_trace(&x).unwrap();
        assert!((enumerated - var).abs() < 1e-8);
    }

    #[test]
    fn corner_enumeration_takes_the_outer_max_over_entries() {
        let (_, estimate) = models();
        let cands = certified_set();
        let singles: Vec<CandidateSet> = cands
            .entries()
            .iter()
            .map(|e| {
                let mut s = CandidateSet::new(vec![e.clone()]).unwrap();
                s.assume_certified();
                s
            })
            .collect();
        let x = [1.1];
        let combined = corner_enum_bound(&cands, &estimate, &x).unwrap();
        let best_single = singles
            .iter()
            .map(|s| corner_enum_bound(s, &estimate, &x).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((combined - best_single).abs() < 1e-12);
    }

    #[test]
    fn mc_rejects_mismatched_models() {
        let (truth, _) = models();
        let other_data = Dataset::new(
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.0], vec![0.0]],
            vec![0.05],
        )
        .unwrap();
        let other = GpModel::new(
            other_data,
            vec![KernelSpec::new(se_family(), vec![1.0, 1.0]).unwrap()],
        )
        .unwrap();
        assert!(mc_mspe(&truth, &other, &[0.0], &McConfig::new(1000, 0)).is_err());
    }

    #[test]
    fn engine_and_oracle_agree_with_method_both() {
        let (truth, estimate) = models();
        let cands = certified_set();
        let grid: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.5]];
        let reports =
            crate::bound::bound_report(Some(&truth), &estimate, &cands, &grid, BoundMethod::Both)
                .unwrap();
        for r in &reports {
            let enumerated = corner_enum_bound(&cands, &estimate, &r.x).unwrap();
            assert!((enumerated - r.thm2.unwrap()).abs() < 1e-12);
        }
    }
}
