//! Acceptance gate: one test per release criterion, each printing a
//! pass/fail line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Tolerances and runtime budgets are pinned here; loosening them is a
//! behavior change, not a test fix.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gpbound_core::bound::{
    exact_mspe, maximize_over_box, BoundEngine, BoundMethod, CandidateEntry, CandidateSet,
    HyperRectangle, OptMode,
};
use gpbound_core::gp::{
    fit_hyperparameters, log_marginal_likelihood, lml_grad_logphi, Dataset, FitConfig, GpModel,
};
use gpbound_core::kernels::{
    check_componentwise_monotone, check_line_quasiconcave, KernelFamily, KernelSpec, PHI_FLOOR,
};
use gpbound_core::oracle::{corner_enum_bound, grid_max, mc_mspe, McConfig};
use gpbound_core::sim::{
    generate_scenario, scaled_candidate_entries, state_space_curves, ScenarioConfig,
};

fn se(n: usize) -> KernelFamily {
    KernelFamily::SquaredExponentialArd { input_dim: n }
}

fn report(id: u32, label: &str, pass: bool, elapsed: Duration) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("[{status}] criterion {id}: {label} ({:.2}s)", elapsed.as_secs_f64());
}

fn random_dataset(rng: &mut ChaCha8Rng, m: usize, n_x: usize, noise: f64) -> Dataset {
    let points: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n_x).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let outputs: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.gen_range(-1.5..1.5)]).collect();
    Dataset::new(points, outputs, vec![noise]).unwrap()
}

/// With a singleton candidate set at the estimate's own kernel and
/// hyperparameters, the closed-form bound must equal the posterior-variance
/// trace to 1e-8 at 100 random test points, in under 5 seconds.
#[test]
fn criterion_1_singleton_bound_equals_posterior_variance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let data = random_dataset(&mut rng, 8, 1, 0.01);
    let estimate = GpModel::new(
        data,
        vec![KernelSpec::new(se(1), vec![0.7, 1.1]).unwrap()],
    )
    .unwrap();
    let entry = CandidateEntry::new(
        se(1),
        HyperRectangle::degenerate(estimate.spec(0).phi()).unwrap(),
    )
    .unwrap();
    let cands = CandidateSet::certified(vec![entry], 500, 101).unwrap();
    let engine = BoundEngine::new(&estimate, &cands, BoundMethod::Thm2).unwrap();

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = [rng.gen_range(-5.0..5.0)];
        let bound = engine.thm2_at(&x).unwrap();
        let var = estimate.posterior_var_trace(&x).unwrap();
        worst = worst.max((bound - var).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-8 && elapsed < Duration::from_secs(5);
    report(
        1,
        &format!("singleton thm2 == variance trace (worst |diff| {worst:.2e})"),
        pass,
        elapsed,
    );
    assert!(pass, "worst diff {worst:.3e}, elapsed {elapsed:?}");
}

/// The analytic MSPE must agree with the Monte Carlo oracle (N = 200000)
/// within three standard errors in at least 47 of 50 random model pairs,
/// in under 2 minutes.
#[test]
fn criterion_2_analytic_mspe_matches_monte_carlo() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut hits = 0;
    let cases = 50;
    for case in 0..cases {
        let n_x = rng.gen_range(1..=2);
        let m = rng.gen_range(2..=8);
        let noise = rng.gen_range(0.01..0.1);
        let data = Arc::new(random_dataset(&mut rng, m, n_x, noise));

        let truth_spec = match rng.gen_range(0..3) {
            0 => KernelSpec::new(
                KernelFamily::Matern { p: rng.gen_range(0..3) },
                vec![rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.0)],
            )
            .unwrap(),
            1 => KernelSpec::new(
                KernelFamily::RationalQuadratic { p: rng.gen_range(1..3) },
                vec![rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.0)],
            )
            .unwrap(),
            _ => KernelSpec::new(
                se(n_x),
                (0..=n_x).map(|_| rng.gen_range(0.5..2.5)).collect(),
            )
            .unwrap(),
        };
        let est_spec = KernelSpec::new(
            se(n_x),
            (0..=n_x).map(|_| rng.gen_range(0.3..2.0)).collect(),
        )
        .unwrap();

        let truth = GpModel::new(Arc::clone(&data), vec![truth_spec]).unwrap();
        let estimate = GpModel::new(data, vec![est_spec]).unwrap();
        let x: Vec<f64> = (0..n_x).map(|_| rng.gen_range(-2.5..2.5)).collect();

        let analytic = exact_mspe(&truth, &estimate, &x).unwrap();
        let mc = mc_mspe(&truth, &estimate, &x, &McConfig::new(200_000, 1000 + case)).unwrap();
        if (mc.estimate - analytic).abs() <= 3.0 * mc.std_error {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = hits >= 47 && elapsed < Duration::from_secs(120);
    report(
        2,
        &format!("exact MSPE within 3 std errors of Monte Carlo in {hits}/{cases} cases"),
        pass,
        elapsed,
    );
    assert!(pass, "{hits}/{cases} within 3 std errors, elapsed {elapsed:?}");
}

/// Both bounds must dominate the exact MSPE for 1000 truths sampled from the
/// candidate set, with zero violations beyond 1e-8 slack, in under 2 minutes.
#[test]
fn criterion_3_bounds_dominate_sampled_truths() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let truth_kernel = KernelSpec::new(KernelFamily::Matern { p: 1 }, vec![5.2, 1.6]).unwrap();
    let data = Arc::new(random_dataset(&mut rng, 10, 1, 0.01));
    let estimate = GpModel::new(
        Arc::clone(&data),
        vec![KernelSpec::new(se(1), vec![0.4, 0.35]).unwrap()],
    )
    .unwrap();

    let entries = scaled_candidate_entries(&truth_kernel, 0.9, 1.1).unwrap();
    let cands = CandidateSet::certified(entries, 1000, 303).unwrap();
    let engine = BoundEngine::new(&estimate, &cands, BoundMethod::Both).unwrap();

    let grid = [-8.0, -3.0, 0.5, 4.0, 12.0];
    let thm1: Vec<f64> = grid.iter().map(|&x| engine.thm1_at(&[x]).unwrap()).collect();
    let thm2: Vec<f64> = grid.iter().map(|&x| engine.thm2_at(&[x]).unwrap()).collect();

    let mut violations = 0;
    for _ in 0..1000 {
        let entry = &cands.entries()[rng.gen_range(0..cands.len())];
        let phi = entry.phi_box().sample(&mut rng);
        let truth = GpModel::new(
            Arc::clone(&data),
            vec![KernelSpec::new(*entry.family(), phi).unwrap()],
        )
        .unwrap();
        for (idx, &x) in grid.iter().enumerate() {
            let mspe = exact_mspe(&truth, &estimate, &[x]).unwrap();
            if thm1[idx] < mspe - 1e-8 || thm2[idx] < mspe - 1e-8 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(120);
    report(
        3,
        &format!("thm1/thm2 dominate 1000 sampled truths ({violations} violations)"),
        pass,
        elapsed,
    );
    assert!(pass, "{violations} violations, elapsed {elapsed:?}");
}

/// The box maximizer must agree with a 200-per-axis grid search to 1e-3
/// relative on 100 random cases, and corner enumeration must reproduce the
/// closed form to 1e-12.
#[test]
fn criterion_4_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_rel: f64 = 0.0;
    for case in 0..100 {
        let family = match case % 4 {
            0 => se(1),
            1 => KernelFamily::Matern { p: rng.gen_range(0..3) },
            2 => KernelFamily::RationalQuadratic { p: rng.gen_range(1..3) },
            _ => KernelFamily::Polynomial { degree: rng.gen_range(1..4) },
        };
        let l = family.phi_len();
        let lo_floor = family.phi_lower_limit().max(PHI_FLOOR);
        let lower: Vec<f64> = (0..l).map(|_| rng.gen_range(lo_floor.max(0.05)..1.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|v| v + rng.gen_range(0.5..3.0)).collect();
        let phi_box = HyperRectangle::new(lower, upper).unwrap();
        let range = if matches!(family, KernelFamily::Polynomial { .. }) {
            0.0..2.0
        } else {
            -2.0..2.0
        };
        let x = [rng.gen_range(range.clone())];
        let xp = [rng.gen_range(range)];
        let opt = maximize_over_box(&family, &phi_box, &x, &xp, OptMode::Max).unwrap();
        let grid = grid_max(&family, &phi_box, &x, &xp, 200).unwrap();
        let rel = (opt.value - grid).abs() / grid.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
    }

    // corner enumeration against the closed form on a mixed candidate set
    let truth_kernel = KernelSpec::new(KernelFamily::Matern { p: 1 }, vec![5.2, 1.6]).unwrap();
    let data = Arc::new(random_dataset(&mut rng, 8, 1, 0.01));
    let estimate = GpModel::new(
        Arc::clone(&data),
        vec![KernelSpec::new(se(1), vec![0.5, 0.5]).unwrap()],
    )
    .unwrap();
    let cands =
        CandidateSet::certified(scaled_candidate_entries(&truth_kernel, 0.9, 1.1).unwrap(), 500, 404)
            .unwrap();
    let engine = BoundEngine::new(&estimate, &cands, BoundMethod::Thm2).unwrap();
    let mut worst_corner: f64 = 0.0;
    for &x in &[-6.0, -1.0, 0.0, 2.5, 9.0] {
        let closed = engine.thm2_at(&[x]).unwrap();
        let enumerated = corner_enum_bound(&cands, &estimate, &[x]).unwrap();
        worst_corner = worst_corner.max((closed - enumerated).abs() / closed.abs().max(1.0));
    }

    let elapsed = start.elapsed();
    let pass = worst_rel < 1e-3 && worst_corner < 1e-12;
    report(
        4,
        &format!(
            "ascent vs grid rel diff {worst_rel:.2e}; corner-enum vs closed form {worst_corner:.2e}"
        ),
        pass,
        elapsed,
    );
    assert!(pass, "grid rel {worst_rel:.3e}, corner {worst_corner:.3e}");
}

/// The default seeded scenario must show (a) the fitted model underestimating
/// its error somewhere, (b) the closed-form bound dominating everywhere, and
/// (c) pointwise-ordered bounds across the 10%/100%/200% interval variants,
/// in under a minute.
#[test]
fn criterion_5_scenario_replication() {
    let start = Instant::now();
    let scenario = generate_scenario(&ScenarioConfig::default()).unwrap();
    let rows = state_space_curves(&scenario).unwrap();

    let underestimates = rows.iter().any(|r| r.est_var < r.exact_mspe);
    let dominated = rows.iter().all(|r| r.thm2[0] >= r.exact_mspe - 1e-8);
    let ordered = rows
        .iter()
        .all(|r| r.thm2[0] <= r.thm2[1] + 1e-9 && r.thm2[1] <= r.thm2[2] + 1e-9);

    let elapsed = start.elapsed();
    let pass = underestimates && dominated && ordered && elapsed < Duration::from_secs(60);
    report(
        5,
        &format!(
            "scenario: underestimation seen {underestimates}, dominance {dominated}, ordering {ordered}"
        ),
        pass,
        elapsed,
    );
    assert!(
        pass,
        "underestimates {underestimates}, dominated {dominated}, ordered {ordered}, elapsed {elapsed:?}"
    );
}

/// The likelihood-ascent direction must match central finite differences to
/// 1e-4 relative error at 20 random hyperparameter points.
#[test]
fn criterion_6_likelihood_gradient_check() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let data = random_dataset(&mut rng, 7, 1, 0.05);
    let y = data.output_col(0);
    let family = se(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let phi: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..3.0)).collect();
        let spec = KernelSpec::new(family, phi.clone()).unwrap();
        let grad = lml_grad_logphi(&spec, data.points(), &y, 0.05).unwrap();
        for j in 0..2 {
            let h = 1e-5;
            let eval = |scale: f64| {
                let mut p = phi.clone();
                p[j] = (phi[j].ln() + scale * h).exp();
                log_marginal_likelihood(&KernelSpec::new(family, p).unwrap(), data.points(), &y, 0.05)
                    .unwrap()
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-9));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-4;
    report(
        6,
        &format!("ascent direction vs central differences (worst rel err {worst:.2e})"),
        pass,
        elapsed,
    );
    assert!(pass, "worst relative error {worst:.3e}");

    // the fit consuming that gradient is healthy end to end
    let cfg = FitConfig {
        restarts: 3,
        seed: 606,
        ..FitConfig::default()
    };
    assert!(fit_hyperparameters(&family, data.points(), &y, 0.05, &cfg).is_ok());
}

/// Every covariance family must pass both property checks on its candidate
/// box with a budget of 1000 samples.
#[test]
fn criterion_7_kernel_property_certificates() {
    let start = Instant::now();
    let truth_phi = [5.2, 1.6];
    let boxes: Vec<(KernelFamily, HyperRectangle)> = vec![
        (
            KernelFamily::Matern { p: 1 },
            HyperRectangle::new(
                truth_phi.iter().map(|v| 0.9 * v).collect(),
                truth_phi.iter().map(|v| 1.1 * v).collect(),
            )
            .unwrap(),
        ),
        (
            KernelFamily::Matern { p: 1 },
            HyperRectangle::new(vec![PHI_FLOOR; 2], truth_phi.iter().map(|v| 2.0 * v).collect())
                .unwrap(),
        ),
        (
            KernelFamily::Matern { p: 1 },
            HyperRectangle::new(vec![PHI_FLOOR; 2], truth_phi.iter().map(|v| 3.0 * v).collect())
                .unwrap(),
        ),
        (
            KernelFamily::Matern { p: 0 },
            HyperRectangle::new(vec![1.0, 1.5], vec![10.0, 2.0]).unwrap(),
        ),
        (
            KernelFamily::Matern { p: 2 },
            HyperRectangle::new(vec![1.0, 1.5], vec![10.0, 2.0]).unwrap(),
        ),
        (
            KernelFamily::RationalQuadratic { p: 1 },
            HyperRectangle::new(vec![1.0, 0.1], vec![20.0, 1.0]).unwrap(),
        ),
        (
            se(1),
            HyperRectangle::new(vec![0.1, 0.01], vec![10.0, 1.0]).unwrap(),
        ),
        (
            KernelFamily::Polynomial { degree: 2 },
            HyperRectangle::new(vec![PHI_FLOOR], vec![2.0]).unwrap(),
        ),
    ];

    let mut all_pass = true;
    for (idx, (family, phi_box)) in boxes.iter().enumerate() {
        let mono = check_componentwise_monotone(family, phi_box, 1000, 700 + idx as u64).unwrap();
        let quasi = check_line_quasiconcave(family, phi_box, 1000, 800 + idx as u64).unwrap();
        if !(mono.passed && quasi.passed) {
            all_pass = false;
            eprintln!(
                "family {} box {idx}: monotone {:?}, quasiconcave {:?}",
                family.name(),
                mono.witness,
                quasi.witness
            );
        }
    }
    let elapsed = start.elapsed();
    report(
        7,
        "monotonicity and quasi-concavity certificates for all families",
        all_pass,
        elapsed,
    );
    assert!(all_pass);
}

/// Reproducibility guard used by the other criteria: the Monte Carlo oracle
/// is bit-identical for a fixed seed.
#[test]
fn oracle_reproducibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let data = Arc::new(random_dataset(&mut rng, 5, 1, 0.02));
    let truth = GpModel::new(
        Arc::clone(&data),
        vec![KernelSpec::new(KernelFamily::Matern { p: 2 }, vec![1.5, 1.0]).unwrap()],
    )
    .unwrap();
    let estimate = GpModel::new(
        data,
        vec![KernelSpec::new(se(1), vec![0.8, 0.9]).unwrap()],
    )
    .unwrap();
    let a = mc_mspe(&truth, &estimate, &[0.3], &McConfig::new(30_000, 7)).unwrap();
    let b = mc_mspe(&truth, &estimate, &[0.3], &McConfig::new(30_000, 7)).unwrap();
    let c = DVector::from_vec(vec![a.estimate, a.std_error]);
    let d = DVector::from_vec(vec![b.estimate, b.std_error]);
    assert_eq!(c, d);
}
