//! Sampling-based checks of the kernel properties the bound computation
//! relies on: componentwise monotone growth in each hyperparameter and
//! quasi-concavity along line segments through the hyperparameter box.
//!
//! These are numerical certificates, not proofs: they draw random
//! (hyperparameter, input) tuples and report the first counterexample found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bound::HyperRectangle;
use crate::error::Result;
use crate::kernels::{InputDomainConstraint, KernelFamily};

/// Tolerance under which a non-increase still counts as monotone; absorbs
/// floating-point round-off and the flat directions a kernel has at x = x'.
const MONOTONE_TOL: f64 = 1e-12;

/// Relative perturbation used for the monotonicity probe.
const MONOTONE_STEP: f64 = 1e-3;

/// Number of points on each line restriction probed for interior minima.
const LINE_GRID: usize = 65;

#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub passed: bool,
    pub samples: usize,
    pub witness: Option<PropertyWitness>,
}

#[derive(Debug, Clone)]
pub enum PropertyWitness {
    /// `k(phi + step * e_coord, x, x') < k(phi, x, x')` beyond tolerance.
    MonotoneViolation {
        phi: Vec<f64>,
        coord: usize,
        step: f64,
        x: Vec<f64>,
        x_prime: Vec<f64>,
        value: f64,
        perturbed: f64,
    },
    /// A strict local minimum of `t -> k((1-t) a + t b, x, x')` at `0 < t < 1`.
    InteriorMinimum {
        phi_a: Vec<f64>,
        phi_b: Vec<f64>,
        t: f64,
        x: Vec<f64>,
        x_prime: Vec<f64>,
        value: f64,
        left: f64,
        right: f64,
    },
}

impl PropertyReport {
    fn pass(samples: usize) -> Self {
        PropertyReport {
            passed: true,
            samples,
            witness: None,
        }
    }

    fn fail(samples: usize, witness: PropertyWitness) -> Self {
        PropertyReport {
            passed: false,
            samples,
            witness: Some(witness),
        }
    }
}

/// Checks that `k` grows in every hyperparameter coordinate over `phi_box`,
/// probing `budget` random (phi, coordinate, x, x') tuples.
///
/// Generic over the kernel function so that tests can inject
/// deliberately broken ones.
pub fn check_monotone_fn<F>(
    k: F,
    phi_box: &HyperRectangle,
    input_dim: usize,
    input_range: (f64, f64),
    budget: usize,
    seed: u64,
) -> PropertyReport
where
    F: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..budget {
        let phi = phi_box.sample(&mut rng);
        let x = sample_point(&mut rng, input_dim, input_range);
        let x_prime = sample_point(&mut rng, input_dim, input_range);
        let coord = rng.gen_range(0..phi_box.dim());
        let step = MONOTONE_STEP * phi[coord].abs().max(1e-6);
        let mut phi_up = phi.clone();
        phi_up[coord] += step;
        let value = k(&phi, &x, &x_prime);
        let perturbed = k(&phi_up, &x, &x_prime);
        if !(perturbed - value > -MONOTONE_TOL) {
            return PropertyReport::fail(
                n + 1,
                PropertyWitness::MonotoneViolation {
                    phi,
                    coord,
                    step,
                    x,
                    x_prime,
                    value,
                    perturbed,
                },
            );
        }
    }
    PropertyReport::pass(budget)
}

/// Checks that no line restriction of `k` through `phi_box` has an interior
/// strict local minimum (a necessary condition for quasi-concavity), probing
/// `budget` random segments.
pub fn check_quasiconcave_fn<F>(
    k: F,
    phi_box: &HyperRectangle,
    input_dim: usize,
    input_range: (f64, f64),
    budget: usize,
    seed: u64,
) -> PropertyReport
where
    F: Fn(&[f64], &[f64], &[f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..budget {
        let phi_a = phi_box.sample(&mut rng);
        let phi_b = phi_box.sample(&mut rng);
        let x = sample_point(&mut rng, input_dim, input_range);
        let x_prime = sample_point(&mut rng, input_dim, input_range);

        let values: Vec<f64> = (0..LINE_GRID)
            .map(|i| {
                let t = i as f64 / (LINE_GRID - 1) as f64;
                let phi: Vec<f64> = phi_a
                    .iter()
                    .zip(&phi_b)
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect();
                k(&phi, &x, &x_prime)
            })
            .collect();

        let scale = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = scale * 1e-12 + f64::MIN_POSITIVE;
        for i in 1..LINE_GRID - 1 {
            if values[i] + tol < values[i - 1] && values[i] + tol < values[i + 1] {
                return PropertyReport::fail(
                    n + 1,
                    PropertyWitness::InteriorMinimum {
                        phi_a,
                        phi_b,
                        t: i as f64 / (LINE_GRID - 1) as f64,
                        x,
                        x_prime,
                        value: values[i],
                        left: values[i - 1],
                        right: values[i + 1],
                    },
                );
            }
        }
    }
    PropertyReport::pass(budget)
}

/// Monotonicity check for a kernel family over a hyperparameter box.
pub fn check_componentwise_monotone(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    budget: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let (input_dim, input_range) = validate_family_box(family, phi_box)?;
    Ok(check_monotone_fn(
        |phi, x, xp| family.eval_unchecked(phi, x, xp),
        phi_box,
        input_dim,
        input_range,
        budget,
        seed,
    ))
}

/// Line quasi-concavity check for a kernel family over a hyperparameter box.
pub fn check_line_quasiconcave(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    budget: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let (input_dim, input_range) = validate_family_box(family, phi_box)?;
    Ok(check_quasiconcave_fn(
        |phi, x, xp| family.eval_unchecked(phi, x, xp),
        phi_box,
        input_dim,
        input_range,
        budget,
        seed,
    ))
}

fn validate_family_box(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
) -> Result<(usize, (f64, f64))> {
    family.validate()?;
    family.check_phi(phi_box.lower())?;
    family.check_phi(phi_box.upper())?;
    let input_dim = match family {
        KernelFamily::SquaredExponentialArd { input_dim } => *input_dim,
        _ => 1,
    };
    let input_range = match family.input_constraint() {
        InputDomainConstraint::NonnegativeOrthant => (0.0, 3.0),
        InputDomainConstraint::Unrestricted => (-3.0, 3.0),
    };
    Ok((input_dim, input_range))
}

fn sample_point(rng: &mut ChaCha8Rng, dim: usize, range: (f64, f64)) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(range.0..range.1)).collect()
}
