//! Maximization (and minimization) of `phi -> k(phi, x, x')` over a
//! hyperparameter box.
//!
//! For the supported families the map is pseudo-concave on its domain, so a
//! point satisfying the first-order condition of the projected gradient
//! method is a global maximum; multi-starts guard against numerically flat
//! regions. Minima are found by corner enumeration with a projected-descent
//! refinement (for componentwise monotone kernels the minimum sits at the
//! lower corner).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bound::HyperRectangle;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::opt::{projected_ascent, AscentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    Max,
    Min,
}

#[derive(Debug, Clone)]
pub struct BoxOptimum {
    pub phi: Vec<f64>,
    pub value: f64,
}

/// Number of random starts in addition to the three deterministic ones
/// (upper corner, lower corner, center).
const RANDOM_STARTS: usize = 2;

/// Fixed stream so repeated calls are bit-identical.
const START_SEED: u64 = 0x9E3779B97F4A7C15;

pub fn maximize_over_box(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    x: &[f64],
    x_prime: &[f64],
    mode: OptMode,
) -> Result<BoxOptimum> {
    family.validate()?;
    family.check_phi(phi_box.lower())?;
    family.check_phi(phi_box.upper())?;
    family.check_inputs(x, x_prime)?;

    match mode {
        OptMode::Max => maximize(family, phi_box, x, x_prime),
        OptMode::Min => minimize(family, phi_box, x, x_prime),
    }
}

fn maximize(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    x: &[f64],
    x_prime: &[f64],
) -> Result<BoxOptimum> {
    let f = |phi: &[f64]| family.eval_unchecked(phi, x, x_prime);
    let grad = |phi: &[f64]| family.grad_phi_unchecked(phi, x, x_prime);

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut starts = vec![
        phi_box.upper().to_vec(),
        phi_box.lower().to_vec(),
        phi_box.center(),
    ];
    for _ in 0..RANDOM_STARTS {
        starts.push(phi_box.sample(&mut rng));
    }

    let cfg = AscentConfig::default();
    let mut best: Option<BoxOptimum> = None;
    let mut any_converged = false;
    let mut worst_grad = 0.0f64;
    let mut iters = 0;
    for start in starts {
        let res = projected_ascent(f, grad, phi_box.lower(), phi_box.upper(), &start, &cfg);
        any_converged |= res.converged;
        worst_grad = worst_grad.max(res.grad_step_norm);
        iters = iters.max(res.iters);
        if best.as_ref().map_or(true, |b| res.value > b.value) {
            best = Some(BoxOptimum {
                phi: res.x,
                value: res.value,
            });
        }
    }
    if !any_converged {
        return Err(Error::NonConvergence {
            iters,
            grad_norm: worst_grad,
        });
    }
    Ok(best.expect("at least one start"))
}

fn minimize(
    family: &KernelFamily,
    phi_box: &HyperRectangle,
    x: &[f64],
    x_prime: &[f64],
) -> Result<BoxOptimum> {
    if phi_box.dim() > 16 {
        return Err(Error::InvalidConfig(
            "corner enumeration is limited to 16 hyperparameters".into(),
        ));
    }
    let f = |phi: &[f64]| family.eval_unchecked(phi, x, x_prime);
    let mut best_corner = phi_box.lower().to_vec();
    let mut best_value = f(&best_corner);
    for corner in phi_box.corners() {
        let v = f(&corner);
        if v < best_value {
            best_value = v;
            best_corner = corner;
        }
    }
    // descent refinement in case the minimum is not at a corner
    let neg_f = |phi: &[f64]| -family.eval_unchecked(phi, x, x_prime);
    let neg_grad = |phi: &[f64]| {
        family
            .grad_phi_unchecked(phi, x, x_prime)
            .into_iter()
            .map(|g| -g)
            .collect::<Vec<_>>()
    };
    let res = projected_ascent(
        neg_f,
        neg_grad,
        phi_box.lower(),
        phi_box.upper(),
        &best_corner,
        &AscentConfig::default(),
    );
    if -res.value < best_value {
        Ok(BoxOptimum {
            phi: res.x,
            value: -res.value,
        })
    } else {
        Ok(BoxOptimum {
            phi: best_corner,
            value: best_value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn se1() -> KernelFamily {
        KernelFamily::SquaredExponentialArd { input_dim: 1 }
    }

    fn boxr(lower: &[f64], upper: &[f64]) -> HyperRectangle {
        HyperRectangle::new(lower.to_vec(), upper.to_vec()).unwrap()
    }

    #[test]
    fn monotone_family_peaks_at_the_upper_corner() {
        let b = boxr(&[0.5, 0.5], &[2.0, 3.0]);
        let x = [0.3];
        let xp = [0.9];
        let max = maximize_over_box(&se1(), &b, &x, &xp, OptMode::Max).unwrap();
        assert_eq!(max.phi, vec![2.0, 3.0]);
        assert_relative_eq!(
            max.value,
            se1().eval(&[2.0, 3.0], &x, &xp).unwrap(),
            max_relative = 1e-15
        );
        let min = maximize_over_box(&se1(), &b, &x, &xp, OptMode::Min).unwrap();
        assert_eq!(min.phi, vec![0.5, 0.5]);
    }

    #[test]
    fn singleton_box_returns_the_kernel_value() {
        let b = boxr(&[1.3, 0.8], &[1.3, 0.8]);
        let res = maximize_over_box(&se1(), &b, &[0.0], &[1.0], OptMode::Max).unwrap();
        assert_eq!(res.phi, vec![1.3, 0.8]);
        assert_eq!(res.value, se1().eval(&[1.3, 0.8], &[0.0], &[1.0]).unwrap());
    }

    #[test]
    fn matches_grid_search_on_a_2d_box() {
        let b = boxr(&[0.2, 0.1], &[4.0, 2.0]);
        let x = [-0.7];
        let xp = [1.2];
        let res = maximize_over_box(&se1(), &b, &x, &xp, OptMode::Max).unwrap();
        let mut grid_best = f64::NEG_INFINITY;
        let n = 200;
        for i in 0..n {
            for j in 0..n {
                let phi = [
                    0.2 + (4.0 - 0.2) * i as f64 / (n - 1) as f64,
                    0.1 + (2.0 - 0.1) * j as f64 / (n - 1) as f64,
                ];
                grid_best = grid_best.max(se1().eval(&phi, &x, &xp).unwrap());
            }
        }
        assert!((res.value - grid_best).abs() / grid_best.abs() < 1e-3);
        assert!(res.value >= grid_best - 1e-12);
    }
}
