//! Projected gradient ascent over an axis-aligned box.
//!
//! Shared by the hyperparameter-box maximization in the bound engine and the
//! log-likelihood fit. For pseudo-concave objectives any point satisfying the
//! first-order condition is a global maximum, so the caller only needs
//! multi-starts to hedge against numerically flat regions.

pub struct AscentConfig {
    /// Convergence threshold on the sup-norm of the projected gradient step
    /// `P(x + g) - x`.
    pub tol: f64,
    pub max_iters: usize,
    pub max_line_search: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            tol: 1e-8,
            max_iters: 500,
            max_line_search: 60,
        }
    }
}

pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iters: usize,
    pub grad_step_norm: f64,
}

pub fn projected_ascent<F, G>(
    f: F,
    grad: G,
    lower: &[f64],
    upper: &[f64],
    start: &[f64],
    cfg: &AscentConfig,
) -> AscentResult
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let clamp = |v: &mut Vec<f64>| {
        for ((vi, lo), hi) in v.iter_mut().zip(lower).zip(upper) {
            *vi = vi.max(*lo).min(*hi);
        }
    };

    let width = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| hi - lo)
        .fold(0.0f64, f64::max);

    let mut x = start.to_vec();
    clamp(&mut x);
    let mut fx = f(&x);
    let mut grad_step_norm = f64::INFINITY;

    for iter in 0..cfg.max_iters {
        let g = grad(&x);

        // first-order condition: the unit-step projected gradient vanishes
        let mut proj = x.clone();
        for (p, gi) in proj.iter_mut().zip(&g) {
            *p += gi;
        }
        clamp(&mut proj);
        grad_step_norm = proj
            .iter()
            .zip(&x)
            .map(|(p, xi)| (p - xi).abs())
            .fold(0.0f64, f64::max);
        if grad_step_norm < cfg.tol {
            return AscentResult {
                x,
                value: fx,
                converged: true,
                iters: iter,
                grad_step_norm,
            };
        }

        // backtracking line search along the projected-step arc
        let g_inf = g.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let mut step = if g_inf > 0.0 && width > 0.0 {
            width / g_inf
        } else {
            1.0
        };
        let mut improved = false;
        for _ in 0..cfg.max_line_search {
            let mut cand = x.clone();
            for (c, gi) in cand.iter_mut().zip(&g) {
                *c += step * gi;
            }
            clamp(&mut cand);
            let sq_move: f64 = cand.iter().zip(&x).map(|(c, xi)| (c - xi) * (c - xi)).sum();
            if sq_move == 0.0 {
                break;
            }
            let f_cand = f(&cand);
            // Armijo condition relative to the actual displacement
            let ascent: f64 = cand
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((c, xi), gi)| (c - xi) * gi)
                .sum();
            if f_cand >= fx + 1e-4 * ascent.max(0.0) && f_cand > fx {
                x = cand;
                fx = f_cand;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            // no ascent direction left at line-search resolution
            let converged = grad_step_norm < cfg.tol.max(1e-6 * (1.0 + g_inf) * width);
            return AscentResult {
                x,
                value: fx,
                converged,
                iters: iter,
                grad_step_norm,
            };
        }
    }

    AscentResult {
        x,
        value: fx,
        converged: false,
        iters: cfg.max_iters,
        grad_step_norm,
    }
}
