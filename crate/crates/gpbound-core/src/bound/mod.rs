//! Exact mean-square prediction error between two GP models and worst-case
//! upper bounds on it when the data-generating covariance function is only
//! known to lie in a finite candidate set with box-bounded hyperparameters.
//!
//! Writing `h^i = k_hat^i(x, X)^T K_hat^{i,-1}` for the estimate's prediction
//! weights at a test point, the exact error against a known truth is, per
//! output,
//!
//! ```text
//! k^i(x,x) - 2 h^i . k^i(x,X) + h^i^T K^i h^i
//! ```
//!
//! with `K^i` the truth's noisy Gram matrix. When the truth is unknown, every
//! kernel evaluation is replaced by its worst case over the candidate set:
//! either by numerically maximizing over each hyperparameter box
//! ([`thm1_bound`]) or, for componentwise monotone families, by evaluating at
//! the box corners ([`thm2_bound`]), picking the upper corner where the
//! coefficient is positive and the lower corner where it is negative. The
//! known observation-noise variance enters the `h^T K h` term through its
//! diagonal, which keeps the bounds tight enough to collapse to the posterior
//! variance for a singleton candidate set.

mod boxopt;

pub use boxopt::{maximize_over_box, BoxOptimum, OptMode};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kernels::{
    check_componentwise_monotone, check_line_quasiconcave, family_from_parts, KernelFamily,
};

/// Prediction weights below this magnitude are treated as exactly zero in the
/// sign splits, so ties break deterministically.
const H_EPS: f64 = 1e-14;

/// An axis-aligned box of hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBox(format!(
                "lower has {} coordinates, upper {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("box has no coordinates".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidBox(format!(
                    "coordinate {i}: [{lo}, {hi}] is not a valid interval"
                )));
            }
        }
        Ok(HyperRectangle { lower, upper })
    }

    /// The box `{phi}` containing a single point.
    pub fn degenerate(phi: &[f64]) -> Result<Self> {
        HyperRectangle::new(phi.to_vec(), phi.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn contains(&self, phi: &[f64]) -> bool {
        phi.len() == self.dim()
            && phi
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect()
    }

    /// All `2^dim` corners, coordinates taken from lower or upper.
    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let dim = self.dim();
        assert!(dim <= 16, "corner enumeration limited to 16 dimensions");
        (0..(1usize << dim)).map(move |mask| {
            (0..dim)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
                .collect()
        })
    }
}

/// One candidate: a covariance family plus the box its hyperparameters may
/// occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    family: KernelFamily,
    phi_box: HyperRectangle,
}

impl CandidateEntry {
    pub fn new(family: KernelFamily, phi_box: HyperRectangle) -> Result<Self> {
        family.validate()?;
        family.check_phi(phi_box.lower())?;
        family.check_phi(phi_box.upper())?;
        Ok(CandidateEntry { family, phi_box })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn phi_box(&self) -> &HyperRectangle {
        &self.phi_box
    }
}

/// A finite set of candidate covariance functions assumed to contain the
/// data-generating one.
///
/// The closed-form bound is only sound when every entry is componentwise
/// monotone in its hyperparameters; [`CandidateSet::certify`] establishes
/// that numerically and [`CandidateSet::assume_certified`] waives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CandidateEntryRepr>", into = "Vec<CandidateEntryRepr>")]
pub struct CandidateSet {
    entries: Vec<CandidateEntry>,
    certified: bool,
}

impl CandidateSet {
    pub fn new(entries: Vec<CandidateEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        Ok(CandidateSet {
            entries,
            certified: false,
        })
    }

    /// Builds the set and certifies it in one step.
    pub fn certified(entries: Vec<CandidateEntry>, budget: usize, seed: u64) -> Result<Self> {
        let mut set = CandidateSet::new(entries)?;
        set.certify(budget, seed)?;
        Ok(set)
    }

    /// Runs the monotonicity and line-quasi-concavity checks on every entry.
    pub fn certify(&mut self, budget: usize, seed: u64) -> Result<()> {
        for (idx, entry) in self.entries.iter().enumerate() {
            let mono = check_componentwise_monotone(
                &entry.family,
                &entry.phi_box,
                budget,
                seed.wrapping_add(2 * idx as u64),
            )?;
            if !mono.passed {
                return Err(Error::PropertyCheckFailed {
                    family: entry.family.name(),
                    detail: format!("monotonicity witness {:?}", mono.witness),
                });
            }
            let quasi = check_line_quasiconcave(
                &entry.family,
                &entry.phi_box,
                budget,
                seed.wrapping_add(2 * idx as u64 + 1),
            )?;
            if !quasi.passed {
                return Err(Error::PropertyCheckFailed {
                    family: entry.family.name(),
                    detail: format!("quasi-concavity witness {:?}", quasi.witness),
                });
            }
        }
        self.certified = true;
        Ok(())
    }

    /// Marks the set certified without running the checks.
    pub fn assume_certified(&mut self) {
        self.certified = true;
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    pub fn entries(&self) -> &[CandidateEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Wire format: a list of `{"family", "p", "lower", "upper"}` objects.
#[derive(Serialize, Deserialize)]
struct CandidateEntryRepr {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<u32>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl From<CandidateSet> for Vec<CandidateEntryRepr> {
    fn from(set: CandidateSet) -> Self {
        set.entries
            .into_iter()
            .map(|e| CandidateEntryRepr {
                family: e.family.name().to_string(),
                p: match e.family {
                    KernelFamily::Polynomial { degree } => Some(degree),
                    KernelFamily::RationalQuadratic { p } | KernelFamily::Matern { p } => Some(p),
                    KernelFamily::SquaredExponentialArd { .. } => None,
                },
                lower: e.phi_box.lower,
                upper: e.phi_box.upper,
            })
            .collect()
    }
}

impl TryFrom<Vec<CandidateEntryRepr>> for CandidateSet {
    type Error = Error;

    fn try_from(reprs: Vec<CandidateEntryRepr>) -> Result<Self> {
        let entries = reprs
            .into_iter()
            .map(|r| {
                let family = family_from_parts(&r.family, r.p, r.lower.len())?;
                CandidateEntry::new(family, HyperRectangle::new(r.lower, r.upper)?)
            })
            .collect::<Result<Vec<_>>>()?;
        CandidateSet::new(entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    Thm1,
    Thm2,
    Both,
}

impl BoundMethod {
    fn wants_thm1(self) -> bool {
        matches!(self, BoundMethod::Thm1 | BoundMethod::Both)
    }

    fn wants_thm2(self) -> bool {
        matches!(self, BoundMethod::Thm2 | BoundMethod::Both)
    }
}

/// Per-test-point results of [`bound_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub x: Vec<f64>,
    pub exact_mspe: Option<f64>,
    pub est_var_trace: f64,
    pub thm1: Option<f64>,
    pub thm2: Option<f64>,
}

/// Exact MSPE between the predictions of a known truth model and the mean
/// prediction of an estimate model sharing the same training inputs.
///
/// The expectation runs over the truth's joint prior of test output and
/// (noisy) training outputs, so the result depends on the training inputs and
/// both kernels but not on the observed outputs.
pub fn exact_mspe(truth: &GpModel, estimate: &GpModel, x: &[f64]) -> Result<f64> {
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
    let mut total = 0.0;
    for i in 0..truth.output_dim() {
        let h = estimate.weight_vector(i, x)?;
        let k_xx = truth.spec(i).eval(x, x)?;
        let k_vec = truth.cross_cov(i, x)?;
        let noisy_quad = if truth.data().m() == 0 {
            0.0
        } else {
            (truth.kernel_mat(i) * &h).dot(&h) + truth.data().noise_var(i) * h.norm_squared()
        };
        total += k_xx - 2.0 * h.dot(&k_vec) + noisy_quad;
    }
    Ok(total.max(0.0))
}

/// Largest kernel value any candidate can attain at `(x, x')`.
pub fn kmax(cands: &CandidateSet, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for entry in cands.entries() {
        let opt = maximize_over_box(&entry.family, &entry.phi_box, x, x_prime, OptMode::Max)?;
        best = best.max(opt.value);
    }
    Ok(best)
}

fn clipped_weights(estimate: &GpModel, output: usize, x: &[f64]) -> Result<DVector<f64>> {
    let mut h = estimate.weight_vector(output, x)?;
    for v in h.iter_mut() {
        if v.abs() < H_EPS {
            *v = 0.0;
        }
    }
    Ok(h)
}

fn split_neg_sum(h: &DVector<f64>, values: &[f64]) -> f64 {
    h.iter()
        .zip(values)
        .map(|(&hp, &v)| hp.min(0.0) * v)
        .sum()
}

/// Lower bound on the cross term `h . k(x, X)` over the candidate set: the
/// positive-weight part is dropped (the kernels are nonnegative) and the
/// negative weights multiply the candidate-wide maxima.
pub fn beta_lower(
    cands: &CandidateSet,
    estimate: &GpModel,
    output: usize,
    x: &[f64],
) -> Result<f64> {
    let h = clipped_weights(estimate, output, x)?;
    let mut kvec_max = Vec::with_capacity(estimate.data().m());
    for p in estimate.data().points() {
        kvec_max.push(kmax(cands, x, p)?);
    }
    Ok(split_neg_sum(&h, &kvec_max))
}

/// Upper bound on the quadratic term `h^T K h` over the candidate set, with
/// the known noise diagonal added.
pub fn gamma_upper(
    cands: &CandidateSet,
    estimate: &GpModel,
    output: usize,
    x: &[f64],
) -> Result<f64> {
    let engine = BoundEngine::new(estimate, cands, BoundMethod::Thm1)?;
    engine.gamma_upper_at(output, x)
}

/// Optimization-based MSPE upper bound.
pub fn thm1_bound(cands: &CandidateSet, estimate: &GpModel, x: &[f64]) -> Result<f64> {
    BoundEngine::new(estimate, cands, BoundMethod::Thm1)?.thm1_at(x)
}

/// Corner-evaluated closed-form MSPE upper bound; requires a certified set.
pub fn thm2_bound(cands: &CandidateSet, estimate: &GpModel, x: &[f64]) -> Result<f64> {
    BoundEngine::new(estimate, cands, BoundMethod::Thm2)?.thm2_at(x)
}

/// Precomputed per-(estimate, candidate-set) state for evaluating bounds over
/// many test points. The training-pair worst cases are x-independent, so
/// they are built once and the per-point work stays `O(z m^2)`.
pub struct BoundEngine<'a> {
    estimate: &'a GpModel,
    cands: &'a CandidateSet,
    /// `max_j max_phi k^j(phi, X_q, X_p)` for all training pairs (thm1).
    pair_kmax: Option<DMatrix<f64>>,
    /// Per entry: kernel matrices at the upper and lower box corner (thm2).
    corner_pairs: Option<Vec<(DMatrix<f64>, DMatrix<f64>)>>,
}

impl<'a> BoundEngine<'a> {
    pub fn new(
        estimate: &'a GpModel,
        cands: &'a CandidateSet,
        method: BoundMethod,
    ) -> Result<Self> {
        // a candidate whose input domain excludes a training point cannot
        // bound anything evaluated on that data
        for entry in cands.entries() {
            for p in estimate.data().points() {
                entry.family.check_inputs(p, p)?;
            }
        }
        if method.wants_thm2() && !cands.is_certified() {
            return Err(Error::MissingCertificate);
        }

        let m = estimate.data().m();
        let points = estimate.data().points();

        let pair_kmax = if method.wants_thm1() {
            let mut mat = DMatrix::zeros(m, m);
            for q in 0..m {
                for p in 0..=q {
                    let v = kmax(cands, &points[q], &points[p])?;
                    mat[(q, p)] = v;
                    mat[(p, q)] = v;
                }
            }
            Some(mat)
        } else {
            None
        };

        let corner_pairs = if method.wants_thm2() {
            let mut per_entry = Vec::with_capacity(cands.len());
            for entry in cands.entries() {
                let mut up = DMatrix::zeros(m, m);
                let mut lo = DMatrix::zeros(m, m);
                for q in 0..m {
                    for p in 0..=q {
                        let vu = entry
                            .family
                            .eval_unchecked(entry.phi_box.upper(), &points[q], &points[p]);
                        let vl = entry
                            .family
                            .eval_unchecked(entry.phi_box.lower(), &points[q], &points[p]);
                        up[(q, p)] = vu;
                        up[(p, q)] = vu;
                        lo[(q, p)] = vl;
                        lo[(p, q)] = vl;
                    }
                }
                per_entry.push((up, lo));
            }
            Some(per_entry)
        } else {
            None
        };

        Ok(BoundEngine {
            estimate,
            cands,
            pair_kmax,
            corner_pairs,
        })
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        for entry in self.cands.entries() {
            entry.family.check_inputs(x, x)?;
        }
        Ok(())
    }

    pub fn gamma_upper_at(&self, output: usize, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let h = clipped_weights(self.estimate, output, x)?;
        let pair_kmax = self
            .pair_kmax
            .as_ref()
            .expect("engine built without the thm1 cache");
        Ok(quad_upper(&h, pair_kmax) + self.estimate.data().noise_var(output) * h.norm_squared())
    }

    pub fn thm1_at(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let alpha = kmax(self.cands, x, x)?;
        let m = self.estimate.data().m();
        let mut kvec_max = Vec::with_capacity(m);
        for p in self.estimate.data().points() {
            kvec_max.push(kmax(self.cands, x, p)?);
        }
        let pair_kmax = self
            .pair_kmax
            .as_ref()
            .expect("engine built without the thm1 cache");

        let n_y = self.estimate.output_dim();
        let mut total = n_y as f64 * alpha;
        for i in 0..n_y {
            let h = clipped_weights(self.estimate, i, x)?;
            let beta_low = split_neg_sum(&h, &kvec_max);
            let gamma =
                quad_upper(&h, pair_kmax) + self.estimate.data().noise_var(i) * h.norm_squared();
            total += gamma - 2.0 * beta_low;
        }
        Ok(total)
    }

    pub fn thm2_at(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let corner_pairs = self
            .corner_pairs
            .as_ref()
            .expect("engine built without the thm2 cache");
        let points = self.estimate.data().points();
        let m = points.len();

        // per entry: prior term and cross-covariance vectors at both corners
        let mut per_entry = Vec::with_capacity(self.cands.len());
        for entry in self.cands.entries() {
            let a = entry.family.eval_unchecked(entry.phi_box.upper(), x, x);
            let mut uvec = Vec::with_capacity(m);
            let mut lvec = Vec::with_capacity(m);
            for p in points {
                uvec.push(entry.family.eval_unchecked(entry.phi_box.upper(), x, p));
                lvec.push(entry.family.eval_unchecked(entry.phi_box.lower(), x, p));
            }
            per_entry.push((a, uvec, lvec));
        }

        let mut total = 0.0;
        for i in 0..self.estimate.output_dim() {
            let h = clipped_weights(self.estimate, i, x)?;
            let noise_term = self.estimate.data().noise_var(i) * h.norm_squared();
            let mut best = f64::NEG_INFINITY;
            for (j, (a, uvec, lvec)) in per_entry.iter().enumerate() {
                let eta = 2.0 * cross_lower(&h, uvec, lvec);
                let kappa =
                    quad_corner_upper(&h, &corner_pairs[j].0, &corner_pairs[j].1) + noise_term;
                best = best.max(a + kappa - eta);
            }
            total += best;
        }
        Ok(total)
    }

    pub fn exact_at(&self, truth: &GpModel, x: &[f64]) -> Result<f64> {
        exact_mspe(truth, self.estimate, x)
    }
}

/// `sum_{p,q} max(h_p h_q, 0) * vals[q,p]`.
fn quad_upper(h: &DVector<f64>, vals: &DMatrix<f64>) -> f64 {
    let m = h.len();
    let mut acc = 0.0;
    for q in 0..m {
        for p in 0..m {
            let w = h[q] * h[p];
            if w > 0.0 {
                acc += w * vals[(q, p)];
            }
        }
    }
    acc
}

/// `sum_{p,q} max(h_p h_q, 0) * up[q,p] + min(h_p h_q, 0) * lo[q,p]`.
fn quad_corner_upper(h: &DVector<f64>, up: &DMatrix<f64>, lo: &DMatrix<f64>) -> f64 {
    let m = h.len();
    let mut acc = 0.0;
    for q in 0..m {
        for p in 0..m {
            let w = h[q] * h[p];
            if w > 0.0 {
                acc += w * up[(q, p)];
            } else if w < 0.0 {
                acc += w * lo[(q, p)];
            }
        }
    }
    acc
}

/// `sum_p min(h_p, 0) * up[p] + max(h_p, 0) * lo[p]`: a lower bound on
/// `h . k(x, X)` when `lo <= k <= up` pointwise.
fn cross_lower(h: &DVector<f64>, up: &[f64], lo: &[f64]) -> f64 {
    h.iter()
        .zip(up.iter().zip(lo))
        .map(|(&hp, (&u, &l))| if hp < 0.0 { hp * u } else { hp * l })
        .sum()
}

/// Evaluates the requested bounds (and, when the truth is known, the exact
/// MSPE) at every grid point. Grid points are independent, so the evaluation
/// fans out over the rayon thread pool after the caches are built.
pub fn bound_report(
    truth: Option<&GpModel>,
    estimate: &GpModel,
    cands: &CandidateSet,
    grid: &[Vec<f64>],
    method: BoundMethod,
) -> Result<Vec<BoundReport>> {
    let engine = BoundEngine::new(estimate, cands, method)?;
    grid.par_iter()
        .map(|x| {
            let exact = truth.map(|t| engine.exact_at(t, x)).transpose()?;
            let est_var_trace = estimate.posterior_var_trace(x)?;
            let thm1 = method.wants_thm1().then(|| engine.thm1_at(x)).transpose()?;
            let thm2 = method.wants_thm2().then(|| engine.thm2_at(x)).transpose()?;
            Ok(BoundReport {
                x: x.clone(),
                exact_mspe: exact,
                est_var_trace,
                thm1,
                thm2,
            })
        })
        .collect()
}

/// CSV with columns `x_1..x_k, exact_mspe, est_var_trace, thm1, thm2`;
/// absent values are left empty. Floats use the shortest round-trip decimal.
pub fn write_reports_csv<W: std::io::Write>(writer: W, reports: &[BoundReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let input_dim = reports.first().map(|r| r.x.len()).unwrap_or(1);
    let mut header: Vec<String> = (1..=input_dim).map(|i| format!("x_{i}")).collect();
    header.extend(
        ["exact_mspe", "est_var_trace", "thm1", "thm2"]
            .iter()
            .map(|s| s.to_string()),
    );
    wtr.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in reports {
        let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
        row.push(fmt(r.exact_mspe));
        row.push(r.est_var_trace.to_string());
        row.push(fmt(r.thm1));
        row.push(fmt(r.thm2));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
