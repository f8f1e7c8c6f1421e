//! Training data, Gram matrices and exact GP posterior prediction.
//!
//! Outputs are modeled by independent zero-mean GPs, one per output
//! dimension, sharing the training inputs. Each output has its own
//! covariance function and observation-noise variance.

mod fit;

pub use fit::{
    fit_hyperparameters, fit_model, log_marginal_likelihood, lml_grad_logphi, FitConfig,
    FitDiagnostics, RestartRecord,
};

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chol::{jittered_cholesky, JitteredChol};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Training data shared by the ground-truth and estimated models.
///
/// `m` may be zero, in which case a model built on the dataset predicts from
/// the prior alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    points: Vec<Vec<f64>>,
    outputs: DMatrix<f64>,
    noise_var: Vec<f64>,
}

impl Dataset {
    /// `points` are the m training inputs, `outputs` the m rows of output
    /// values (one column per output), `noise_var` the per-output
    /// observation-noise variances.
    pub fn new(points: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>, noise_var: Vec<f64>) -> Result<Self> {
        let m = points.len();
        if outputs.len() != m {
            return Err(Error::DimensionMismatch {
                context: "dataset output rows",
                expected: m,
                got: outputs.len(),
            });
        }
        let input_dim = points.first().map(|p| p.len()).unwrap_or(0);
        if input_dim == 0 && m > 0 {
            return Err(Error::InvalidConfig("training points are empty".into()));
        }
        let n_y = noise_var.len();
        if n_y == 0 {
            return Err(Error::InvalidConfig("at least one output required".into()));
        }
        for (j, p) in points.iter().enumerate() {
            if p.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    context: "training point dimension",
                    expected: input_dim,
                    got: points[j].len(),
                });
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!("non-finite input at row {j}")));
            }
        }
        for (j, row) in outputs.iter().enumerate() {
            if row.len() != n_y {
                return Err(Error::DimensionMismatch {
                    context: "dataset output columns",
                    expected: n_y,
                    got: row.len(),
                });
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!("non-finite output at row {j}")));
            }
        }
        if !noise_var.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise variances must be nonnegative".into(),
            ));
        }
        let outputs = DMatrix::from_fn(m, n_y, |r, c| outputs[r][c]);
        Ok(Dataset {
            input_dim,
            points,
            outputs,
            noise_var,
        })
    }

    /// An empty dataset: models built on it predict from the prior.
    pub fn prior(input_dim: usize, noise_var: Vec<f64>) -> Result<Self> {
        if noise_var.is_empty() {
            return Err(Error::InvalidConfig("at least one output required".into()));
        }
        Ok(Dataset {
            input_dim,
            points: Vec::new(),
            outputs: DMatrix::zeros(0, noise_var.len()),
            noise_var,
        })
    }

    /// Same inputs, new outputs; used by tests of Y-(in)dependence.
    pub fn with_outputs(&self, outputs: Vec<Vec<f64>>) -> Result<Self> {
        Dataset::new(self.points.clone(), outputs, self.noise_var.clone())
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.noise_var.len()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn output_col(&self, i: usize) -> DVector<f64> {
        self.outputs.column(i).into_owned()
    }

    pub fn output_row(&self, j: usize) -> Vec<f64> {
        self.outputs.row(j).iter().cloned().collect()
    }

    pub fn noise_var(&self, i: usize) -> f64 {
        self.noise_var[i]
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_var
    }

    /// True when the two datasets share training inputs and noise levels
    /// (outputs may differ).
    pub fn same_inputs(&self, other: &Dataset) -> bool {
        self.input_dim == other.input_dim
            && self.points == other.points
            && self.noise_var == other.noise_var
    }

    /// Reads `x_1,..,x_k,y_1,..,y_j` columns; the noise variances are not
    /// part of the file and must be supplied.
    pub fn from_csv_reader<R: Read>(reader: R, noise_var: Vec<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_line_error)?.clone();
        let mut n_x = 0;
        let mut n_y = 0;
        for (idx, name) in headers.iter().enumerate() {
            let expect_x = format!("x_{}", n_x + 1);
            let expect_y = format!("y_{}", n_y + 1);
            if n_y == 0 && name == expect_x {
                n_x += 1;
            } else if name == expect_y {
                n_y += 1;
            } else {
                return Err(Error::CsvParse {
                    line: 1,
                    detail: format!(
                        "unexpected column {} \"{}\"; expected x_1..x_k,y_1..y_j",
                        idx + 1,
                        name
                    ),
                });
            }
        }
        if n_x == 0 || n_y == 0 {
            return Err(Error::CsvParse {
                line: 1,
                detail: "header must contain at least one x_* and one y_* column".into(),
            });
        }
        if noise_var.len() != n_y {
            return Err(Error::DimensionMismatch {
                context: "noise variances vs output columns",
                expected: n_y,
                got: noise_var.len(),
            });
        }
        let mut points = Vec::new();
        let mut outputs = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_line_error)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != n_x + n_y {
                return Err(Error::CsvParse {
                    line,
                    detail: format!("expected {} fields, found {}", n_x + n_y, record.len()),
                });
            }
            let parse = |field: &str| -> Result<f64> {
                field.parse::<f64>().map_err(|e| Error::CsvParse {
                    line,
                    detail: format!("bad float \"{field}\": {e}"),
                })
            };
            let mut x = Vec::with_capacity(n_x);
            for field in record.iter().take(n_x) {
                x.push(parse(field)?);
            }
            let mut y = Vec::with_capacity(n_y);
            for field in record.iter().skip(n_x) {
                y.push(parse(field)?);
            }
            points.push(x);
            outputs.push(y);
        }
        Dataset::new(points, outputs, noise_var)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, noise_var: Vec<f64>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, noise_var)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = Vec::new();
        for i in 0..self.input_dim {
            header.push(format!("x_{}", i + 1));
        }
        for i in 0..self.output_dim() {
            header.push(format!("y_{}", i + 1));
        }
        wtr.write_record(&header)?;
        for j in 0..self.m() {
            let mut row: Vec<String> = self.points[j].iter().map(|v| v.to_string()).collect();
            row.extend(self.outputs.row(j).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_line_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::CsvParse {
        line,
        detail: err.to_string(),
    }
}

/// Noiseless kernel matrix `K0[a,b] = k(phi, x_a, x_b)`.
pub fn kernel_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = points.len();
    for p in points {
        spec.family().check_inputs(p, p)?;
    }
    let mut mat = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let v = spec.eval_unchecked(&points[a], &points[b]);
            mat[(a, b)] = v;
            mat[(b, a)] = v;
        }
    }
    Ok(mat)
}

/// Gram matrix `K[a,b] = k(phi, x_a, x_b) + delta(a,b) * noise_var`.
pub fn gram(spec: &KernelSpec, points: &[Vec<f64>], noise_var: f64) -> Result<DMatrix<f64>> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::InvalidConfig(
            "noise variance must be nonnegative".into(),
        ));
    }
    let mut mat = kernel_matrix(spec, points)?;
    for i in 0..points.len() {
        mat[(i, i)] += noise_var;
    }
    Ok(mat)
}

/// Posterior mean and variance at a test point, one entry per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// An immutable multi-output GP: per-output covariance functions plus the
/// cached Gram factorizations and weight vectors for the shared dataset.
///
/// Refitting produces a new model, so cached factors can never go stale, and
/// concurrent read-only prediction is safe.
pub struct GpModel {
    data: Arc<Dataset>,
    specs: Vec<KernelSpec>,
    kernel_mats: Vec<DMatrix<f64>>,
    chols: Vec<JitteredChol>,
    weights: Vec<DVector<f64>>,
}

impl GpModel {
    pub fn new(data: impl Into<Arc<Dataset>>, specs: Vec<KernelSpec>) -> Result<Self> {
        let data = data.into();
        if specs.len() != data.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "kernel specs vs outputs",
                expected: data.output_dim(),
                got: specs.len(),
            });
        }
        let mut kernel_mats = Vec::with_capacity(specs.len());
        let mut chols = Vec::with_capacity(specs.len());
        let mut weights = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if let crate::kernels::KernelFamily::SquaredExponentialArd { input_dim } =
                spec.family()
            {
                if data.m() > 0 && *input_dim != data.input_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "kernel input dimension",
                        expected: data.input_dim(),
                        got: *input_dim,
                    });
                }
            }
            let k0 = kernel_matrix(spec, data.points())?;
            let mut solve_mat = k0.clone();
            for d in 0..data.m() {
                solve_mat[(d, d)] += data.noise_var(i);
            }
            let chol = jittered_cholesky(&solve_mat)?;
            let w = chol.solve(&data.output_col(i));
            kernel_mats.push(k0);
            chols.push(chol);
            weights.push(w);
        }
        Ok(GpModel {
            data,
            specs,
            kernel_mats,
            chols,
            weights,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn data_arc(&self) -> Arc<Dataset> {
        Arc::clone(&self.data)
    }

    pub fn output_dim(&self) -> usize {
        self.specs.len()
    }

    pub fn spec(&self, output: usize) -> &KernelSpec {
        &self.specs[output]
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    /// Jitter added to output `i`'s Gram diagonal to make Cholesky succeed.
    pub fn jitter(&self, output: usize) -> f64 {
        self.chols[output].jitter()
    }

    pub(crate) fn kernel_mat(&self, output: usize) -> &DMatrix<f64> {
        &self.kernel_mats[output]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if self.data.m() > 0 && x.len() != self.data.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "test point dimension",
                expected: self.data.input_dim(),
                got: x.len(),
            });
        }
        for spec in &self.specs {
            spec.family().check_inputs(x, x)?;
        }
        Ok(())
    }

    /// Covariance vector `k^i(x, X)` between a test point and the training
    /// inputs.
    pub fn cross_cov(&self, output: usize, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let spec = &self.specs[output];
        Ok(DVector::from_iterator(
            self.data.m(),
            self.data.points().iter().map(|p| spec.eval_unchecked(x, p)),
        ))
    }

    /// Prediction weights `h = K^{-1} k(x, X)`, so the posterior mean is
    /// `h . Y_col`.
    pub fn weight_vector(&self, output: usize, x: &[f64]) -> Result<DVector<f64>> {
        let k_vec = self.cross_cov(output, x)?;
        Ok(self.chols[output].solve(&k_vec))
    }

    pub fn posterior_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut mean = Vec::with_capacity(self.output_dim());
        for i in 0..self.output_dim() {
            let spec = &self.specs[i];
            let dot: f64 = self
                .data
                .points()
                .iter()
                .zip(self.weights[i].iter())
                .map(|(p, w)| spec.eval_unchecked(x, p) * w)
                .sum();
            mean.push(dot);
        }
        Ok(mean)
    }

    pub fn posterior_var(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut var = Vec::with_capacity(self.output_dim());
        for i in 0..self.output_dim() {
            let prior = self.specs[i].eval_unchecked(x, x);
            let v = if self.data.m() == 0 {
                prior
            } else {
                let k_vec = self.cross_cov(i, x)?;
                let half = self.chols[i].solve_lower(&k_vec);
                prior - half.norm_squared()
            };
            var.push(v.max(0.0));
        }
        Ok(var)
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Posterior> {
        Ok(Posterior {
            mean: self.posterior_mean(x)?,
            var: self.posterior_var(x)?,
        })
    }

    /// Trace of the posterior covariance — the model's own claim about its
    /// squared prediction error.
    pub fn posterior_var_trace(&self, x: &[f64]) -> Result<f64> {
        Ok(self.posterior_var(x)?.iter().sum())
    }
}
