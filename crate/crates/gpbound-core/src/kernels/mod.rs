//! Covariance (kernel) functions and their hyperparameter-domain metadata.
//!
//! Four families are supported, each positive and componentwise monotone in
//! its hyperparameters on the stated domain:
//!
//! | family    | k(phi, x, x')                                                  | phi                  |
//! |-----------|----------------------------------------------------------------|----------------------|
//! | `poly`    | (<x,x'> + phi^2)^p                                             | phi in R_{>=0}       |
//! | `rq`      | phi_2^2 (1 + d^2 / (2 p phi_1^2))^{-p}                         | phi in R^2_{>0}      |
//! | `se_ard`  | phi_{n+1}^2 exp(-1/2 sum_i (x_i - x'_i)^2 / phi_i^2)           | phi in R^{n+1}_{>0}  |
//! | `matern`  | half-integer closed forms, nu = p + 1/2, p in {0, 1, 2}        | phi in R^2_{>0}      |
//!
//! with d = ||x - x'||. The polynomial family is only a valid positive kernel
//! on the nonnegative orthant, which [`InputDomainConstraint`] records.
//!
//! Strictly-positive domains are closed at the floor [`PHI_FLOOR`] so every
//! admissible hyperparameter vector evaluates without division by zero.

mod checks;

pub use checks::{
    check_componentwise_monotone, check_line_quasiconcave, check_monotone_fn,
    check_quasiconcave_fn, PropertyReport, PropertyWitness,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower closure of the strictly-positive hyperparameter domains.
pub const PHI_FLOOR: f64 = 1e-8;

/// A covariance-function family together with its fixed structural
/// parameters. The continuous hyperparameters live in [`KernelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `(<x,x'> + phi^2)^p` with degree `p >= 1`; one hyperparameter.
    Polynomial { degree: u32 },
    /// Rational quadratic with shape exponent `p >= 1`; phi = [lengthscale, signal_std].
    RationalQuadratic { p: u32 },
    /// Squared exponential with one lengthscale per input dimension;
    /// phi = [lengthscale_1, .., lengthscale_n, signal_std].
    SquaredExponentialArd { input_dim: usize },
    /// Matern with nu = p + 1/2 for `p in {0, 1, 2}`; phi = [lengthscale, signal_std].
    Matern { p: u32 },
}

/// Which test/training inputs a family admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDomainConstraint {
    /// Every coordinate must be `>= 0` (polynomial family).
    NonnegativeOrthant,
    /// All of R^{n_x}.
    Unrestricted,
}

impl InputDomainConstraint {
    pub fn admits(&self, x: &[f64]) -> bool {
        match self {
            InputDomainConstraint::NonnegativeOrthant => x.iter().all(|&v| v >= 0.0),
            InputDomainConstraint::Unrestricted => true,
        }
    }
}

impl KernelFamily {
    /// Short identifier used in serialized specs and reports.
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Polynomial { .. } => "poly",
            KernelFamily::RationalQuadratic { .. } => "rq",
            KernelFamily::SquaredExponentialArd { .. } => "se_ard",
            KernelFamily::Matern { .. } => "matern",
        }
    }

    /// Number of continuous hyperparameters.
    pub fn phi_len(&self) -> usize {
        match self {
            KernelFamily::Polynomial { .. } => 1,
            KernelFamily::RationalQuadratic { .. } => 2,
            KernelFamily::SquaredExponentialArd { input_dim } => input_dim + 1,
            KernelFamily::Matern { .. } => 2,
        }
    }

    pub fn input_constraint(&self) -> InputDomainConstraint {
        match self {
            KernelFamily::Polynomial { .. } => InputDomainConstraint::NonnegativeOrthant,
            _ => InputDomainConstraint::Unrestricted,
        }
    }

    /// Validates the structural parameters of the family itself.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            KernelFamily::Polynomial { degree } => *degree >= 1,
            KernelFamily::RationalQuadratic { p } => *p >= 1,
            KernelFamily::SquaredExponentialArd { input_dim } => *input_dim >= 1,
            KernelFamily::Matern { p } => *p <= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid structural parameter for {:?}",
                self
            )))
        }
    }

    /// Smallest admissible value per hyperparameter coordinate.
    pub fn phi_lower_limit(&self) -> f64 {
        match self {
            KernelFamily::Polynomial { .. } => 0.0,
            _ => PHI_FLOOR,
        }
    }

    pub fn phi_in_domain(&self, phi: &[f64]) -> bool {
        let lo = self.phi_lower_limit();
        phi.len() == self.phi_len() && phi.iter().all(|&v| v.is_finite() && v >= lo)
    }

    pub fn check_phi(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.phi_len() {
            return Err(Error::DimensionMismatch {
                context: "hyperparameter vector",
                expected: self.phi_len(),
                got: phi.len(),
            });
        }
        if !self.phi_in_domain(phi) {
            return Err(Error::PhiOutOfDomain {
                family: self.name(),
                detail: format!("{:?} has a coordinate below {}", phi, self.phi_lower_limit()),
            });
        }
        Ok(())
    }

    pub fn check_inputs(&self, x: &[f64], x_prime: &[f64]) -> Result<()> {
        if x.len() != x_prime.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel input pair",
                expected: x.len(),
                got: x_prime.len(),
            });
        }
        if let KernelFamily::SquaredExponentialArd { input_dim } = self {
            if x.len() != *input_dim {
                return Err(Error::DimensionMismatch {
                    context: "kernel input dimension",
                    expected: *input_dim,
                    got: x.len(),
                });
            }
        }
        let constraint = self.input_constraint();
        if !constraint.admits(x) || !constraint.admits(x_prime) {
            return Err(Error::InputOutOfDomain {
                family: self.name(),
            });
        }
        Ok(())
    }

    /// Checked kernel evaluation `k(phi, x, x')`.
    pub fn eval(&self, phi: &[f64], x: &[f64], x_prime: &[f64]) -> Result<f64> {
        self.check_phi(phi)?;
        self.check_inputs(x, x_prime)?;
        Ok(self.eval_unchecked(phi, x, x_prime))
    }

    /// Checked gradient of `k` with respect to `phi`.
    pub fn grad_phi(&self, phi: &[f64], x: &[f64], x_prime: &[f64]) -> Result<Vec<f64>> {
        self.check_phi(phi)?;
        self.check_inputs(x, x_prime)?;
        Ok(self.grad_phi_unchecked(phi, x, x_prime))
    }

    pub(crate) fn eval_unchecked(&self, phi: &[f64], x: &[f64], x_prime: &[f64]) -> f64 {
        match self {
            KernelFamily::Polynomial { degree } => {
                (dot(x, x_prime) + phi[0] * phi[0]).powi(*degree as i32)
            }
            KernelFamily::RationalQuadratic { p } => {
                let u = sq_dist(x, x_prime) / (2.0 * *p as f64 * phi[0] * phi[0]);
                phi[1] * phi[1] * (1.0 + u).powi(-(*p as i32))
            }
            KernelFamily::SquaredExponentialArd { input_dim } => {
                let n = *input_dim;
                let mut s = 0.0;
                for i in 0..n {
                    let d = x[i] - x_prime[i];
                    s += d * d / (phi[i] * phi[i]);
                }
                phi[n] * phi[n] * (-0.5 * s).exp()
            }
            KernelFamily::Matern { p } => {
                let d = sq_dist(x, x_prime).sqrt();
                let sig2 = phi[1] * phi[1];
                if d == 0.0 {
                    // limit of the closed forms; avoids a removable 0/0
                    return sig2;
                }
                match p {
                    0 => sig2 * (-d / phi[0]).exp(),
                    1 => {
                        let a = 3f64.sqrt() * d / phi[0];
                        sig2 * (1.0 + a) * (-a).exp()
                    }
                    _ => {
                        let a = 5f64.sqrt() * d / phi[0];
                        sig2 * (1.0 + a + a * a / 3.0) * (-a).exp()
                    }
                }
            }
        }
    }

    pub(crate) fn grad_phi_unchecked(&self, phi: &[f64], x: &[f64], x_prime: &[f64]) -> Vec<f64> {
        match self {
            KernelFamily::Polynomial { degree } => {
                let p = *degree as f64;
                let base = dot(x, x_prime) + phi[0] * phi[0];
                vec![2.0 * phi[0] * p * base.powi(*degree as i32 - 1)]
            }
            KernelFamily::RationalQuadratic { p } => {
                let d2 = sq_dist(x, x_prime);
                let u = d2 / (2.0 * *p as f64 * phi[0] * phi[0]);
                let pow_p = (1.0 + u).powi(-(*p as i32));
                let pow_p1 = pow_p / (1.0 + u);
                vec![
                    phi[1] * phi[1] * d2 / (phi[0] * phi[0] * phi[0]) * pow_p1,
                    2.0 * phi[1] * pow_p,
                ]
            }
            KernelFamily::SquaredExponentialArd { input_dim } => {
                let n = *input_dim;
                let k = self.eval_unchecked(phi, x, x_prime);
                let mut g = Vec::with_capacity(n + 1);
                for i in 0..n {
                    let d = x[i] - x_prime[i];
                    g.push(k * d * d / (phi[i] * phi[i] * phi[i]));
                }
                g.push(2.0 * k / phi[n]);
                g
            }
            KernelFamily::Matern { p } => {
                let d = sq_dist(x, x_prime).sqrt();
                let sig2 = phi[1] * phi[1];
                if d == 0.0 {
                    return vec![0.0, 2.0 * phi[1]];
                }
                match p {
                    0 => {
                        let e = (-d / phi[0]).exp();
                        vec![sig2 * e * d / (phi[0] * phi[0]), 2.0 * phi[1] * e]
                    }
                    1 => {
                        let a = 3f64.sqrt() * d / phi[0];
                        let e = (-a).exp();
                        vec![sig2 * a * a * e / phi[0], 2.0 * phi[1] * (1.0 + a) * e]
                    }
                    _ => {
                        let a = 5f64.sqrt() * d / phi[0];
                        let e = (-a).exp();
                        vec![
                            sig2 * (a * a / 3.0) * (1.0 + a) * e / phi[0],
                            2.0 * phi[1] * (1.0 + a + a * a / 3.0) * e,
                        ]
                    }
                }
            }
        }
    }
}

/// A family plus a concrete hyperparameter vector; validated on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpecRepr", into = "KernelSpecRepr")]
pub struct KernelSpec {
    family: KernelFamily,
    phi: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, phi: Vec<f64>) -> Result<Self> {
        family.validate()?;
        family.check_phi(&phi)?;
        Ok(KernelSpec { family, phi })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `k(phi, x, x')`.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        self.family.check_inputs(x, x_prime)?;
        Ok(self.family.eval_unchecked(&self.phi, x, x_prime))
    }

    /// Gradient of `k(phi, x, x')` with respect to `phi`.
    pub fn grad_phi(&self, x: &[f64], x_prime: &[f64]) -> Result<Vec<f64>> {
        self.family.check_inputs(x, x_prime)?;
        Ok(self.family.grad_phi_unchecked(&self.phi, x, x_prime))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        self.family.eval_unchecked(&self.phi, x, x_prime)
    }
}

/// Wire format: `{"family": "se_ard"|"matern"|"rq"|"poly", "p": int, "phi": [..]}`.
#[derive(Serialize, Deserialize)]
struct KernelSpecRepr {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<u32>,
    phi: Vec<f64>,
}

impl From<KernelSpec> for KernelSpecRepr {
    fn from(spec: KernelSpec) -> Self {
        let p = match spec.family {
            KernelFamily::Polynomial { degree } => Some(degree),
            KernelFamily::RationalQuadratic { p } | KernelFamily::Matern { p } => Some(p),
            KernelFamily::SquaredExponentialArd { .. } => None,
        };
        KernelSpecRepr {
            family: spec.family.name().to_string(),
            p,
            phi: spec.phi,
        }
    }
}

impl TryFrom<KernelSpecRepr> for KernelSpec {
    type Error = Error;

    fn try_from(repr: KernelSpecRepr) -> Result<Self> {
        let family = family_from_parts(&repr.family, repr.p, repr.phi.len())?;
        KernelSpec::new(family, repr.phi)
    }
}

/// Reconstructs a [`KernelFamily`] from its serialized name, optional
/// structural parameter and hyperparameter count (`se_ard` infers its input
/// dimension from the latter).
pub fn family_from_parts(name: &str, p: Option<u32>, phi_len: usize) -> Result<KernelFamily> {
    let family = match name {
        "poly" => KernelFamily::Polynomial {
            degree: p.ok_or_else(|| Error::InvalidConfig("poly requires \"p\"".into()))?,
        },
        "rq" => KernelFamily::RationalQuadratic {
            p: p.ok_or_else(|| Error::InvalidConfig("rq requires \"p\"".into()))?,
        },
        "matern" => KernelFamily::Matern {
            p: p.ok_or_else(|| Error::InvalidConfig("matern requires \"p\"".into()))?,
        },
        "se_ard" => {
            if phi_len < 2 {
                return Err(Error::InvalidConfig(
                    "se_ard requires at least 2 hyperparameters".into(),
                ));
            }
            KernelFamily::SquaredExponentialArd {
                input_dim: phi_len - 1,
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown kernel family \"{other}\""
            )))
        }
    };
    family.validate()?;
    Ok(family)
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}
