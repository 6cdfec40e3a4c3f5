//! Exponential-dispersion families with known dispersion, and the inverse
//! link functions they can be paired with.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{normal_cdf, normal_pdf, normal_quantile};

/// Bounded links never return exactly 0 or 1.
pub const PROB_EPS: f64 = f64::EPSILON;

/// Fitted means of positive-domain families are floored here before the
/// variance function is evaluated (the sqrt link can produce exact zeros).
pub const MEAN_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FamilyError {
    #[error("mean {mean} outside the domain of the {family} family")]
    MeanOutOfDomain { family: FamilyKind, mean: f64 },
    #[error("dispersion must be positive and finite, got {0}")]
    InvalidDispersion(f64),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Normal,
    Bernoulli,
    Poisson,
    Gamma,
    InverseGaussian,
    NegativeBinomial,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Normal => "normal",
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Gamma => "gamma",
            FamilyKind::InverseGaussian => "inverse_gaussian",
            FamilyKind::NegativeBinomial => "negative_binomial",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = FamilyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "normal" | "gaussian" => FamilyKind::Normal,
            "bernoulli" | "binomial" => FamilyKind::Bernoulli,
            "poisson" => FamilyKind::Poisson,
            "gamma" => FamilyKind::Gamma,
            "inverse_gaussian" | "inverse-gaussian" | "ig" => FamilyKind::InverseGaussian,
            "negative_binomial" | "negative-binomial" | "nb" => FamilyKind::NegativeBinomial,
            other => return Err(FamilyError::UnknownFamily(other.to_string())),
        })
    }
}

/// A family together with its known dispersion parameter.
///
/// `dispersion` is σ² for the normal, the shape `k` for the gamma, `λ` for
/// the inverse Gaussian and `k` for the negative binomial. Bernoulli and
/// Poisson carry 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub kind: FamilyKind,
    pub dispersion: f64,
}

impl Family {
    pub fn new(kind: FamilyKind, dispersion: f64) -> Result<Self, FamilyError> {
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(FamilyError::InvalidDispersion(dispersion));
        }
        let dispersion = match kind {
            FamilyKind::Bernoulli | FamilyKind::Poisson => 1.0,
            _ => dispersion,
        };
        Ok(Family { kind, dispersion })
    }

    pub fn normal(sigma2: f64) -> Result<Self, FamilyError> {
        Family::new(FamilyKind::Normal, sigma2)
    }

    pub fn bernoulli() -> Self {
        Family {
            kind: FamilyKind::Bernoulli,
            dispersion: 1.0,
        }
    }

    pub fn poisson() -> Self {
        Family {
            kind: FamilyKind::Poisson,
            dispersion: 1.0,
        }
    }

    pub fn gamma(shape: f64) -> Result<Self, FamilyError> {
        Family::new(FamilyKind::Gamma, shape)
    }

    pub fn inverse_gaussian(lambda: f64) -> Result<Self, FamilyError> {
        Family::new(FamilyKind::InverseGaussian, lambda)
    }

    pub fn negative_binomial(k: f64) -> Result<Self, FamilyError> {
        Family::new(FamilyKind::NegativeBinomial, k)
    }

    pub fn in_domain(&self, mean: f64) -> bool {
        if !mean.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Normal => true,
            FamilyKind::Bernoulli => mean > 0.0 && mean < 1.0,
            _ => mean > 0.0,
        }
    }

    /// Floors non-negative means of positive-domain families at
    /// [`MEAN_FLOOR`]; other values pass through unchanged.
    pub fn floor_mean(&self, mean: f64) -> f64 {
        match self.kind {
            FamilyKind::Normal | FamilyKind::Bernoulli => mean,
            _ if (0.0..MEAN_FLOOR).contains(&mean) => MEAN_FLOOR,
            _ => mean,
        }
    }

    /// `v(m)` including the known dispersion.
    pub fn variance(&self, mean: f64) -> Result<f64, FamilyError> {
        if !self.in_domain(mean) {
            return Err(FamilyError::MeanOutOfDomain {
                family: self.kind,
                mean,
            });
        }
        let phi = self.dispersion;
        Ok(match self.kind {
            FamilyKind::Normal => phi,
            FamilyKind::Bernoulli => mean * (1.0 - mean),
            FamilyKind::Poisson => mean,
            FamilyKind::Gamma => mean * mean / phi,
            FamilyKind::InverseGaussian => mean * mean * mean / phi,
            FamilyKind::NegativeBinomial => mean + mean * mean / phi,
        })
    }

    /// The part of the log density that depends on the mean.
    pub fn log_likelihood_term(&self, y: f64, mean: f64) -> Result<f64, FamilyError> {
        if !self.in_domain(mean) {
            return Err(FamilyError::MeanOutOfDomain {
                family: self.kind,
                mean,
            });
        }
        let phi = self.dispersion;
        Ok(match self.kind {
            FamilyKind::Normal => -(y - mean).powi(2) / (2.0 * phi),
            FamilyKind::Bernoulli => {
                let mut ll = 0.0;
                if y > 0.0 {
                    ll += y * mean.ln();
                }
                if y < 1.0 {
                    ll += (1.0 - y) * (-mean).ln_1p();
                }
                ll
            }
            FamilyKind::Poisson => {
                if y > 0.0 {
                    y * mean.ln() - mean
                } else {
                    -mean
                }
            }
            FamilyKind::Gamma => phi * (-y / mean - mean.ln()),
            FamilyKind::InverseGaussian => -phi * (y - mean).powi(2) / (2.0 * mean * mean * y),
            FamilyKind::NegativeBinomial => {
                let head = if y > 0.0 { y * mean.ln() } else { 0.0 };
                head - (y + phi) * (mean + phi).ln()
            }
        })
    }

    /// Whether `y` is an admissible response value.
    pub fn valid_response(&self, y: f64) -> bool {
        if !y.is_finite() {
            return false;
        }
        match self.kind {
            FamilyKind::Normal => true,
            FamilyKind::Bernoulli => y == 0.0 || y == 1.0,
            FamilyKind::Poisson | FamilyKind::NegativeBinomial => y >= 0.0 && y.fract() == 0.0,
            FamilyKind::Gamma | FamilyKind::InverseGaussian => y > 0.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FamilyKind::Bernoulli | FamilyKind::Poisson => write!(f, "{}", self.kind),
            _ => write!(f, "{}({})", self.kind, self.dispersion),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
    Logit,
    Probit,
    Cauchit,
    Cloglog,
    Sqrt,
}

impl Link {
    pub const ALL: [Link; 7] = [
        Link::Identity,
        Link::Log,
        Link::Logit,
        Link::Probit,
        Link::Cauchit,
        Link::Cloglog,
        Link::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Cauchit => "cauchit",
            Link::Cloglog => "cloglog",
            Link::Sqrt => "sqrt",
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(
            self,
            Link::Logit | Link::Probit | Link::Cauchit | Link::Cloglog
        )
    }

    /// Inverse link `m(u)`.
    pub fn inverse(self, u: f64) -> f64 {
        let m = match self {
            Link::Identity => u,
            Link::Log => u.exp(),
            Link::Logit => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Link::Probit => normal_cdf(u),
            Link::Cauchit => 0.5 + u.atan() / std::f64::consts::PI,
            // 1 - exp(-exp(u)) without cancellation for small exp(u).
            Link::Cloglog => -(-u.exp()).exp_m1(),
            Link::Sqrt => u * u,
        };
        if self.is_bounded() {
            m.clamp(PROB_EPS, 1.0 - PROB_EPS)
        } else {
            m
        }
    }

    /// `dm/du`.
    pub fn inverse_deriv(self, u: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Log => u.exp(),
            Link::Logit => {
                let e = (-u.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Link::Probit => normal_pdf(u),
            Link::Cauchit => 1.0 / (std::f64::consts::PI * (1.0 + u * u)),
            Link::Cloglog => {
                let e = u.exp();
                if e.is_infinite() {
                    0.0
                } else {
                    e * (-e).exp()
                }
            }
            Link::Sqrt => 2.0 * u,
        }
    }

    /// Link `g(m)`, the inverse of [`Link::inverse`]. For the sqrt link the
    /// nonnegative root is returned.
    pub fn link(self, mean: f64) -> f64 {
        match self {
            Link::Identity => mean,
            Link::Log => mean.ln(),
            Link::Logit => (mean / (1.0 - mean)).ln(),
            Link::Probit => normal_quantile(mean),
            Link::Cauchit => (std::f64::consts::PI * (mean - 0.5)).tan(),
            Link::Cloglog => (-(-mean).ln_1p()).ln(),
            Link::Sqrt => mean.max(0.0).sqrt(),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = FamilyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Link::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .or(if s == "square_root" {
                Some(Link::Sqrt)
            } else {
                None
            })
            .ok_or_else(|| FamilyError::UnknownLink(s.to_string()))
    }
}

pub fn inverse_link(link: Link, u: f64) -> f64 {
    link.inverse(u)
}

pub fn inverse_link_deriv(link: Link, u: f64) -> f64 {
    link.inverse_deriv(u)
}

pub fn variance_function(family: &Family, mean: f64) -> Result<f64, FamilyError> {
    family.variance(mean)
}

/// True exactly for the distribution/link combinations with established
/// validity of the generalized HL test.
pub fn validate_pair(family: &Family, link: Link) -> bool {
    use FamilyKind::*;
    match family.kind {
        Normal => link == Link::Identity,
        Bernoulli => link.is_bounded(),
        Poisson => matches!(link, Link::Log | Link::Sqrt),
        Gamma | InverseGaussian | NegativeBinomial => link == Link::Log,
    }
}
