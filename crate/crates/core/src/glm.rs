//! Maximum-likelihood fitting of GLMs with known dispersion by iteratively
//! reweighted least squares (Fisher scoring), plus the score, Fisher
//! information and generalized hat matrix at a given coefficient vector.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::family::{validate_pair, Family, FamilyError, FamilyKind, Link};

/// Reciprocal condition number below which `XᵀWX` is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("response value {value} at row {row} is not admissible for the {family} family")]
    InvalidResponse {
        row: usize,
        value: f64,
        family: FamilyKind,
    },
    #[error("{family}/{link} is not a supported family/link pair")]
    InvalidPair { family: FamilyKind, link: Link },
    #[error("information matrix XᵀWX is numerically singular (rcond {rcond:.3e})")]
    SingularInformation { rcond: f64 },
    #[error("iterate left the mean domain and step-halving did not recover")]
    DomainEscape,
    #[error("IRLS did not converge in {iterations} iterations (score norm {score_norm:.3e})")]
    NonConvergence { iterations: usize, score_norm: f64 },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// Design matrix (intercept column supplied by the caller) and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self, FitError> {
        let (n, d) = design.shape();
        if response.len() != n {
            return Err(FitError::InvalidDataset(format!(
                "design has {n} rows but response has {} entries",
                response.len()
            )));
        }
        if d == 0 {
            return Err(FitError::InvalidDataset("design has no columns".into()));
        }
        if n <= d {
            return Err(FitError::InvalidDataset(format!(
                "need more rows than parameters (n = {n}, d = {d})"
            )));
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidDataset("non-finite entry".into()));
        }
        Ok(Dataset { design, response })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn d(&self) -> usize {
        self.design.ncols()
    }

    /// Same design, new response (used by parametric bootstraps).
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self, FitError> {
        Dataset::new(self.design.clone(), response)
    }

    pub fn check_responses(&self, family: &Family) -> Result<(), FitError> {
        match self
            .response
            .iter()
            .enumerate()
            .find(|(_, &y)| !family.valid_response(y))
        {
            Some((row, &value)) => Err(FitError::InvalidResponse {
                row,
                value,
                family: family.kind,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on ‖score‖∞.
    pub tol: f64,
    pub initial_beta: Option<DVector<f64>>,
    /// Starting fitted values, e.g. from a previously fitted model.
    pub initial_mu: Option<Vec<f64>>,
    pub allow_invalid_pair: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            tol: 1e-8,
            initial_beta: None,
            initial_mu: None,
            allow_invalid_pair: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedModel {
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub family: Family,
    pub link: Link,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    pub log_likelihood: f64,
}

impl FittedModel {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// `v(μ̂ᵢ)` with the mean floor applied.
    pub fn variances(&self) -> Result<Vec<f64>, FamilyError> {
        self.mu
            .iter()
            .map(|&m| self.family.variance(self.family.floor_mean(m)))
            .collect()
    }

    /// `m′(η̂ᵢ)`.
    pub fn mean_derivs(&self) -> Vec<f64> {
        self.eta
            .iter()
            .map(|&u| self.link.inverse_deriv(u))
            .collect()
    }

    pub fn residuals(&self, data: &Dataset) -> Vec<f64> {
        data.response()
            .iter()
            .zip(&self.mu)
            .map(|(y, m)| y - m)
            .collect()
    }

    pub fn ensure_converged(&self) -> Result<&Self, FitError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FitError::NonConvergence {
                iterations: self.iterations,
                score_norm: self.score_norm,
            })
        }
    }
}

/// Per-observation quantities at a coefficient vector.
struct Working {
    eta: DVector<f64>,
    mu: DVector<f64>,
    deriv: DVector<f64>,
    var: DVector<f64>,
}

impl Working {
    fn at_eta(eta: DVector<f64>, family: &Family, link: Link) -> Result<Self, FamilyError> {
        let n = eta.len();
        let mut mu = DVector::zeros(n);
        let mut deriv = DVector::zeros(n);
        let mut var = DVector::zeros(n);
        for i in 0..n {
            let m = family.floor_mean(link.inverse(eta[i]));
            var[i] = family.variance(m)?;
            mu[i] = m;
            deriv[i] = link.inverse_deriv(eta[i]);
        }
        Ok(Working {
            eta,
            mu,
            deriv,
            var,
        })
    }

    fn at_beta(
        data: &Dataset,
        beta: &DVector<f64>,
        family: &Family,
        link: Link,
    ) -> Result<Self, FamilyError> {
        Working::at_eta(data.design() * beta, family, link)
    }

    /// Σᵢ xᵢ m′ᵢ (yᵢ − μᵢ)/vᵢ
    fn score(&self, data: &Dataset) -> DVector<f64> {
        let r = DVector::from_fn(self.mu.len(), |i, _| {
            self.deriv[i] * (data.response()[i] - self.mu[i]) / self.var[i]
        });
        data.design().tr_mul(&r)
    }

    fn weights(&self) -> DVector<f64> {
        DVector::from_fn(self.mu.len(), |i, _| {
            self.deriv[i] * self.deriv[i] / self.var[i]
        })
    }

    fn log_likelihood(&self, data: &Dataset, family: &Family) -> Result<f64, FamilyError> {
        let mut ll = 0.0;
        for (y, m) in data.response().iter().zip(self.mu.iter()) {
            ll += family.log_likelihood_term(*y, *m)?;
        }
        Ok(ll)
    }
}

/// `XᵀWX` for diagonal weights.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    x.tr_mul(&xw)
}

/// Cholesky factor of a symmetric positive definite information matrix,
/// rejecting it when its reciprocal condition number is below
/// [`SINGULAR_RCOND`].
pub(crate) fn checked_cholesky(
    m: &DMatrix<f64>,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, FitError> {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { (min / max).max(0.0) } else { 0.0 };
    if !(rcond >= SINGULAR_RCOND) {
        return Err(FitError::SingularInformation { rcond });
    }
    nalgebra::Cholesky::new(m.clone()).ok_or(FitError::SingularInformation { rcond })
}

fn initial_mean(family: &Family, y: f64) -> f64 {
    match family.kind {
        FamilyKind::Normal => y,
        FamilyKind::Bernoulli => (y + 0.5) / 2.0,
        _ => y.max(0.1),
    }
}

/// Fit by Fisher scoring with step-halving on the log-likelihood.
///
/// A fit that exhausts `max_iter` is returned with `converged = false`.
pub fn fit_irls(
    data: &Dataset,
    family: &Family,
    link: Link,
    options: &FitOptions,
) -> Result<FittedModel, FitError> {
    if !options.allow_invalid_pair && !validate_pair(family, link) {
        return Err(FitError::InvalidPair {
            family: family.kind,
            link,
        });
    }
    data.check_responses(family)?;
    let x = data.design();
    let y = data.response();
    let n = data.n();

    let (mut beta, mut work) = match &options.initial_beta {
        Some(b) => {
            if b.len() != data.d() {
                return Err(FitError::InvalidDataset(format!(
                    "initial beta has length {} but design has {} columns",
                    b.len(),
                    data.d()
                )));
            }
            let work =
                Working::at_beta(data, b, family, link).map_err(|_| FitError::DomainEscape)?;
            (b.clone(), work)
        }
        None => {
            // One weighted least-squares pass from starting means.
            let mu0: Vec<f64> = match &options.initial_mu {
                Some(m) if m.len() == n => m.clone(),
                Some(m) => {
                    return Err(FitError::InvalidDataset(format!(
                        "initial mu has length {} but n = {n}",
                        m.len()
                    )))
                }
                None => y.iter().map(|&yi| initial_mean(family, yi)).collect(),
            };
            let eta0 = DVector::from_fn(n, |i, _| link.link(mu0[i]));
            let mut w = DVector::zeros(n);
            let mut z = DVector::zeros(n);
            for i in 0..n {
                let m = family.floor_mean(mu0[i]);
                let d = link.inverse_deriv(eta0[i]);
                let v = family.variance(m).map_err(|_| FitError::DomainEscape)?;
                w[i] = d * d / v;
                z[i] = eta0[i] + (y[i] - m) / d;
            }
            if w.iter().chain(z.iter()).any(|v| !v.is_finite()) {
                return Err(FitError::DomainEscape);
            }
            let gram = weighted_gram(x, &w);
            let chol = checked_cholesky(&gram)?;
            let rhs = x.tr_mul(&z.component_mul(&w));
            let b = chol.solve(&rhs);
            let work =
                Working::at_beta(data, &b, family, link).map_err(|_| FitError::DomainEscape)?;
            (b, work)
        }
    };

    let mut ll = work.log_likelihood(data, family)?;
    let mut score = work.score(data);
    let mut score_norm = score.amax();
    let mut iterations = 0;
    let mut converged = score_norm <= options.tol;

    while !converged && iterations < options.max_iter {
        iterations += 1;
        let info = weighted_gram(x, &work.weights());
        let delta = checked_cholesky(&info)?.solve(&score);

        let slack = 1e-12 * (1.0 + ll.abs());
        let mut step = 1.0;
        let mut accepted = None;
        let mut saw_domain_ok = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &delta * step;
            if let Ok(w) = Working::at_beta(data, &trial, family, link) {
                saw_domain_ok = true;
                if let Ok(trial_ll) = w.log_likelihood(data, family) {
                    if trial_ll.is_finite() && trial_ll >= ll - slack {
                        accepted = Some((trial, w, trial_ll));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((b, w, l)) => {
                beta = b;
                work = w;
                ll = l;
            }
            None if !saw_domain_ok => return Err(FitError::DomainEscape),
            // No ascent possible: numerically at the optimum.
            None => break,
        }
        score = work.score(data);
        score_norm = score.amax();
        converged = score_norm <= options.tol;
    }

    Ok(FittedModel {
        beta: beta.iter().copied().collect(),
        eta: work.eta.iter().copied().collect(),
        mu: work.mu.iter().copied().collect(),
        family: *family,
        link,
        converged,
        iterations,
        score_norm,
        log_likelihood: ll,
    })
}

pub fn log_likelihood(
    data: &Dataset,
    beta: &DVector<f64>,
    family: &Family,
    link: Link,
) -> Result<f64, FitError> {
    let work = Working::at_beta(data, beta, family, link)?;
    Ok(work.log_likelihood(data, family)?)
}

/// `Σᵢ xᵢ m′(βᵀxᵢ)(yᵢ − μᵢ)/v(μᵢ)`.
pub fn score(
    data: &Dataset,
    beta: &DVector<f64>,
    family: &Family,
    link: Link,
) -> Result<DVector<f64>, FitError> {
    Ok(Working::at_beta(data, beta, family, link)?.score(data))
}

/// `(1/n) XᵀWX` with `W = diag(m′(βᵀxᵢ)²/v(μᵢ))`.
pub fn fisher_information(
    data: &Dataset,
    beta: &DVector<f64>,
    family: &Family,
    link: Link,
) -> Result<DMatrix<f64>, FitError> {
    let work = Working::at_beta(data, beta, family, link)?;
    Ok(weighted_gram(data.design(), &work.weights()) / data.n() as f64)
}

/// Generalized hat matrix `W^{1/2} X (XᵀWX)⁻¹ Xᵀ W^{1/2}` with the signed
/// square root `W^{1/2} = diag(m′ᵢ/σᵢ)`. Materializes an `n x n` matrix.
pub fn hat_matrix(data: &Dataset, model: &FittedModel) -> Result<DMatrix<f64>, FitError> {
    let var = model.variances()?;
    let deriv = model.mean_derivs();
    let w_half = DVector::from_fn(data.n(), |i, _| deriv[i] / var[i].sqrt());
    let w = w_half.component_mul(&w_half);
    let chol = checked_cholesky(&weighted_gram(data.design(), &w))?;
    let mut wx = data.design().clone();
    for (mut row, &s) in wx.row_iter_mut().zip(w_half.iter()) {
        row *= s;
    }
    let solved = chol.solve(&wx.transpose());
    Ok(&wx * solved)
}
