//! Grouped-residual goodness-of-fit statistics: classic Hosmer-Lemeshow,
//! its naive transplant to other families, the generalized HL test with the
//! full between-group covariance, and the Su-Wei cumulative residual test.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, FamilyKind};
use crate::glm::{
    checked_cholesky, fit_irls, weighted_gram, Dataset, FitError, FitOptions, FittedModel,
};
use crate::grouping::{group_summaries, tie_fraction, GroupRow, GroupSpec, GroupingError};
use crate::numerics::{chi_sq_sf, pseudoinverse, RankRule};
use crate::sampling::{sample_response, stream};

/// Share of tied linear predictors above which a warning is attached.
const TIE_WARNING_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum GofError {
    #[error("{method} requires the bernoulli family, got {family}")]
    UnsupportedFamily { method: Method, family: FamilyKind },
    #[error("group {group} is degenerate ({reason})")]
    DegenerateGroup { group: usize, reason: String },
    #[error("Σₙ has rank 0")]
    DegenerateRank,
    #[error("{method} needs at least {min} groups, got {got}")]
    TooFewGroups {
        method: Method,
        got: usize,
        min: usize,
    },
    #[error("model did not converge")]
    NotConverged,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HlClassic,
    NaiveGhl,
    Ghl,
    Sw,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::HlClassic => "hl_classic",
            Method::NaiveGhl => "naive_ghl",
            Method::Ghl => "ghl",
            Method::Sw => "sw",
        }
    }

    /// Whether the statistic is computed from a grouping.
    pub fn is_grouped(self) -> bool {
        !matches!(self, Method::Sw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = GofError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "hl" | "hl_classic" | "hl-classic" => Method::HlClassic,
            "naive" | "naive_ghl" | "naive-ghl" => Method::NaiveGhl,
            "ghl" => Method::Ghl,
            "sw" | "su-wei" => Method::Sw,
            other => return Err(GofError::InvalidArgument(format!("unknown test `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PValueMethod {
    ChiSquared,
    /// Refit-based parametric bootstrap under the fitted null model, used
    /// in place of the original Su-Wei simulation scheme.
    ParametricBootstrap {
        replicates: usize,
        successful: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub df: Option<usize>,
    pub p_value: f64,
    pub p_value_method: PValueMethod,
    pub rank_used: Option<usize>,
    pub groups: Vec<GroupRow>,
    pub warnings: Vec<String>,
}

/// `S¹ₙ`, with `s_g = n^{-1/2} Σ_{i∈g} (yᵢ − μ̂ᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGroupVector {
    pub s: Vec<f64>,
}

impl ResidualGroupVector {
    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.s)
    }
}

pub fn residual_group_vector(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> ResidualGroupVector {
    let mut s = vec![0.0; spec.groups()];
    for (i, &g) in spec.assignment.iter().enumerate() {
        s[g] += data.response()[i] - model.mu[i];
    }
    let root_n = (model.n() as f64).sqrt();
    s.iter_mut().for_each(|v| *v /= root_n);
    ResidualGroupVector { s }
}

fn require_groups(method: Method, spec: &GroupSpec, min: usize) -> Result<(), GofError> {
    if spec.groups() < min {
        return Err(GofError::TooFewGroups {
            method,
            got: spec.groups(),
            min,
        });
    }
    Ok(())
}

fn require_converged(model: &FittedModel) -> Result<(), GofError> {
    if model.converged {
        Ok(())
    } else {
        Err(GofError::NotConverged)
    }
}

fn tie_warnings(model: &FittedModel) -> Vec<String> {
    let frac = tie_fraction(&model.eta);
    if frac > TIE_WARNING_FRACTION {
        vec![format!(
            "{:.0}% of linear predictors are tied; group endpoints may sit on atoms of the predictor distribution",
            100.0 * frac
        )]
    } else {
        Vec::new()
    }
}

/// Classic Hosmer-Lemeshow `Ĉ_G = Σ (O_g − E_g)² / (n_g π̄_g (1 − π̄_g))`
/// on `G − 2` degrees of freedom.
pub fn hl_classic(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> Result<TestResult, GofError> {
    if model.family.kind != FamilyKind::Bernoulli {
        return Err(GofError::UnsupportedFamily {
            method: Method::HlClassic,
            family: model.family.kind,
        });
    }
    require_groups(Method::HlClassic, spec, 3)?;
    let rows = group_summaries(model, data, spec)?;
    let mut statistic = 0.0;
    for row in &rows {
        let p = row.mean_fitted;
        let denom = row.n as f64 * p * (1.0 - p);
        if !(denom > 0.0) {
            return Err(GofError::DegenerateGroup {
                group: row.group,
                reason: format!("mean fitted probability {p}"),
            });
        }
        statistic += (row.observed - row.expected).powi(2) / denom;
    }
    let df = spec.groups() - 2;
    Ok(TestResult {
        method: Method::HlClassic,
        statistic,
        df: Some(df),
        p_value: chi_sq_sf(statistic, df),
        p_value_method: PValueMethod::ChiSquared,
        rank_used: None,
        groups: rows,
        warnings: tie_warnings(model),
    })
}

/// Naive generalization: `Σ (O_g − E_g)² / V_g` on `G − 2` degrees of
/// freedom, with `V_g` the summed fitted variance of group `g`.
pub fn naive_ghl(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> Result<TestResult, GofError> {
    require_groups(Method::NaiveGhl, spec, 3)?;
    let rows = group_summaries(model, data, spec)?;
    let mut statistic = 0.0;
    for row in &rows {
        if !(row.variance_sum > 0.0) {
            return Err(GofError::DegenerateGroup {
                group: row.group,
                reason: "zero summed variance".into(),
            });
        }
        statistic += (row.observed - row.expected).powi(2) / row.variance_sum;
    }
    let df = spec.groups() - 2;
    Ok(TestResult {
        method: Method::NaiveGhl,
        statistic,
        df: Some(df),
        p_value: chi_sq_sf(statistic, df),
        p_value_method: PValueMethod::ChiSquared,
        rank_used: None,
        groups: rows,
        warnings: tie_warnings(model),
    })
}

/// `Σₙ = (1/n) G*ₙ V*ₙ^{1/2} (Iₙ − Hₙ) V*ₙ^{1/2} G*ₙᵀ`.
///
/// Evaluated as `(1/n)(diag(V_g) − A (XᵀWX)⁻¹ Aᵀ)` where row `g` of `A` is
/// `Σ_{i∈g} m′ᵢ xᵢᵀ`; since `V^{1/2} W^{1/2} = diag(m′)`, this is the same
/// matrix without any `n x n` intermediate.
pub fn sigma_n(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> Result<DMatrix<f64>, GofError> {
    let n = data.n();
    let d = data.d();
    let groups = spec.groups();
    let var = model.variances()?;
    let deriv = model.mean_derivs();
    let x = data.design();

    let mut a = DMatrix::zeros(groups, d);
    let mut v_sums = vec![0.0; groups];
    for (i, &g) in spec.assignment.iter().enumerate() {
        v_sums[g] += var[i];
        for j in 0..d {
            a[(g, j)] += deriv[i] * x[(i, j)];
        }
    }
    let w = DVector::from_fn(n, |i, _| deriv[i] * deriv[i] / var[i]);
    let chol = checked_cholesky(&weighted_gram(x, &w))?;
    // C = L⁻¹ Aᵀ so that A (LLᵀ)⁻¹ Aᵀ = CᵀC.
    let mut c = a.transpose();
    chol.l().solve_lower_triangular_mut(&mut c);
    let mut sigma = -c.tr_mul(&c);
    for g in 0..groups {
        sigma[(g, g)] += v_sums[g];
    }
    Ok(sigma / n as f64)
}

/// Generalized HL statistic `S¹ₙᵀ Σₙ⁺ S¹ₙ` with `rank(Σₙ)` degrees of
/// freedom, using the default rank rule.
pub fn ghl_test(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> Result<TestResult, GofError> {
    ghl_test_with_rule(model, data, spec, RankRule::default_for(spec.groups()))
}

pub fn ghl_test_with_rule(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
    rule: RankRule,
) -> Result<TestResult, GofError> {
    require_converged(model)?;
    require_groups(Method::Ghl, spec, 2)?;
    let s = residual_group_vector(model, data, spec).as_dvector();
    let sigma = sigma_n(model, data, spec)?;
    let pinv = pseudoinverse(&sigma, rule);
    if pinv.rank == 0 {
        return Err(GofError::DegenerateRank);
    }
    let statistic = s.dot(&(&pinv.pinv * &s)).max(0.0);
    let df = pinv.rank;
    let mut warnings = tie_warnings(model);
    if df != spec.groups() - 1 {
        warnings.push(format!(
            "rank(Σₙ) = {df}, expected G - 1 = {}",
            spec.groups() - 1
        ));
    }
    Ok(TestResult {
        method: Method::Ghl,
        statistic,
        df: Some(df),
        p_value: chi_sq_sf(statistic, df),
        p_value_method: PValueMethod::ChiSquared,
        rank_used: Some(df),
        groups: group_summaries(model, data, spec)?,
        warnings,
    })
}

/// Columns of the design that are not constant.
fn varying_columns(x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| {
            let c = x.column(j);
            c.iter().any(|&v| v != c[0])
        })
        .collect()
}

/// Maximum |cumulative sum| over tie blocks of `key`.
fn max_prefix_1d(key: &[f64], resid: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    let mut best: f64 = 0.0;
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let k = key[order[i]];
        while i < order.len() && key[order[i]] == k {
            cum += resid[order[i]];
            i += 1;
        }
        best = best.max(cum.abs());
    }
    best
}

/// Exact supremum over every corner `(a, b)` built from observed
/// coordinates, in `O(n · distinct(b))`.
fn max_corner_2d(first: &[f64], second: &[f64], resid: &[f64]) -> f64 {
    let mut levels: Vec<f64> = second.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank: Vec<usize> = second
        .iter()
        .map(|v| levels.partition_point(|l| l < v))
        .collect();
    let mut order: Vec<usize> = (0..first.len()).collect();
    order.sort_by(|&a, &b| first[a].total_cmp(&first[b]));
    let mut bucket = vec![0.0; levels.len()];
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let a = first[order[i]];
        while i < order.len() && first[order[i]] == a {
            bucket[rank[order[i]]] += resid[order[i]];
            i += 1;
        }
        let mut cum = 0.0;
        for &b in &bucket {
            cum += b;
            best = best.max(cum.abs());
        }
    }
    best
}

/// Su-Wei statistic `sup_u |n^{-1/2} Σ 1(xᵢ ≤ u)(yᵢ − μ̂ᵢ)|`.
///
/// Constant design columns never affect the indicator. With at most two
/// varying columns the supremum is exact (every corner of observed
/// coordinates is visited); with more, `u` ranges over the observed
/// covariate vectors only.
pub fn sw_statistic(model: &FittedModel, data: &Dataset) -> f64 {
    let resid = model.residuals(data);
    let x = data.design();
    let cols = varying_columns(x);
    let n = data.n();
    let sup = match cols.len() {
        0 => resid.iter().sum::<f64>().abs(),
        1 => {
            let key: Vec<f64> = x.column(cols[0]).iter().copied().collect();
            max_prefix_1d(&key, &resid)
        }
        2 => {
            let a: Vec<f64> = x.column(cols[0]).iter().copied().collect();
            let b: Vec<f64> = x.column(cols[1]).iter().copied().collect();
            max_corner_2d(&a, &b, &resid)
        }
        _ => (0..n)
            .map(|j| {
                (0..n)
                    .filter(|&i| cols.iter().all(|&c| x[(i, c)] <= x[(j, c)]))
                    .map(|i| resid[i])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max),
    };
    sup / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct SwOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SwOptions {
    fn default() -> Self {
        SwOptions {
            replicates: 200,
            seed: 0,
        }
    }
}

pub const SW_MIN_REPLICATES: usize = 100;

/// Su-Wei test with a parametric bootstrap p-value: responses are redrawn
/// from the fitted model, the model is refitted and the statistic
/// recomputed. `p = (r + 1)/(B + 1)` over the successful refits.
pub fn sw_test(
    model: &FittedModel,
    data: &Dataset,
    options: &SwOptions,
) -> Result<TestResult, GofError> {
    require_converged(model)?;
    if options.replicates < SW_MIN_REPLICATES {
        return Err(GofError::InvalidArgument(format!(
            "SW needs at least {SW_MIN_REPLICATES} bootstrap replicates, got {}",
            options.replicates
        )));
    }
    let observed = sw_statistic(model, data);
    let fit_options = FitOptions {
        initial_beta: Some(DVector::from_column_slice(&model.beta)),
        allow_invalid_pair: true,
        ..FitOptions::default()
    };
    let replicated: Vec<Option<f64>> = (0..options.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(options.seed, b as u64);
            let y: Vec<f64> = model
                .mu
                .iter()
                .map(|&m| sample_response(&model.family, m, &mut rng))
                .collect();
            let boot = data.with_response(DVector::from_vec(y)).ok()?;
            let fit = fit_irls(&boot, &model.family, model.link, &fit_options).ok()?;
            fit.converged.then(|| sw_statistic(&fit, &boot))
        })
        .collect();
    let successful: Vec<f64> = replicated.into_iter().flatten().collect();
    let failures = options.replicates - successful.len();
    if successful.is_empty() {
        return Err(GofError::InvalidArgument(
            "every bootstrap refit failed".into(),
        ));
    }
    let exceed = successful.iter().filter(|&&t| t >= observed).count();
    let p_value = (exceed + 1) as f64 / (successful.len() + 1) as f64;
    let mut warnings = Vec::new();
    if failures > 0 {
        warnings.push(format!(
            "{failures} bootstrap refits failed and were skipped"
        ));
    }
    if varying_columns(data.design()).len() > 2 {
        warnings.push("supremum evaluated at observed covariate vectors only".into());
    }
    Ok(TestResult {
        method: Method::Sw,
        statistic: observed,
        df: None,
        p_value,
        p_value_method: PValueMethod::ParametricBootstrap {
            replicates: options.replicates,
            successful: successful.len(),
        },
        rank_used: None,
        groups: Vec::new(),
        warnings,
    })
}

/// Poisson-specific `ψₙ(x₀) = (1/n) Σ 1(η̂ᵢ ≤ x₀) μ̂ᵢ`, with `x₀` the
/// inverse-CDF `p`-quantile of the fitted linear predictors (`p = 0` gives
/// `x₀ = -∞`).
pub fn sz_psi(model: &FittedModel, p: f64) -> Result<f64, GofError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GofError::InvalidArgument(format!(
            "percentile {p} outside [0, 1]"
        )));
    }
    let n = model.n();
    if p == 0.0 || n == 0 {
        return Ok(0.0);
    }
    let mut sorted = model.eta.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    let x0 = sorted[idx];
    let total: f64 = model
        .eta
        .iter()
        .zip(&model.mu)
        .filter(|(e, _)| **e <= x0)
        .map(|(_, m)| m)
        .sum();
    Ok(total / n as f64)
}

/// Run one grouped test (or SW) by name.
pub fn run_test(
    method: Method,
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
    sw: &SwOptions,
) -> Result<TestResult, GofError> {
    match method {
        Method::HlClassic => hl_classic(model, data, spec),
        Method::NaiveGhl => naive_ghl(model, data, spec),
        Method::Ghl => ghl_test(model, data, spec),
        Method::Sw => sw_test(model, data, sw),
    }
}
