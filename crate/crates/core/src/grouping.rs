//! Partitioning observations into G groups by their linear predictor.
//!
//! Group `g` holds the observations with `k_{g-1} < η ≤ k_g`, with
//! `k_0 = -∞` and `k_G = +∞`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::FamilyError;
use crate::glm::{Dataset, FittedModel};
use crate::numerics::weighted_quantile;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("need at least {min} groups, got {got}")]
    TooFewGroups { got: usize, min: usize },
    #[error("cannot form {groups} groups from {n} observations")]
    TooFewObservations { groups: usize, n: usize },
    #[error("infeasible grouping: {0}")]
    InfeasibleGrouping(String),
    #[error("fixed endpoints must be finite and strictly increasing")]
    InvalidEndpoints,
    #[error("unknown grouping method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMethod {
    VarianceWeighted,
    EqualCount,
    Fixed(Vec<f64>),
}

impl fmt::Display for GroupingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupingMethod::VarianceWeighted => f.write_str("variance-weighted"),
            GroupingMethod::EqualCount => f.write_str("equal-count"),
            GroupingMethod::Fixed(k) => {
                let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(f, "fixed:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for GroupingMethod {
    type Err = GroupingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "variance-weighted" | "variance_weighted" => Ok(GroupingMethod::VarianceWeighted),
            "equal-count" | "equal_count" => Ok(GroupingMethod::EqualCount),
            _ => {
                let list = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| GroupingError::UnknownMethod(s.to_string()))?;
                let values = list
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| GroupingError::InvalidEndpoints)?;
                Ok(GroupingMethod::Fixed(values))
            }
        }
    }
}

/// A partition of the observations into `G` nonempty groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    /// `G + 1` strictly increasing endpoints, `-∞` first and `+∞` last.
    pub endpoints: Vec<f64>,
    /// Zero-based group of each observation.
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
    pub method: GroupingMethod,
}

impl GroupSpec {
    pub fn groups(&self) -> usize {
        self.counts.len()
    }

    pub fn interior_endpoints(&self) -> &[f64] {
        &self.endpoints[1..self.endpoints.len() - 1]
    }

    /// The `G x n` 0/1 matrix `G*ₙ`.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.groups(), self.assignment.len());
        for (i, &g) in self.assignment.iter().enumerate() {
            m[(g, i)] = 1.0;
        }
        m
    }

    fn from_interior(
        eta: &[f64],
        interior: Vec<f64>,
        method: GroupingMethod,
    ) -> Result<Self, GroupingError> {
        let assignment = assign(eta, &interior);
        let mut counts = vec![0; interior.len() + 1];
        for &g in &assignment {
            counts[g] += 1;
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(GroupingError::InfeasibleGrouping(format!(
                "group {} is empty",
                g + 1
            )));
        }
        let mut endpoints = Vec::with_capacity(interior.len() + 2);
        endpoints.push(f64::NEG_INFINITY);
        endpoints.extend(interior);
        endpoints.push(f64::INFINITY);
        Ok(GroupSpec {
            endpoints,
            assignment,
            counts,
            method,
        })
    }
}

fn assign(eta: &[f64], interior: &[f64]) -> Vec<usize> {
    // Number of interior endpoints strictly below η: right-closed intervals.
    eta.iter()
        .map(|&e| interior.partition_point(|&k| k < e))
        .collect()
}

/// `G x n` indicator matrix for `(G + 1)` endpoints including the infinite
/// extremes.
pub fn group_indicators(eta: &[f64], endpoints: &[f64]) -> DMatrix<f64> {
    assert!(endpoints.len() >= 2, "need at least two endpoints");
    assert!(
        endpoints.windows(2).all(|w| w[0] < w[1]),
        "endpoints must increase"
    );
    let interior = &endpoints[1..endpoints.len() - 1];
    let groups = endpoints.len() - 1;
    let mut m = DMatrix::zeros(groups, eta.len());
    for (i, g) in assign(eta, interior).into_iter().enumerate() {
        m[(g, i)] = 1.0;
    }
    m
}

/// Sequential weighted-quantile endpoints.
///
/// With `r` groups still to form, the weighted `(r-1)/r` quantile of the
/// remaining linear predictors becomes the next endpoint and every
/// observation above it forms the top group; the rest carry on. When the
/// quantile lands on the largest remaining value the endpoint drops to the
/// next smaller distinct value so the top group is never empty. It is raised
/// when too few distinct values would be left below it for the groups still
/// to form.
pub fn sequential_endpoints(
    eta: &[f64],
    weights: &[f64],
    groups: usize,
) -> Result<Vec<f64>, GroupingError> {
    if groups < 2 {
        return Err(GroupingError::TooFewGroups {
            got: groups,
            min: 2,
        });
    }
    let n = eta.len();
    if n < groups {
        return Err(GroupingError::TooFewObservations { groups, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eta[a].total_cmp(&eta[b]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eta[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();

    let mut upper = n;
    let mut interior = Vec::with_capacity(groups - 1);
    for remaining in (2..=groups).rev() {
        let p = (remaining - 1) as f64 / remaining as f64;
        let mut q = weighted_quantile(&values[..upper], &w[..upper], p)
            .map_err(|e| GroupingError::InfeasibleGrouping(e.to_string()))?;
        if q >= values[upper - 1] {
            let below = values[..upper].partition_point(|&v| v < q);
            if below == 0 {
                return Err(GroupingError::InfeasibleGrouping(format!(
                    "tied linear predictors leave no room for {remaining} groups"
                )));
            }
            q = values[below - 1];
        }
        // Leave at least `remaining - 1` distinct values for the lower groups.
        let mut distinct = values[..upper].to_vec();
        distinct.dedup();
        if distinct.len() < remaining {
            return Err(GroupingError::InfeasibleGrouping(format!(
                "only {} distinct linear predictors left for {remaining} groups",
                distinct.len()
            )));
        }
        q = q.max(distinct[remaining - 2]);
        upper = values[..upper].partition_point(|&v| v <= q);
        interior.push(q);
    }
    interior.reverse();
    Ok(interior)
}

/// Groups with roughly equal summed variance `Σ v(μ̂ᵢ)`.
pub fn variance_weighted_endpoints(
    model: &FittedModel,
    groups: usize,
) -> Result<GroupSpec, GroupingError> {
    let weights = model.variances()?;
    let interior = sequential_endpoints(&model.eta, &weights, groups)?;
    GroupSpec::from_interior(&model.eta, interior, GroupingMethod::VarianceWeighted)
}

/// Deciles-of-risk style groups with roughly equal counts.
pub fn equal_count_endpoints(
    model: &FittedModel,
    groups: usize,
) -> Result<GroupSpec, GroupingError> {
    let weights = vec![1.0; model.eta.len()];
    let interior = sequential_endpoints(&model.eta, &weights, groups)?;
    GroupSpec::from_interior(&model.eta, interior, GroupingMethod::EqualCount)
}

pub fn fixed_endpoints(model: &FittedModel, interior: &[f64]) -> Result<GroupSpec, GroupingError> {
    if interior.iter().any(|k| !k.is_finite()) || interior.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GroupingError::InvalidEndpoints);
    }
    GroupSpec::from_interior(
        &model.eta,
        interior.to_vec(),
        GroupingMethod::Fixed(interior.to_vec()),
    )
}

/// Dispatch on a [`GroupingMethod`]. `groups` is ignored for fixed
/// endpoints.
pub fn make_groups(
    model: &FittedModel,
    method: &GroupingMethod,
    groups: usize,
) -> Result<GroupSpec, GroupingError> {
    match method {
        GroupingMethod::VarianceWeighted => variance_weighted_endpoints(model, groups),
        GroupingMethod::EqualCount => equal_count_endpoints(model, groups),
        GroupingMethod::Fixed(k) => fixed_endpoints(model, k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: usize,
    pub n: usize,
    /// `O_g`
    pub observed: f64,
    /// `E_g`
    pub expected: f64,
    /// `E_g / n_g`
    pub mean_fitted: f64,
    /// `V_g = Σ v(μ̂ᵢ)`
    pub variance_sum: f64,
}

pub fn group_summaries(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> Result<Vec<GroupRow>, GroupingError> {
    let var = model.variances()?;
    let mut rows: Vec<GroupRow> = (0..spec.groups())
        .map(|g| GroupRow {
            group: g + 1,
            n: 0,
            observed: 0.0,
            expected: 0.0,
            mean_fitted: 0.0,
            variance_sum: 0.0,
        })
        .collect();
    for (i, &g) in spec.assignment.iter().enumerate() {
        let row = &mut rows[g];
        row.n += 1;
        row.observed += data.response()[i];
        row.expected += model.mu[i];
        row.variance_sum += var[i];
    }
    for row in &mut rows {
        row.mean_fitted = if row.n > 0 {
            row.expected / row.n as f64
        } else {
            0.0
        };
    }
    Ok(rows)
}

/// Fraction of observations whose linear predictor equals another one's.
pub fn tie_fraction(eta: &[f64]) -> f64 {
    if eta.is_empty() {
        return 0.0;
    }
    let mut sorted = eta.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tied = (0..sorted.len())
        .filter(|&i| {
            (i > 0 && sorted[i - 1] == sorted[i])
                || (i + 1 < sorted.len() && sorted[i + 1] == sorted[i])
        })
        .count();
    tied as f64 / sorted.len() as f64
}
