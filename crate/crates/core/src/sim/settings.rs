//! Named simulation settings and their data generators.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::family::{Family, Link};
use crate::glm::Dataset;
use crate::sampling::sample_response;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingId {
    #[serde(rename = "null_1")]
    Null1,
    #[serde(rename = "null_2")]
    Null2,
    #[serde(rename = "null_3")]
    Null3,
    #[serde(rename = "null_4")]
    Null4,
    #[serde(rename = "null_5")]
    Null5,
    #[serde(rename = "null_6")]
    Null6,
    #[serde(rename = "null_1b")]
    Null1b,
    #[serde(rename = "null_2b")]
    Null2b,
    #[serde(rename = "null_3b")]
    Null3b,
    #[serde(rename = "power_1")]
    Power1,
    #[serde(rename = "power_2")]
    Power2,
    #[serde(rename = "power_3")]
    Power3,
    #[serde(rename = "power_4_sqrt")]
    Power4Sqrt,
    #[serde(rename = "power_4_identity")]
    Power4Identity,
    LargeModel,
}

impl SettingId {
    pub const ALL: [SettingId; 15] = [
        SettingId::Null1,
        SettingId::Null2,
        SettingId::Null3,
        SettingId::Null4,
        SettingId::Null5,
        SettingId::Null6,
        SettingId::Null1b,
        SettingId::Null2b,
        SettingId::Null3b,
        SettingId::Power1,
        SettingId::Power2,
        SettingId::Power3,
        SettingId::Power4Sqrt,
        SettingId::Power4Identity,
        SettingId::LargeModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SettingId::Null1 => "null_1",
            SettingId::Null2 => "null_2",
            SettingId::Null3 => "null_3",
            SettingId::Null4 => "null_4",
            SettingId::Null5 => "null_5",
            SettingId::Null6 => "null_6",
            SettingId::Null1b => "null_1b",
            SettingId::Null2b => "null_2b",
            SettingId::Null3b => "null_3b",
            SettingId::Power1 => "power_1",
            SettingId::Power2 => "power_2",
            SettingId::Power3 => "power_3",
            SettingId::Power4Sqrt => "power_4_sqrt",
            SettingId::Power4Identity => "power_4_identity",
            SettingId::LargeModel => "large_model",
        }
    }

    pub fn is_null(self) -> bool {
        matches!(
            self,
            SettingId::Null1
                | SettingId::Null2
                | SettingId::Null3
                | SettingId::Null4
                | SettingId::Null5
                | SettingId::Null6
                | SettingId::Null1b
                | SettingId::Null2b
                | SettingId::Null3b
        )
    }

    pub fn is_power(self) -> bool {
        matches!(
            self,
            SettingId::Power1
                | SettingId::Power2
                | SettingId::Power3
                | SettingId::Power4Sqrt
                | SettingId::Power4Identity
        )
    }

    /// Deviation grid for power settings indexed by `J`.
    pub fn j_grid(self) -> Option<&'static [f64]> {
        match self {
            SettingId::Power1 => Some(&[4.0, 6.0, 8.0, 10.0]),
            SettingId::Power2 => Some(&[1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5]),
            SettingId::Power3 => Some(&[8.0, 12.0, 16.0, 20.0]),
            _ => None,
        }
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SettingId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        SettingId::ALL
            .into_iter()
            .find(|id| id.name() == key)
            .ok_or_else(|| SimError::UnknownSetting(s.to_string()))
    }
}

/// How covariates are drawn for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum CovariateLaw {
    /// `X ~ U(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `X ~ U(lo, hi)` and independent `B ~ Bernoulli(p)`.
    UniformAndBernoulli { lo: f64, hi: f64, p: f64 },
    /// `B ~ Bernoulli(p)`, then `(X₁, X₂ | B)` bivariate normal centred at
    /// `±shift` in both coordinates with unit variances and correlation `rho`.
    NormalBernoulliMixture { p: f64, shift: f64, rho: f64 },
    /// Centred bivariate normal, unit variances, correlation `rho`.
    CorrelatedNormal { rho: f64 },
    /// `X ~ Exp(rate)`.
    Exponential { rate: f64 },
    /// `dim` independent standard normals.
    StandardNormal { dim: usize },
}

impl CovariateLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            CovariateLaw::Uniform { lo, hi } => vec![uniform(lo, hi, rng)],
            CovariateLaw::UniformAndBernoulli { lo, hi, p } => {
                let x = uniform(lo, hi, rng);
                vec![x, bernoulli(p, rng)]
            }
            CovariateLaw::NormalBernoulliMixture { p, shift, rho } => {
                let b = bernoulli(p, rng);
                let centre = if b == 1.0 { shift } else { -shift };
                let (z1, z2) = correlated_pair(rho, rng);
                vec![centre + z1, centre + z2, b]
            }
            CovariateLaw::CorrelatedNormal { rho } => {
                let (z1, z2) = correlated_pair(rho, rng);
                vec![z1, z2]
            }
            CovariateLaw::Exponential { rate } => {
                vec![Exp::new(rate).expect("positive rate").sample(rng)]
            }
            CovariateLaw::StandardNormal { dim } => {
                (0..dim).map(|_| rng.sample(StandardNormal)).collect()
            }
        }
    }
}

fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    Uniform::new(lo, hi).expect("lo < hi").sample(rng)
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if Bernoulli::new(p).expect("p in [0, 1]").sample(rng) {
        1.0
    } else {
        0.0
    }
}

fn correlated_pair<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

/// How raw covariates map to a row of the true design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignShape {
    /// `(1, x₁, …, x_p)`.
    Linear,
    /// `(1, x, x²)` from a single covariate.
    Quadratic,
    /// `(1, x, b, x·b)` from `(x, b)`.
    Interaction,
}

impl DesignShape {
    fn row(self, raw: &[f64]) -> Vec<f64> {
        match self {
            DesignShape::Linear => std::iter::once(1.0).chain(raw.iter().copied()).collect(),
            DesignShape::Quadratic => vec![1.0, raw[0], raw[0] * raw[0]],
            DesignShape::Interaction => vec![1.0, raw[0], raw[1], raw[0] * raw[1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub id: SettingId,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub d: Option<usize>,
    /// True coefficients on the true design.
    pub coefficients: Vec<f64>,
    pub covariate_law: CovariateLaw,
    pub design: DesignShape,
    pub true_family: Family,
    pub true_link: Link,
    pub fit_family: Family,
    pub fit_link: Link,
    /// Columns of the true design kept in the fitted model.
    pub fit_columns: Vec<usize>,
    pub seed: u64,
}

/// Power setting 1: `(β₀, β₁, β₂)` giving means `J, 5, 8` at `x = -3, 0, 3`.
pub fn power1_coefficients(j: f64) -> [f64; 3] {
    let lj = j.ln();
    [1.61, 0.347 - lj / 6.0, -0.0633 + lj / 18.0]
}

/// Power setting 3: `(β₀, β₁, β₂, β₃)` giving means `5, 5, 7, J` at
/// `(x, b) = (-3, 0), (-3, 1), (3, 0), (3, 1)`.
///
/// The interaction coefficients solve the `(3, 1)` constraint directly:
/// with `L = log J − β₀ − 3β₁`, `β₂ = L/2` and `β₃ = L/6`, so that the
/// `(-3, 1)` mean stays at 5.
pub fn power3_coefficients(j: f64) -> [f64; 4] {
    let (b0, b1) = (1.78, 0.0561);
    let l = j.ln() - b0 - 3.0 * b1;
    [b0, b1, l / 2.0, l / 6.0]
}

/// `β₀ = 1.67`, `β_j = √(0.0717/(d−1))`.
pub fn large_model_coefficients(d: usize) -> Vec<f64> {
    let slope = (0.0717 / (d - 1) as f64).sqrt();
    std::iter::once(1.67)
        .chain(std::iter::repeat_n(slope, d - 1))
        .collect()
}

pub const LARGE_MODEL_DIMS: [usize; 6] = [2, 10, 20, 30, 40, 50];

const UNIT_U3: CovariateLaw = CovariateLaw::Uniform { lo: -3.0, hi: 3.0 };

impl SettingSpec {
    /// Build a named setting. `j` is required for power settings 1 to 3 and
    /// must lie on the setting's grid; `d` is required for the large model.
    pub fn new(
        id: SettingId,
        n: usize,
        j: Option<f64>,
        d: Option<usize>,
        seed: u64,
    ) -> Result<Self, SimError> {
        if let Some(grid) = id.j_grid() {
            let j = j.ok_or(SimError::MissingJ(id))?;
            if !grid.iter().any(|g| (g - j).abs() <= 1e-12 * g.abs()) {
                return Err(SimError::InvalidJ { setting: id, j });
            }
        } else if j.is_some() {
            return Err(SimError::InvalidArgument(format!("{id} takes no J")));
        }
        if id == SettingId::LargeModel {
            let d = d.ok_or_else(|| SimError::InvalidArgument("large_model needs d".into()))?;
            if d < 2 {
                return Err(SimError::InvalidArgument(format!(
                    "large_model needs d >= 2, got {d}"
                )));
            }
            if n <= d {
                return Err(SimError::InvalidArgument(format!(
                    "n = {n} must exceed d = {d}"
                )));
            }
        } else if d.is_some() {
            return Err(SimError::InvalidArgument(format!("{id} takes no d")));
        }

        let poisson = Family::poisson();
        let linear = |coefficients: Vec<f64>, law: CovariateLaw, link: Link| {
            let cols = (0..coefficients.len()).collect();
            SettingSpec {
                id,
                n,
                j,
                d,
                coefficients,
                covariate_law: law,
                design: DesignShape::Linear,
                true_family: poisson,
                true_link: link,
                fit_family: poisson,
                fit_link: link,
                fit_columns: cols,
                seed,
            }
        };
        let spec = match id {
            SettingId::Null1 => linear(vec![1.15, 1.15], UNIT_U3, Link::Log),
            SettingId::Null2 => linear(vec![1.15, 0.384], UNIT_U3, Link::Log),
            SettingId::Null3 => linear(vec![-1.15, 0.384], UNIT_U3, Link::Log),
            SettingId::Null4 => linear(
                vec![1.0, 0.2, -0.2, 0.7],
                CovariateLaw::NormalBernoulliMixture {
                    p: 0.5,
                    shift: 1.0,
                    rho: 0.5,
                },
                Link::Log,
            ),
            SettingId::Null5 => linear(
                vec![1.70, 0.148, 0.148],
                CovariateLaw::CorrelatedNormal { rho: 0.7 },
                Link::Log,
            ),
            SettingId::Null6 => linear(
                vec![1.15, 0.384],
                CovariateLaw::Exponential { rate: 1.0 },
                Link::Log,
            ),
            SettingId::Null1b => linear(vec![5.16, 1.61], UNIT_U3, Link::Sqrt),
            SettingId::Null2b => linear(vec![2.08, 0.360], UNIT_U3, Link::Sqrt),
            SettingId::Null3b => linear(vec![0.658, 0.114], UNIT_U3, Link::Sqrt),
            SettingId::Power1 => SettingSpec {
                coefficients: power1_coefficients(j.unwrap()).to_vec(),
                design: DesignShape::Quadratic,
                fit_columns: vec![0, 1],
                ..linear(vec![], UNIT_U3, Link::Log)
            },
            SettingId::Power2 => SettingSpec {
                true_family: Family::negative_binomial(1.0 / j.unwrap())?,
                ..linear(vec![1.61, 0.157], UNIT_U3, Link::Log)
            },
            SettingId::Power3 => SettingSpec {
                coefficients: power3_coefficients(j.unwrap()).to_vec(),
                design: DesignShape::Interaction,
                fit_columns: vec![0, 1, 2],
                ..linear(
                    vec![],
                    CovariateLaw::UniformAndBernoulli {
                        lo: -3.0,
                        hi: 3.0,
                        p: 0.5,
                    },
                    Link::Log,
                )
            },
            SettingId::Power4Sqrt => SettingSpec {
                true_link: Link::Sqrt,
                ..linear(vec![2.24, 0.197], UNIT_U3, Link::Log)
            },
            SettingId::Power4Identity => SettingSpec {
                true_link: Link::Identity,
                ..linear(vec![5.0, 1.0], UNIT_U3, Link::Log)
            },
            SettingId::LargeModel => {
                let d = d.unwrap();
                linear(
                    large_model_coefficients(d),
                    CovariateLaw::StandardNormal { dim: d - 1 },
                    Link::Log,
                )
            }
        };
        Ok(spec)
    }

    /// Warnings about non-standard choices (e.g. a large-model dimension
    /// off the usual grid).
    pub fn warnings(&self) -> Vec<String> {
        match (self.id, self.d) {
            (SettingId::LargeModel, Some(d)) if !LARGE_MODEL_DIMS.contains(&d) => {
                vec![format!(
                    "d = {d} is outside the usual grid {LARGE_MODEL_DIMS:?}"
                )]
            }
            _ => Vec::new(),
        }
    }

    /// Dimension of the fitted design.
    pub fn fit_dim(&self) -> usize {
        self.fit_columns.len()
    }

    /// True mean for one row of the true design.
    pub fn true_mean(&self, row: &[f64]) -> f64 {
        let eta: f64 = row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum();
        self.true_link.inverse(eta)
    }
}

/// One simulated dataset: the fitted design with responses drawn from the
/// true model, and the true means.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub true_mean: Vec<f64>,
}

/// Draw `spec.n` observations from the setting's true model.
pub fn generate<R: Rng + ?Sized>(spec: &SettingSpec, rng: &mut R) -> Result<Simulated, SimError> {
    let n = spec.n;
    let d = spec.fit_dim();
    let mut design = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    let mut true_mean = Vec::with_capacity(n);
    for i in 0..n {
        let raw = spec.covariate_law.draw(rng);
        let row = spec.design.row(&raw);
        let mean = spec.true_mean(&row);
        for (k, &c) in spec.fit_columns.iter().enumerate() {
            design[(i, k)] = row[c];
        }
        y[i] = sample_response(&spec.true_family, mean, rng);
        true_mean.push(mean);
    }
    Ok(Simulated {
        data: Dataset::new(design, y)?,
        true_mean,
    })
}

pub fn generate_null<R: Rng + ?Sized>(
    spec: &SettingSpec,
    rng: &mut R,
) -> Result<Simulated, SimError> {
    if !spec.id.is_null() {
        return Err(SimError::InvalidArgument(format!(
            "{} is not a null setting",
            spec.id
        )));
    }
    generate(spec, rng)
}

pub fn generate_power<R: Rng + ?Sized>(
    spec: &SettingSpec,
    rng: &mut R,
) -> Result<Simulated, SimError> {
    if !spec.id.is_power() {
        return Err(SimError::InvalidArgument(format!(
            "{} is not a power setting",
            spec.id
        )));
    }
    generate(spec, rng)
}

pub fn generate_large_model<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Simulated, SimError> {
    generate(
        &SettingSpec::new(SettingId::LargeModel, n, None, Some(d), seed)?,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream;

    #[test]
    fn names_round_trip() {
        for id in SettingId::ALL {
            assert_eq!(id.name().parse::<SettingId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.name()));
        }
        assert!("power_4".parse::<SettingId>().is_err());
    }

    #[test]
    fn power1_means_hit_targets() {
        for j in [4.0, 6.0, 8.0, 10.0] {
            let b = power1_coefficients(j);
            let mean = |x: f64| (b[0] + b[1] * x + b[2] * x * x).exp();
            assert!((mean(-3.0) / j - 1.0).abs() < 0.01);
            assert!((mean(0.0) / 5.0 - 1.0).abs() < 0.01);
            assert!((mean(3.0) / 8.0 - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn power3_means_hit_targets() {
        for j in [8.0, 12.0, 16.0, 20.0] {
            let b = power3_coefficients(j);
            let mean = |x: f64, z: f64| (b[0] + b[1] * x + b[2] * z + b[3] * x * z).exp();
            assert!((mean(-3.0, 0.0) / 5.0 - 1.0).abs() < 0.01);
            assert!((mean(-3.0, 1.0) / 5.0 - 1.0).abs() < 0.01);
            assert!((mean(3.0, 0.0) / 7.0 - 1.0).abs() < 0.01);
            assert!((mean(3.0, 1.0) / j - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn j_validation() {
        assert!(SettingSpec::new(SettingId::Power2, 100, Some(0.5), None, 1).is_ok());
        assert!(matches!(
            SettingSpec::new(SettingId::Power2, 100, Some(0.3), None, 1),
            Err(SimError::InvalidJ { .. })
        ));
        assert!(matches!(
            SettingSpec::new(SettingId::Power1, 100, None, None, 1),
            Err(SimError::MissingJ(_))
        ));
        assert!(SettingSpec::new(SettingId::Null1, 100, Some(4.0), None, 1).is_err());
    }

    #[test]
    fn large_model_shape() {
        let spec = SettingSpec::new(SettingId::LargeModel, 100, None, Some(20), 3).unwrap();
        assert_eq!(spec.fit_dim(), 20);
        let slopes: f64 = spec.coefficients[1..].iter().map(|b| b * b).sum();
        assert!((slopes - 0.0717).abs() < 1e-12);
        assert!((large_model_coefficients(2)[1] - 0.0717f64.sqrt()).abs() < 1e-15);
        assert!(SettingSpec::new(SettingId::LargeModel, 20, None, Some(20), 3).is_err());
        assert!(
            SettingSpec::new(SettingId::LargeModel, 100, None, Some(7), 3)
                .unwrap()
                .warnings()
                .len()
                == 1
        );
    }

    #[test]
    fn generated_designs_have_expected_columns() {
        let mut rng = stream(5, 0);
        let spec = SettingSpec::new(SettingId::Power1, 50, Some(8.0), None, 5).unwrap();
        let sim = generate_power(&spec, &mut rng).unwrap();
        assert_eq!(sim.data.d(), 2);
        let spec = SettingSpec::new(SettingId::Power3, 50, Some(8.0), None, 5).unwrap();
        let sim = generate(&spec, &mut rng).unwrap();
        assert_eq!(sim.data.d(), 3);
        assert!(sim
            .data
            .design()
            .column(2)
            .iter()
            .all(|&b| b == 0.0 || b == 1.0));
        let spec = SettingSpec::new(SettingId::Null4, 50, None, None, 5).unwrap();
        assert!(generate_power(&spec, &mut rng).is_err());
    }
}
