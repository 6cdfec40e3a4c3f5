//! Shared numerical kernels: symmetric pseudoinverse with rank detection,
//! the chi-squared survival function, weighted quantiles and the standard
//! normal distribution helpers used by the probit link and Wilson intervals.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("empty input")]
    EmptyInput,
    #[error("values and weights differ in length ({values} vs {weights})")]
    LengthMismatch { values: usize, weights: usize },
    #[error("weights must be positive and finite")]
    InvalidWeight,
    #[error("quantile level {0} outside (0, 1]")]
    InvalidLevel(f64),
}

/// How singular values are cut off when counting rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    /// Keep singular values above `rel_tol * max_singular_value`, never
    /// going below [`ABSOLUTE_RANK_FLOOR`].
    Relative(f64),
    /// Eigenvalue trimming: every eigenvalue smaller than the threshold
    /// (including negative ones) is set to zero.
    Trim(f64),
}

impl RankRule {
    /// Scale-aware default for a `dim x dim` matrix: `dim * eps`.
    pub fn default_for(dim: usize) -> Self {
        RankRule::Relative(dim.max(1) as f64 * f64::EPSILON)
    }
}

pub const ABSOLUTE_RANK_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PseudoinverseResult {
    pub pinv: DMatrix<f64>,
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// Moore-Penrose pseudoinverse of a (nearly) symmetric matrix.
///
/// The input is symmetrized as `(A + Aᵀ)/2` and decomposed as `Q Λ Qᵀ`; the
/// singular values are `|λ|`, so the pseudoinverse is `Q Λ⁺ Qᵀ` with the
/// eigenvalues below the rank cutoff dropped.
pub fn pseudoinverse(a: &DMatrix<f64>, rule: RankRule) -> PseudoinverseResult {
    assert!(a.is_square(), "pseudoinverse expects a square matrix");
    let n = a.nrows();
    if n == 0 {
        return PseudoinverseResult {
            pinv: DMatrix::zeros(0, 0),
            rank: 0,
            singular_values: Vec::new(),
            tolerance_used: ABSOLUTE_RANK_FLOOR,
        };
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut singular_values: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    singular_values.sort_by(|x, y| y.total_cmp(x));
    let max_sv = singular_values.first().copied().unwrap_or(0.0);

    let (tolerance_used, keep): (f64, Box<dyn Fn(f64) -> bool>) = match rule {
        RankRule::Relative(rel) => {
            let tol = (rel * max_sv).max(ABSOLUTE_RANK_FLOOR);
            (tol, Box::new(move |l: f64| l.abs() > tol))
        }
        RankRule::Trim(eps) => (eps, Box::new(move |l: f64| l >= eps)),
    };

    let mut pinv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !keep(lambda) {
            continue;
        }
        rank += 1;
        let q = eig.eigenvectors.column(k);
        pinv.ger(1.0 / lambda, &q, &q, 1.0);
    }
    // Exact symmetry of the returned matrix.
    let pinv = (&pinv + pinv.transpose()) * 0.5;

    PseudoinverseResult {
        pinv,
        rank,
        singular_values,
        tolerance_used,
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn upper_gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - lower_gamma_series(a, x)).clamp(0.0, 1.0)
    } else {
        upper_gamma_continued_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_gamma_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - upper_gamma_continued_fraction(a, x)).clamp(0.0, 1.0)
    }
}

/// `P(χ²_df > x)`.
pub fn chi_sq_sf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-squared needs at least one degree of freedom");
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

pub fn chi_sq_cdf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-squared needs at least one degree of freedom");
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Inverse-CDF weighted quantile: the smallest `v` in `values` whose
/// cumulative normalized weight reaches `p`.
///
/// `values` must be sorted ascending. Tied values are treated as one atom.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<f64, NumericsError> {
    if values.is_empty() {
        return Err(NumericsError::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(NumericsError::LengthMismatch {
            values: values.len(),
            weights: weights.len(),
        });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(NumericsError::InvalidLevel(p));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(NumericsError::InvalidWeight);
    }
    debug_assert!(values.windows(2).all(|w| w[0] <= w[1]));

    let total: f64 = weights.iter().sum();
    let target = p * total;
    // Summation slack so that e.g. 8 of 10 equal weights meets p = 0.8.
    let slack = 8.0 * f64::EPSILON * total * values.len() as f64;
    let mut cum = 0.0;
    let mut i = 0;
    while i < values.len() {
        // Consume the whole tie block before testing.
        let v = values[i];
        while i < values.len() && values[i] == v {
            cum += weights[i];
            i += 1;
        }
        if cum + slack >= target {
            return Ok(v);
        }
    }
    Ok(values[values.len() - 1])
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation polished with
/// one Halley step against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.024_25;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
