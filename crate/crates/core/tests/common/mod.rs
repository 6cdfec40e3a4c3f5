//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the crate's own linear-algebra or fitting paths
//! except to read a fitted model's means.

#![allow(dead_code)]

use ghl::family::{Family, FamilyKind, Link};
use ghl::glm::{fit_irls, Dataset, FitOptions, FittedModel};
use ghl::grouping::{make_groups, GroupSpec, GroupingMethod};
use ghl::sampling::{sample_response, stream, StreamRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Variance function written out per family for the two fixture families.
pub fn var_of(kind: FamilyKind, mu: f64) -> f64 {
    match kind {
        FamilyKind::Poisson => mu,
        FamilyKind::Bernoulli => mu * (1.0 - mu),
        other => panic!("no oracle variance for {other}"),
    }
}

/// dμ/dη for the canonical fixture links.
pub fn dmu_of(link: Link, mu: f64) -> f64 {
    match link {
        Link::Log => mu,
        Link::Logit => mu * (1.0 - mu),
        other => panic!("no oracle derivative for {other}"),
    }
}

pub fn inv_link(link: Link, eta: f64) -> f64 {
    match link {
        Link::Log => eta.exp(),
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        other => panic!("no oracle inverse for {other}"),
    }
}

/// Log-likelihood without constant terms, from scratch.
pub fn loglik(data: &Dataset, beta: &[f64], kind: FamilyKind, link: Link) -> f64 {
    let x = data.design();
    (0..data.n())
        .map(|i| {
            let eta: f64 = (0..data.d()).map(|j| x[(i, j)] * beta[j]).sum();
            let mu = inv_link(link, eta);
            let y = data.response()[i];
            match kind {
                FamilyKind::Poisson => y * mu.ln() - mu,
                FamilyKind::Bernoulli => y * mu.ln() + (1.0 - y) * (1.0 - mu).ln(),
                other => panic!("no oracle likelihood for {other}"),
            }
        })
        .sum()
}

/// Central finite-difference gradient of [`loglik`].
pub fn fd_gradient(data: &Dataset, beta: &[f64], kind: FamilyKind, link: Link, h: f64) -> Vec<f64> {
    (0..beta.len())
        .map(|j| {
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (loglik(data, &up, kind, link) - loglik(data, &dn, kind, link)) / (2.0 * h)
        })
        .collect()
}

/// Plain Newton-Raphson for canonical links (observed = expected
/// information), with step-halving on the log-likelihood.
pub fn newton_raphson(data: &Dataset, kind: FamilyKind, link: Link) -> Vec<f64> {
    let (n, d) = (data.n(), data.d());
    let x = data.design();
    let y = data.response();
    let mut beta = vec![0.0; d];
    for _ in 0..200 {
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let eta: f64 = (0..d).map(|j| x[(i, j)] * beta[j]).sum();
            let mu = inv_link(link, eta);
            let w = var_of(kind, mu);
            for a in 0..d {
                grad[a] += (y[i] - mu) * x[(i, a)];
                for b in 0..d {
                    hess[(a, b)] += w * x[(i, a)] * x[(i, b)];
                }
            }
        }
        if grad.amax() < 1e-13 {
            break;
        }
        let step = hess.lu().solve(&grad).expect("nonsingular hessian");
        let base = loglik(data, &beta, kind, link);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + t * s)
                .collect();
            if loglik(data, &cand, kind, link) >= base - 1e-12 || t < 1e-8 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    beta
}

/// The three written-out forms of Σₙ with explicit n x n matrices:
/// `G(V − V½W½X M⁻¹XᵀW½V½)Gᵀ/n`, `G V½(I − W½X M⁻¹XᵀW½)V½ Gᵀ/n`, and
/// `G V½(I − H)V½ Gᵀ/n` with `H = QQᵀ` from a QR factorization of `W½X`.
pub fn literal_sigma_forms(
    model: &FittedModel,
    data: &Dataset,
    spec: &GroupSpec,
) -> [DMatrix<f64>; 3] {
    let n = data.n();
    let x = data.design();
    let kind = model.family.kind;
    let g_star = spec.indicator();
    let v: Vec<f64> = model.mu.iter().map(|&m| var_of(kind, m)).collect();
    let dm: Vec<f64> = model.mu.iter().map(|&m| dmu_of(model.link, m)).collect();
    let v_full = DMatrix::from_diagonal(&DVector::from_vec(v.clone()));
    let v_half = DMatrix::from_diagonal(&DVector::from_iterator(n, v.iter().map(|s| s.sqrt())));
    let w_half = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        (0..n).map(|i| dm[i] / v[i].sqrt()),
    ));
    let wx = &w_half * x;
    let m_inv = (wx.transpose() * &wx)
        .try_inverse()
        .expect("invertible information");
    let inner = &wx * &m_inv * wx.transpose();
    let scale = 1.0 / n as f64;

    let form1 = &g_star * (&v_full - &v_half * &inner * &v_half) * g_star.transpose() * scale;
    let form2 = &g_star
        * &v_half
        * (DMatrix::identity(n, n) - &inner)
        * &v_half
        * g_star.transpose()
        * scale;
    let q = wx.clone().qr().q();
    let hat = &q * q.transpose();
    let form3 =
        &g_star * &v_half * (DMatrix::identity(n, n) - hat) * &v_half * g_star.transpose() * scale;
    [form1, form2, form3]
}

/// `S¹ₙ` through the indicator matrix.
pub fn literal_s(model: &FittedModel, data: &Dataset, spec: &GroupSpec) -> DVector<f64> {
    let r = DVector::from_iterator(
        data.n(),
        (0..data.n()).map(|i| data.response()[i] - model.mu[i]),
    );
    spec.indicator() * r / (data.n() as f64).sqrt()
}

/// GHL statistic from the literal form and an SVD pseudoinverse.
pub fn brute_force_ghl(model: &FittedModel, data: &Dataset, spec: &GroupSpec) -> (f64, usize) {
    let [sigma, _, _] = literal_sigma_forms(model, data, spec);
    let s = literal_s(model, data, spec);
    let svd = sigma.clone().svd(true, true);
    let max = svd.singular_values.max();
    let tol = (spec.groups() as f64 * f64::EPSILON * max).max(1e-10);
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    let pinv = svd.pseudo_inverse(tol).expect("svd with vectors");
    (s.dot(&(pinv * &s)), rank)
}

pub struct Fixture {
    pub data: Dataset,
    pub model: FittedModel,
    pub spec: GroupSpec,
}

/// Random small fixture: intercept plus `d − 1` uniform covariates,
/// responses from the stated canonical model, variance-weighted groups.
/// Returns `None` when the draw cannot be fitted or grouped.
pub fn random_fixture(
    rng: &mut StreamRng,
    kind: FamilyKind,
    n: usize,
    d: usize,
    groups: usize,
) -> Option<Fixture> {
    let (family, link) = match kind {
        FamilyKind::Poisson => (Family::poisson(), Link::Log),
        FamilyKind::Bernoulli => (Family::bernoulli(), Link::Logit),
        other => panic!("no fixture for {other}"),
    };
    let design = DMatrix::<f64>::from_fn(n, d, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let beta: Vec<f64> = (0..d)
        .map(|j| {
            if j == 0 {
                if kind == FamilyKind::Poisson {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.random_range(-0.8..0.8)
            }
        })
        .collect();
    let y = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let eta: f64 = (0..d).map(|j| design[(i, j)] * beta[j]).sum();
            sample_response(&family, inv_link(link, eta), rng)
        }),
    );
    let data = Dataset::new(design, y).ok()?;
    let model = fit_irls(&data, &family, link, &FitOptions::default()).ok()?;
    if !model.converged {
        return None;
    }
    let spec = make_groups(&model, &GroupingMethod::VarianceWeighted, groups).ok()?;
    Some(Fixture { data, model, spec })
}

/// Collect `count` fixtures alternating Poisson and Bernoulli, with
/// `n ≤ 40` and `d ≤ 4`.
pub fn fixture_batch(seed: u64, count: usize) -> Vec<Fixture> {
    let mut rng = stream(seed, 0);
    let mut out = Vec::new();
    let mut attempt = 0;
    while out.len() < count {
        attempt += 1;
        assert!(attempt < 20 * count, "too many rejected fixtures");
        let kind = if out.len() % 2 == 0 {
            FamilyKind::Poisson
        } else {
            FamilyKind::Bernoulli
        };
        let n = rng.random_range(20..=40);
        let d = rng.random_range(1..=4);
        let groups = rng.random_range(3..=6);
        if let Some(f) = random_fixture(&mut rng, kind, n, d, groups) {
            out.push(f);
        }
    }
    out
}

/// Adaptive Simpson on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// `Γ(k/2)` from the half-integer recurrence.
pub fn gamma_half(k: usize) -> f64 {
    let (mut value, mut z) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    let target = k as f64 / 2.0;
    while z < target - 1e-9 {
        value *= z;
        z += 1.0;
    }
    value
}

/// `P(χ²_df > x)` by quadrature. With `x = t²` the density becomes
/// `2c t^{df−1} e^{−t²/2}`, which is smooth at the origin for every df.
/// The upper tail is integrated for `x > df`, the lower part otherwise.
pub fn chi_sq_sf_quadrature(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let k = df as f64;
    let c = 1.0 / (2f64.powf(k / 2.0) * gamma_half(df));
    let density = move |t: f64| 2.0 * c * t.powf(k - 1.0) * (-t * t / 2.0).exp();
    let root = x.sqrt();
    if x > k {
        let upper = root + 40.0;
        adaptive_simpson(&density, root, upper, 1e-15)
    } else {
        1.0 - adaptive_simpson(&density, 0.0, root, 1e-15)
    }
}

/// Random symmetric `dim x dim` matrix `B S Bᵀ` with `B` standard normal
/// of width `rank` and `S` a random sign diagonal, so the rank is `rank`
/// almost surely and the matrix may be indefinite.
pub fn random_symmetric(rng: &mut StreamRng, dim: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::<f64>::from_fn(dim, rank, |_, _| rng.sample(rand_distr::StandardNormal));
    let s = DMatrix::from_diagonal(&DVector::from_fn(rank, |_, _| {
        if rng.random_bool(0.7) {
            1.0
        } else {
            -1.0
        }
    }));
    let a = &b * s * b.transpose();
    (&a + a.transpose()) * 0.5
}

/// Largest violation of the four Penrose conditions.
pub fn penrose_violation(a: &DMatrix<f64>, pinv: &DMatrix<f64>) -> f64 {
    let ap = a * pinv;
    let pa = pinv * a;
    [
        (&ap * a - a).amax(),
        (&pa * pinv - pinv).amax(),
        (&ap - ap.transpose()).amax(),
        (&pa - pa.transpose()).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Largest `|chi_sq_sf − quadrature|` over df 1..=30 and x in [0, 100].
pub fn chi_sq_grid_error(sf: impl Fn(f64, usize) -> f64) -> (f64, usize, f64) {
    let mut worst = (0.0, 0, 0.0);
    for df in 1..=30 {
        for step in 0..=200 {
            let x = step as f64 * 0.5;
            let err = (sf(x, df) - chi_sq_sf_quadrature(x, df)).abs();
            if err > worst.0 {
                worst = (err, df, x);
            }
        }
    }
    worst
}
