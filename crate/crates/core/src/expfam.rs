//! One-parameter exponential families `h(y) exp(θ T(y) − A(θ))` with the
//! natural parameter restricted to `[-M, M]`.
//!
//! The base measure `h` is never represented: every statistic used by the
//! estimator is a difference of log-likelihoods in which it cancels.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Which built-in family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    /// `A(θ) = log(1 + e^θ)`, `T(y) = y ∈ {0, 1}`.
    Bernoulli,
    /// `A(θ) = θ²/2`, `T(y) = y`, `Y ~ N(θ, 1)`.
    GaussianUnitVariance,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::GaussianUnitVariance => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bernoulli" => Some(FamilyKind::Bernoulli),
            "gaussian" | "gaussian-unit-variance" => Some(FamilyKind::GaussianUnitVariance),
            _ => None,
        }
    }
}

/// Number of grid points used by [`ExponentialFamily::new`] to validate the
/// cumulant derivatives.
const VALIDATION_GRID: usize = 257;

/// An exponential family together with its natural-parameter box half-width.
///
/// For Bernoulli the box `[-M, M]` corresponds to success probabilities in
/// `[σ(−M), 1 − σ(−M)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFamily {
    kind: FamilyKind,
    box_bound: f64,
}

impl ExponentialFamily {
    /// Builds the family and checks on a grid over `[-M, M]` that `A''` is
    /// positive and that `A'`, `A''` agree with central differences of `A`,
    /// `A'` (tolerance `1e-6 · max(1, |value|)`).
    pub fn new(kind: FamilyKind, box_bound: f64) -> Result<Self> {
        crate::cloud::require_positive("M", box_bound)?;
        let fam = Self { kind, box_bound };
        let h = 1e-4;
        for i in 0..VALIDATION_GRID {
            let t = grid_point(box_bound, VALIDATION_GRID, i);
            let var = fam.variance(t);
            if !(var > 0.0) {
                return Err(Error::NonsingularityViolated { theta: t });
            }
            let d1 = (fam.cumulant(t + h) - fam.cumulant(t - h)) / (2.0 * h);
            let d2 = (fam.mean(t + h) - fam.mean(t - h)) / (2.0 * h);
            for (analytic, numeric) in [(fam.mean(t), d1), (var, d2)] {
                if (analytic - numeric).abs() > 1e-6 * analytic.abs().max(1.0) {
                    return Err(Error::DerivativeMismatch {
                        theta: t,
                        analytic,
                        numeric,
                    });
                }
            }
        }
        Ok(fam)
    }

    pub fn bernoulli(box_bound: f64) -> Result<Self> {
        Self::new(FamilyKind::Bernoulli, box_bound)
    }

    pub fn gaussian(box_bound: f64) -> Result<Self> {
        Self::new(FamilyKind::GaussianUnitVariance, box_bound)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// The half-width `M` of the natural-parameter box.
    pub fn box_bound(&self) -> f64 {
        self.box_bound
    }

    /// Cumulant `A(θ)`.
    #[inline]
    pub fn cumulant(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli => softplus(theta),
            FamilyKind::GaussianUnitVariance => 0.5 * theta * theta,
        }
    }

    /// `A'(θ) = E_θ T(Y)`.
    #[inline]
    pub fn mean(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli => sigmoid(theta),
            FamilyKind::GaussianUnitVariance => theta,
        }
    }

    /// `A''(θ) = Var_θ T(Y)`.
    #[inline]
    pub fn variance(&self, theta: f64) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli => {
                let s = sigmoid(theta);
                s * (1.0 - s)
            }
            FamilyKind::GaussianUnitVariance => 1.0,
        }
    }

    /// Sufficient statistic `T(y)`; the identity for both built-in families.
    #[inline]
    pub fn sufficient_statistic(&self, y: f64) -> f64 {
        y
    }

    /// Draws one observation with natural parameter `theta`.
    pub fn sample<R: RngCore + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli => {
                if rng.random::<f64>() < sigmoid(theta) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::GaussianUnitVariance => {
                let z: f64 = StandardNormal.sample(rng);
                theta + z
            }
        }
    }

    /// Draws `Y_i ~ P_{θ_i}` independently for each coordinate.
    pub fn sample_vector<R: RngCore + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        theta.iter().map(|&t| self.sample(t, rng)).collect()
    }

    /// Errors with [`Error::ParameterOutOfBox`] on the first coordinate
    /// outside `[-M, M]` (or NaN).
    pub fn check_box(&self, theta: &[f64]) -> Result<()> {
        let m = self.box_bound;
        for (index, &value) in theta.iter().enumerate() {
            if !(value.abs() <= m) {
                return Err(Error::ParameterOutOfBox {
                    index,
                    value,
                    bound: m,
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

fn grid_point(m: f64, size: usize, i: usize) -> f64 {
    if i + 1 == size {
        m
    } else {
        -m + 2.0 * m * (i as f64) / ((size - 1) as f64)
    }
}

/// Curvature constants of the family on `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyConstants {
    /// Lower KL curvature `c(M) = min A''/2`.
    pub c_lower: f64,
    /// Upper KL curvature `C(M) = max A''/2`.
    pub c_upper: f64,
    /// Sub-exponential constant `C'(M) = max A''`.
    pub c_prime: f64,
    /// Domination-test exponent `κ(M)`.
    pub kappa: f64,
}

impl FamilyConstants {
    /// The computable floor `κ(M) = min(1/(8 C'(M)), 1/4) · C(M)`.
    pub fn default_kappa(c_upper: f64, c_prime: f64) -> f64 {
        (1.0 / (8.0 * c_prime)).min(0.25) * c_upper
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// Extremes of `A''` over an equispaced grid of `[-M, M]` (endpoints
/// included), each refined by golden-section search inside the two grid cells
/// around the best grid point.
pub fn cumulant_constants(family: &ExponentialFamily, grid_size: usize) -> Result<FamilyConstants> {
    if grid_size < 64 {
        return Err(invalid("grid_size must be at least 64"));
    }
    let m = family.box_bound();
    let var = |t: f64| family.variance(t);
    let (mut imin, mut imax) = (0usize, 0usize);
    let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..grid_size {
        let v = var(grid_point(m, grid_size, i));
        if v < vmin {
            vmin = v;
            imin = i;
        }
        if v > vmax {
            vmax = v;
            imax = i;
        }
    }
    let cell = |i: usize| {
        let lo = grid_point(m, grid_size, i.saturating_sub(1));
        let hi = grid_point(m, grid_size, (i + 1).min(grid_size - 1));
        (lo, hi)
    };
    let (lo, hi) = cell(imin);
    vmin = vmin.min(golden(var, lo, hi, false));
    let (lo, hi) = cell(imax);
    vmax = vmax.max(golden(var, lo, hi, true));
    if !(vmin > 0.0) {
        return Err(Error::NonsingularityViolated {
            theta: grid_point(m, grid_size, imin),
        });
    }
    let c_upper = vmax / 2.0;
    let c_prime = vmax;
    Ok(FamilyConstants {
        c_lower: vmin / 2.0,
        c_upper,
        c_prime,
        kappa: FamilyConstants::default_kappa(c_upper, c_prime),
    })
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, maximize: bool) -> f64 {
    let g = |t: f64| if maximize { -f(t) } else { f(t) };
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(x2);
        }
    }
    let best = if f1 < f2 { f1 } else { f2 };
    if maximize {
        -best
    } else {
        best
    }
}

fn check_pair(family: &ExponentialFamily, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    family.check_box(a)?;
    family.check_box(b)
}

/// Exact `KL(θ ‖ θ') = Σ_i (θ_i − θ'_i) A'(θ_i) + A(θ'_i) − A(θ_i)`.
pub fn kl_divergence(
    family: &ExponentialFamily,
    theta: &[f64],
    theta_prime: &[f64],
) -> Result<f64> {
    check_pair(family, theta, theta_prime)?;
    Ok(theta
        .iter()
        .zip(theta_prime)
        .map(|(&t, &u)| (t - u) * family.mean(t) + family.cumulant(u) - family.cumulant(t))
        .sum())
}

/// `Σ_i θ_i T(y_i) − A(θ_i)`, i.e. the log-likelihood without `log h(y)`.
pub fn log_likelihood(family: &ExponentialFamily, theta: &[f64], y: &[f64]) -> Result<f64> {
    if theta.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: y.len(),
        });
    }
    family.check_box(theta)?;
    Ok(log_likelihood_unchecked(family, theta, y))
}

#[inline]
pub(crate) fn log_likelihood_unchecked(
    family: &ExponentialFamily,
    theta: &[f64],
    y: &[f64],
) -> f64 {
    theta
        .iter()
        .zip(y)
        .map(|(&t, &yi)| t * family.sufficient_statistic(yi) - family.cumulant(t))
        .sum()
}

/// One λ of an [`MgfReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct MgfRow {
    pub lambda: f64,
    /// `log` of the Monte Carlo mean of `exp(λ (T(Y) − A'(θ)))`.
    pub empirical_log_mgf: f64,
    /// Delta-method standard error of `empirical_log_mgf`.
    pub std_error: f64,
    /// `λ² C'(M) / 2`.
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfReport {
    pub theta: f64,
    pub samples: usize,
    pub rows: Vec<MgfRow>,
}

impl MgfReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }
}

/// Monte Carlo check of the sub-exponential bound
/// `log E exp(λ (T − E T)) ≤ λ² C'(M) / 2` at each λ of `lambda_grid`.
///
/// A λ is flagged when the empirical log-MGF exceeds the bound by more than
/// three standard errors. Each λ uses its own ChaCha stream of `seed`.
pub fn mgf_bound_check(
    family: &ExponentialFamily,
    constants: &FamilyConstants,
    theta_i: f64,
    lambda_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MgfReport> {
    let m = family.box_bound();
    family.check_box(&[theta_i])?;
    if samples < 2 {
        return Err(invalid("samples must be at least 2"));
    }
    let mu = family.mean(theta_i);
    let mut rows = Vec::with_capacity(lambda_grid.len());
    for (k, &lambda) in lambda_grid.iter().enumerate() {
        if !(lambda.abs() <= m) {
            return Err(Error::LambdaOutOfRange { lambda, bound: m });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let t = family.sufficient_statistic(family.sample(theta_i, &mut rng));
            let e = libm::exp(lambda * (t - mu));
            s1 += e;
            s2 += e * e;
        }
        let nf = samples as f64;
        let mean = s1 / nf;
        let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        let std_error = libm::sqrt(var / nf) / mean;
        let empirical_log_mgf = libm::log(mean);
        let bound = lambda * lambda * constants.c_prime / 2.0;
        rows.push(MgfRow {
            lambda,
            empirical_log_mgf,
            std_error,
            bound,
            violated: empirical_log_mgf > bound + 3.0 * std_error,
        });
    }
    Ok(MgfReport {
        theta: theta_i,
        samples,
        rows,
    })
}

/// `n` equispaced points of `[-M, M]`, endpoints included.
pub fn lambda_grid(m: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| grid_point(m, n, i)).collect()
}
