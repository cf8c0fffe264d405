//! Asymptotic inference for the unbiased statistic.
//!
//! Under equality of the two sampled measures, `N·Ŝ_H` converges to
//! `Σ_l λ_l (z_l² − 1)` with i.i.d. standard normal `z_l`. The weights are
//! estimated from the spectra of the centered Gram matrices of the two
//! samples: `λ_l = λ_l^A + λ_l^B` with `λ^A` the eigenvalues of `k̃_A / n_A`,
//! each list sorted nonincreasing and the shorter one zero-padded. `N` is the
//! effective size `2 n_A n_B / (n_A + n_B)`, which is `n` for equal sizes.

mod eigen;

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::empirical::{residuals, Dataset, EmpiricalError, ResidualModel};
use crate::kernels::{center_gram, gram, median_heuristic, KernelError, KernelFamily, KernelSpec};
use crate::mmd::{h_unchecked, hoeffding_bound, mmd_unbiased_sq, MmdError, UConvention};
use crate::points::{Points, PointsError};
use crate::rng;

pub use eigen::{eigen_symmetric, OFF_DIAGONAL_TOL, SYMMETRY_TOL};

/// Eigenvalues below this fraction of the largest are dropped.
pub const TRUNCATION_REL: f64 = 1e-10;
/// Quantile levels reported by every test.
pub const REPORT_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];
/// Minimum number of simulated draws for the spectrum method.
pub const MIN_SIM_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },
    #[error("Jacobi iteration did not converge in {sweeps} sweeps")]
    NotConverged { sweeps: usize },
    #[error("null spectrum is empty (all sample points identical under the kernel)")]
    EmptySpectrum,
    #[error("{draws} simulation draws requested, at least {min} required")]
    InvalidDraws { draws: usize, min: usize },
    #[error("{found} observations, at least {min} required")]
    TooFewObservations { found: usize, min: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
    #[error(transparent)]
    Points(#[from] PointsError),
}

/// Estimated weights of the `Σ λ (z² − 1)` limit.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpectrum {
    /// Nonincreasing, strictly above `truncation_tol`.
    pub lambdas: Vec<f64>,
    pub source_sizes: (usize, usize),
    pub truncation_tol: f64,
    /// Number of eigenvalues removed by truncation.
    pub dropped: usize,
    /// Upper bound on the dropped mass, `truncation_tol · dropped`.
    pub truncation_error_bound: f64,
}

impl NullSpectrum {
    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `Σ λ²`; the variance of the limit is twice this.
    pub fn sum_sq(&self) -> f64 {
        self.lambdas.iter().map(|l| l * l).sum()
    }
}

fn scaled_spectrum(spec: &KernelSpec, sample: &Points) -> Result<Vec<f64>, InferenceError> {
    let g = gram(spec, sample, sample)?;
    let centered = center_gram(&g)?;
    let n = sample.len() as f64;
    Ok(eigen_symmetric(&centered.entries)?.into_iter().map(|l| l / n).collect())
}

/// Null weights `λ_l = λ_l^A + λ_l^B` from the centered Gram spectra of two
/// samples.
pub fn estimate_spectrum(
    spec: &KernelSpec,
    sample_a: &Points,
    sample_b: &Points,
) -> Result<NullSpectrum, InferenceError> {
    for s in [sample_a, sample_b] {
        if s.len() < 2 {
            return Err(InferenceError::TooFewObservations { found: s.len(), min: 2 });
        }
    }
    let la = scaled_spectrum(spec, sample_a)?;
    let lb = scaled_spectrum(spec, sample_b)?;
    let len = la.len().max(lb.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let combined: Vec<f64> = (0..len).map(|i| at(&la, i) + at(&lb, i)).collect();

    let lambda_max = combined.first().copied().unwrap_or(0.0);
    let source_sizes = (sample_a.len(), sample_b.len());
    // A centered Gram of identical points is zero up to rounding.
    if lambda_max <= f64::EPSILON * spec.bound() {
        return Ok(NullSpectrum {
            lambdas: Vec::new(),
            source_sizes,
            truncation_tol: 0.0,
            dropped: len,
            truncation_error_bound: 0.0,
        });
    }
    let truncation_tol = TRUNCATION_REL * lambda_max;
    let lambdas: Vec<f64> = combined.iter().copied().filter(|&l| l > truncation_tol).collect();
    let dropped = len - lambdas.len();
    Ok(NullSpectrum {
        lambdas,
        source_sizes,
        truncation_tol,
        dropped,
        truncation_error_bound: truncation_tol * dropped as f64,
    })
}

/// Sorted Monte Carlo sample from a null distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSample {
    values: Vec<f64>,
    pub seed: u64,
}

impl NullSample {
    /// Wraps and sorts raw draws.
    pub fn from_draws(mut values: Vec<f64>, seed: u64) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values, seed }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (self.len() as f64 - 1.0)
    }

    /// Inverse empirical c.d.f.: the smallest draw with at least a `p`
    /// fraction of the sample at or below it.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.len();
        let k = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[k - 1]
    }

    /// `(1 + #{draws ≥ observed}) / (1 + draws)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < observed);
        (1 + self.len() - below) as f64 / (1 + self.len()) as f64
    }

    /// Equal-width histogram over `[min, max]` as `(lower, upper, count)`.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        if self.is_empty() || bins == 0 {
            return Vec::new();
        }
        let lo = self.values[0];
        let hi = self.values[self.len() - 1];
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &v in &self.values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
            .collect()
    }
}

/// Draws from `Σ_l λ_l (z_l² − 1)`. Draw `d` uses substream `d` of `seed`.
pub fn simulate_null(spectrum: &NullSpectrum, draws: usize, seed: u64) -> Result<NullSample, InferenceError> {
    if draws == 0 {
        return Err(InferenceError::InvalidDraws { draws, min: 1 });
    }
    if spectrum.is_empty() {
        return Err(InferenceError::EmptySpectrum);
    }
    let values: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut r = rng::substream(seed, d);
            spectrum
                .lambdas
                .iter()
                .map(|&l| {
                    let z: f64 = rand::Rng::sample(&mut r, rand_distr::StandardNormal);
                    l * (z * z - 1.0)
                })
                .sum()
        })
        .collect();
    Ok(NullSample::from_draws(values, seed))
}

/// Matrix `h(q_i, q_j)` over paired points `q_i = (a_i, b_i)`.
pub fn h_matrix(spec: &KernelSpec, a: &Points, b: &Points) -> Result<DMatrix<f64>, InferenceError> {
    if a.len() != b.len() {
        return Err(MmdError::DimensionMismatch(a.len(), b.len()).into());
    }
    if a.dim() != b.dim() {
        return Err(MmdError::DimensionMismatch(a.dim(), b.dim()).into());
    }
    Ok(crate::kernels::par_matrix(a.len(), a.len(), |i, j| {
        h_unchecked(spec, a.row(i), a.row(j), b.row(i), b.row(j))
    }))
}

/// Plug-in `σ_s² = 4 (mean_i r_i² − ḡ²)` with `r_i` the off-diagonal row
/// means of `h` and `ḡ` the off-diagonal grand mean.
pub fn variance_sigma_s(h: &DMatrix<f64>) -> Result<f64, InferenceError> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(InferenceError::NotSquare { rows: n, cols: h.ncols() });
    }
    if n < 2 {
        return Err(InferenceError::TooFewObservations { found: n, min: 2 });
    }
    for i in 0..n {
        for j in 0..i {
            let gap = (h[(i, j)] - h[(j, i)]).abs();
            if gap > SYMMETRY_TOL {
                return Err(InferenceError::Asymmetric { row: i, col: j, gap });
            }
        }
    }
    let inv = 1.0 / (n - 1) as f64;
    let row_means: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| h[(i, j)]).sum::<f64>() * inv)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let second = row_means.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let v = 4.0 * (second - grand * grand);
    Ok(if v < 0.0 { 0.0 } else { v })
}

/// Kolmogorov distance `sup_t |F_1(t) − F_2(t)|` between two samples.
pub fn kolmogorov_distance(sample1: &[f64], sample2: &[f64]) -> f64 {
    let mut a = sample1.to_vec();
    let mut b = sample2.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    /// Simulated `Σ λ (z² − 1)` with the estimated spectrum.
    SpectrumSim,
    /// Normal approximation with the plug-in variance `σ_s²`.
    GaussianClt,
    /// The U-statistic tail bound, read as a conservative p-value.
    HoeffdingConservative,
}

impl TestMethod {
    pub fn name(self) -> &'static str {
        match self {
            TestMethod::SpectrumSim => "spectrum_sim",
            TestMethod::GaussianClt => "gaussian_clt",
            TestMethod::HoeffdingConservative => "hoeffding_conservative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spectrum_sim" => Some(TestMethod::SpectrumSim),
            "gaussian_clt" => Some(TestMethod::GaussianClt),
            "hoeffding_conservative" => Some(TestMethod::HoeffdingConservative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    /// `None` picks a gaussian kernel by the median heuristic on the pooled sample.
    pub kernel: Option<KernelSpec>,
    pub method: TestMethod,
    pub draws: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kernel: None,
            method: TestMethod::SpectrumSim,
            draws: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// `N · Ŝ_H`
    pub statistic: f64,
    pub s_hat: f64,
    pub convention: UConvention,
    pub n_eff: f64,
    pub sizes: (usize, usize),
    pub p_value: f64,
    pub method: TestMethod,
    /// `(level, quantile of the null for the statistic)`, levels from [`REPORT_LEVELS`].
    pub null_quantiles: Vec<(f64, f64)>,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub draws: usize,
    pub spectrum: Option<NullSpectrum>,
    pub null_sample: Option<NullSample>,
    pub sigma_s2: Option<f64>,
}

impl TestReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }

    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.null_quantiles.iter().find(|(l, _)| *l == level).map(|(_, q)| *q)
    }
}

/// Gaussian kernel with median-heuristic bandwidth on the union of two samples.
pub fn pooled_median_kernel(a: &Points, b: &Points) -> Result<KernelSpec, InferenceError> {
    let mut pooled = a.clone();
    for row in b.rows() {
        pooled.push(row)?;
    }
    Ok(KernelSpec::gaussian(median_heuristic(KernelFamily::Gaussian, &pooled))?)
}

/// Tests equality of the distributions of two independent samples with the
/// unbiased statistic.
pub fn two_sample_test(
    spec: &KernelSpec,
    a: &Points,
    b: &Points,
    method: TestMethod,
    draws: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    if method == TestMethod::SpectrumSim && draws < MIN_SIM_DRAWS {
        return Err(InferenceError::InvalidDraws { draws, min: MIN_SIM_DRAWS });
    }
    let (na, nb) = (a.len(), b.len());
    let s = if na == nb {
        mmd_unbiased_sq(spec, a, b)?
    } else {
        crate::mmd::mmd_unbiased_sq_with(spec, a, b, UConvention::UnbiasedGeneral)?
    };
    let n_eff = 2.0 * (na * nb) as f64 / (na + nb) as f64;
    let statistic = n_eff * s.value;
    let mut report = TestReport {
        statistic,
        s_hat: s.value,
        convention: s.convention.unwrap_or(UConvention::PairedH),
        n_eff,
        sizes: (na, nb),
        p_value: 1.0,
        method,
        null_quantiles: Vec::new(),
        kernel: *spec,
        seed,
        draws,
        spectrum: None,
        null_sample: None,
        sigma_s2: None,
    };
    match method {
        TestMethod::SpectrumSim => {
            let spectrum = estimate_spectrum(spec, a, b)?;
            let null = simulate_null(&spectrum, draws, seed)?;
            report.p_value = null.p_value(statistic);
            report.null_quantiles = REPORT_LEVELS.iter().map(|&l| (l, null.quantile(l))).collect();
            report.spectrum = Some(spectrum);
            report.null_sample = Some(null);
        }
        TestMethod::GaussianClt => {
            let pairs = na.min(nb);
            let idx: Vec<usize> = (0..pairs).collect();
            let h = h_matrix(spec, &a.select(&idx), &b.select(&idx))?;
            let var = variance_sigma_s(&h)?;
            let sd = (n_eff * var).sqrt();
            report.p_value = if sd > 0.0 {
                let z = Normal::standard();
                z.sf(statistic / sd)
            } else if statistic > 0.0 {
                0.0
            } else {
                1.0
            };
            let z = Normal::standard();
            report.null_quantiles = REPORT_LEVELS.iter().map(|&l| (l, sd * z.inverse_cdf(l))).collect();
            report.sigma_s2 = Some(var);
        }
        TestMethod::HoeffdingConservative => {
            let c = spec.bound();
            let n = na.min(nb);
            report.p_value = hoeffding_bound(c, n, s.value.max(0.0))?;
            report.null_quantiles = REPORT_LEVELS
                .iter()
                .map(|&l| {
                    let eps = (8.0 * c * c * (1.0 / (1.0 - l)).ln() / n as f64).sqrt();
                    (l, n_eff * eps)
                })
                .collect();
        }
    }
    Ok(report)
}

/// Split-sample construction for testing independence of `x` and `ε(θ)`.
///
/// With `h = ⌊n/2⌋`, sample A is `(x_i, ε_i)` for `i < h` and sample B is
/// `(x_{h+j}, ε_{h+(j+1) mod h})`. Under independence and i.i.d. data, A and B
/// are independent samples from the same product law, so the two-sample
/// limit applies exactly.
pub fn independence_samples(
    model: &dyn ResidualModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<(Points, Points), InferenceError> {
    let n = data.len();
    if n < 4 {
        return Err(InferenceError::TooFewObservations { found: n, min: 4 });
    }
    let eps = residuals(model, data, theta)?;
    let h = n / 2;
    let dim = data.x_dim() + eps.dim();
    let mut a = Points::new(dim)?;
    let mut b = Points::new(dim)?;
    let mut row = Vec::with_capacity(dim);
    for i in 0..h {
        row.clear();
        row.extend_from_slice(data.x().row(i));
        row.extend_from_slice(eps.row(i));
        a.push(&row)?;
        row.clear();
        row.extend_from_slice(data.x().row(h + i));
        row.extend_from_slice(eps.row(h + (i + 1) % h));
        b.push(&row)?;
    }
    Ok((a, b))
}

/// Tests `x ⊥ ε(θ)` for a residual model at a fixed `θ`.
pub fn test_independence(
    model: &dyn ResidualModel,
    data: &Dataset,
    theta: &[f64],
    config: &TestConfig,
) -> Result<TestReport, InferenceError> {
    let (a, b) = independence_samples(model, data, theta)?;
    let spec = match config.kernel {
        Some(k) => k,
        None => pooled_median_kernel(&a, &b)?,
    };
    two_sample_test(&spec, &a, &b, config.method, config.draws, config.seed)
}
