//! Kernel families, Gram matrices and the kernel-induced Hilbertian metric.
//!
//! The three families are bounded and integrally strictly positive definite:
//!
//! | family | `k(q, q')` | bound `C_k` |
//! |--------|------------|-------------|
//! | gaussian | `exp(-σ ‖q − q'‖₂²)` | 1 |
//! | laplacian | `exp(-σ ‖q − q'‖₁)` | 1 |
//! | inverse multiquadric | `(σ² + ‖q − q'‖₂²)^(−c)` | `σ^(−2c)` |
//!
//! Note that `σ` multiplies the squared norm for the gaussian family; it is a
//! precision, not a length scale.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::points::Points;

/// Radicands of `d_k²` in `[-RADICAND_TOL, 0)` are rounding noise and clamp to 0.
pub const RADICAND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("points must have dimension >= 1")]
    ZeroDimension,
    #[error("non-finite input coordinate")]
    NonFinite,
    #[error("empty point list")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("negative squared distance {0:e}: kernel is not positive definite here")]
    NegativeRadicand(f64),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
    InverseMultiquadric,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::InverseMultiquadric => "inverse_multiquadric",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "inverse_multiquadric" | "imq" => Ok(KernelFamily::InverseMultiquadric),
            other => Err(KernelError::UnknownFamily(other.to_string())),
        }
    }
}

/// A kernel family with validated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    sigma: f64,
    c: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, KernelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(KernelError::InvalidParameter { name, value })
    }
}

impl KernelSpec {
    /// `c` is only read by the inverse multiquadric family.
    pub fn new(family: KernelFamily, sigma: f64, c: f64) -> Result<Self, KernelError> {
        check_positive("sigma", sigma)?;
        if family == KernelFamily::InverseMultiquadric {
            check_positive("c", c)?;
        }
        Ok(Self { family, sigma, c })
    }

    pub fn gaussian(sigma: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Gaussian, sigma, 1.0)
    }

    pub fn laplacian(sigma: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Laplacian, sigma, 1.0)
    }

    pub fn inverse_multiquadric(sigma: f64, c: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::InverseMultiquadric, sigma, c)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// The bound `C_k` with `0 < k ≤ C_k`. Attained on the diagonal.
    pub fn bound(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian => 1.0,
            // Same expression as `value` at distance zero, so the diagonal
            // attains the bound exactly.
            KernelFamily::InverseMultiquadric => (self.sigma * self.sigma).powf(-self.c),
        }
    }

    /// Whether `k((u, v), (u', v')) = k(u, u') k(v, v')` for any split of the
    /// coordinates into blocks.
    pub fn is_separable(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::Gaussian | KernelFamily::Laplacian
        )
    }

    /// Kernel value without dimension or finiteness checks.
    #[inline]
    pub fn value(&self, q: &[f64], q2: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), q2.len());
        match self.family {
            KernelFamily::Gaussian => (-self.sigma * sq_dist(q, q2)).exp(),
            KernelFamily::Laplacian => {
                let l1: f64 = q.iter().zip(q2).map(|(a, b)| (a - b).abs()).sum();
                (-self.sigma * l1).exp()
            }
            KernelFamily::InverseMultiquadric => {
                (self.sigma * self.sigma + sq_dist(q, q2)).powf(-self.c)
            }
        }
    }

    /// `k(q, q)`, identical for every `q` in all three families.
    pub fn diagonal(&self) -> f64 {
        self.bound()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::InverseMultiquadric => {
                write!(f, "{}(sigma={}, c={})", self.family, self.sigma, self.c)
            }
            _ => write!(f, "{}(sigma={})", self.family, self.sigma),
        }
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(q: &[f64], q2: &[f64]) -> Result<(), KernelError> {
    if q.len() != q2.len() {
        return Err(KernelError::DimensionMismatch(q.len(), q2.len()));
    }
    if q.is_empty() {
        return Err(KernelError::ZeroDimension);
    }
    if !q.iter().chain(q2).all(|v| v.is_finite()) {
        return Err(KernelError::NonFinite);
    }
    Ok(())
}

/// `k(q, q2)` with input validation.
pub fn eval_kernel(spec: &KernelSpec, q: &[f64], q2: &[f64]) -> Result<f64, KernelError> {
    check_pair(q, q2)?;
    Ok(spec.value(q, q2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    Raw,
    Centered,
}

/// Dense pairwise kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub kind: GramKind,
}

impl GramMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }
}

/// Row-parallel evaluation of `f(i, j)` into an `rows × cols` matrix. Every
/// entry is computed independently, so the result does not depend on the
/// number of worker threads.
pub(crate) fn par_matrix<F>(rows: usize, cols: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let row_data: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| (0..cols).map(|j| f(i, j)).collect())
        .collect();
    DMatrix::from_fn(rows, cols, |i, j| row_data[i][j])
}

fn check_points(p: &Points) -> Result<(), KernelError> {
    if p.is_empty() {
        return Err(KernelError::Empty);
    }
    if !p.all_finite() {
        return Err(KernelError::NonFinite);
    }
    Ok(())
}

/// Raw Gram matrix `G[i][j] = k(a_i, b_j)`.
pub fn gram(spec: &KernelSpec, a: &Points, b: &Points) -> Result<GramMatrix, KernelError> {
    check_points(a)?;
    check_points(b)?;
    if a.dim() != b.dim() {
        return Err(KernelError::DimensionMismatch(a.dim(), b.dim()));
    }
    let entries = par_matrix(a.len(), b.len(), |i, j| spec.value(a.row(i), b.row(j)));
    Ok(GramMatrix {
        entries,
        kind: GramKind::Raw,
    })
}

/// Double centering `k̃_ij = k_ij − rowmean_i − colmean_j + grandmean`.
pub fn center_gram(g: &GramMatrix) -> Result<GramMatrix, KernelError> {
    if !g.is_square() {
        return Err(KernelError::NotSquare {
            rows: g.rows(),
            cols: g.cols(),
        });
    }
    let n = g.rows();
    if n == 0 {
        return Err(KernelError::Empty);
    }
    let k = &g.entries;
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() * inv).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut entries = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand);
    // A second pass removes the O(eps · n) residue left in the row sums.
    let row_fix: Vec<f64> = (0..n).map(|i| entries.row(i).sum() * inv).collect();
    let col_fix: Vec<f64> = (0..n).map(|j| entries.column(j).sum() * inv).collect();
    let grand_fix = row_fix.iter().sum::<f64>() * inv;
    for j in 0..n {
        for i in 0..n {
            entries[(i, j)] -= row_fix[i] + col_fix[j] - grand_fix;
        }
    }
    Ok(GramMatrix {
        entries,
        kind: GramKind::Centered,
    })
}

/// `d_k(q, q2) = ‖k(·, q) − k(·, q2)‖_H`.
pub fn hilbertian_metric(spec: &KernelSpec, q: &[f64], q2: &[f64]) -> Result<f64, KernelError> {
    check_pair(q, q2)?;
    let radicand = spec.value(q, q) + spec.value(q2, q2) - 2.0 * spec.value(q, q2);
    clamp_radicand(radicand).map(f64::sqrt)
}

pub(crate) fn clamp_radicand(r: f64) -> Result<f64, KernelError> {
    if r < -RADICAND_TOL {
        Err(KernelError::NegativeRadicand(r))
    } else {
        Ok(r.max(0.0))
    }
}

/// Recovers a kernel from a Hilbertian metric `d` by three-point
/// interpolation around the anchor `z`:
/// `k(q, q2) = ½ [d²(q, z) + d²(q2, z) − d²(q, q2)]`.
pub fn three_point_kernel<D>(d: D, q: &[f64], q2: &[f64], z: &[f64]) -> Result<f64, KernelError>
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    check_pair(q, q2)?;
    check_pair(q, z)?;
    let dqz = d(q, z);
    let dq2z = d(q2, z);
    let dqq2 = d(q, q2);
    Ok(0.5 * (dqz * dqz + dq2z * dq2z - dqq2 * dqq2))
}

/// Median-heuristic parameter for `family` over `points`.
///
/// gaussian: `1 / median ‖q − q'‖²`; laplacian: `1 / median ‖q − q'‖₁`;
/// inverse multiquadric: `sqrt(median ‖q − q'‖²)` so that `σ²` is a typical
/// squared distance. At most 1000 points (evenly strided) enter the median.
/// Falls back to 1 when all points coincide.
pub fn median_heuristic(family: KernelFamily, points: &Points) -> f64 {
    const MAX_POINTS: usize = 1000;
    let n = points.len();
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut dists = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (s, &i) in idx.iter().enumerate() {
        for &j in &idx[s + 1..] {
            let (a, b) = (points.row(i), points.row(j));
            let d = match family {
                KernelFamily::Laplacian => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
                _ => sq_dist(a, b),
            };
            dists.push(d);
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if !(median > 0.0 && median.is_finite()) {
        return 1.0;
    }
    match family {
        KernelFamily::Gaussian | KernelFamily::Laplacian => 1.0 / median,
        KernelFamily::InverseMultiquadric => median.sqrt(),
    }
}
