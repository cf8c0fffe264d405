//! Discrete optimal transport between two weighted point sets.
//!
//! The primal problem is `min Σ γ_ij C_ij` over nonnegative `γ` with row sums
//! `w` (source) and column sums `w̄` (target). The dual used throughout is
//!
//! ```text
//! max Σ_i u_i w_i + Σ_j v_j w̄_j   subject to   u_i + v_j ≤ C_ij,
//! ```
//!
//! which has the same optimal value as the primal, and at an optimum
//! `γ_ij > 0` implies `u_i + v_j = C_ij`.

mod dikin;
mod oracle;
mod simplex;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{clamp_radicand, KernelError, KernelSpec};
use crate::points::Points;

pub use dikin::{solve_dikin, DikinOptions, DikinSolution};
pub use oracle::{brute_force_ot, ot_1d_sorted, MAX_BRUTE_FORCE_CELLS, MAX_PERMUTATION_SIZE};
pub use simplex::{solve_simplex, SimplexSolution};

/// Allowed difference between the total source and target mass.
pub const MASS_TOL: f64 = 1e-9;
/// Allowed dual constraint excess `u_i + v_j − C_ij`.
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("empty cost matrix")]
    Empty,
    #[error("cost matrix is {rows}x{cols} but weights have lengths {source_len} and {target_len}")]
    Shape {
        rows: usize,
        cols: usize,
        source_len: usize,
        target_len: usize,
    },
    #[error("cost entry ({i}, {j}) is not finite")]
    NonFiniteCost { i: usize, j: usize },
    #[error("weight {index} of the {side} marginal is negative or not finite: {value}")]
    BadWeight {
        side: &'static str,
        index: usize,
        value: f64,
    },
    #[error("source mass {source_total} and target mass {target_total} differ")]
    Infeasible { source_total: f64, target_total: f64 },
    #[error("paper_cij cost needs equal sample sizes, got {n} and {m}")]
    PaperCijSizes { n: usize, m: usize },
    #[error("point dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("instance {rows}x{cols} is too large for exhaustive enumeration")]
    TooLarge { rows: usize, cols: usize },
    #[error("potentials violate u_{i} + v_{j} <= C_ij by {excess:e}")]
    InfeasiblePotentials { i: usize, j: usize, excess: f64 },
    #[error("samples have sizes {0} and {1}")]
    SizeMismatch(usize, usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("Dikin iteration stopped after {iterations} iterations (cost {cost}, marginal residual {residual:e})")]
    DikinNotConverged {
        iterations: usize,
        cost: f64,
        residual: f64,
    },
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostVariant {
    /// `C_ij = k(a_i, a_j) + k(b_i, b_j) − 2 k(a_i, b_j)`; needs `n = m`.
    PaperCij,
    /// `C_ij = d_k(a_i, b_j)²`.
    HilbertianSq,
    /// `C_ij = d_k(a_i, b_j)`.
    Hilbertian,
    /// Supplied directly.
    Custom,
}

impl CostVariant {
    pub fn name(self) -> &'static str {
        match self {
            CostVariant::PaperCij => "paper_cij",
            CostVariant::HilbertianSq => "hilbertian_sq",
            CostVariant::Hilbertian => "hilbertian",
            CostVariant::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper_cij" => Some(CostVariant::PaperCij),
            "hilbertian_sq" => Some(CostVariant::HilbertianSq),
            "hilbertian" => Some(CostVariant::Hilbertian),
            _ => None,
        }
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    variant: CostVariant,
    negative_entries: usize,
}

impl CostMatrix {
    /// A custom cost from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TransportError> {
        Self::with_variant(rows, cols, data, CostVariant::Custom)
    }

    fn with_variant(rows: usize, cols: usize, data: Vec<f64>, variant: CostVariant) -> Result<Self, TransportError> {
        if rows == 0 || cols == 0 {
            return Err(TransportError::Empty);
        }
        assert_eq!(data.len(), rows * cols, "cost buffer length");
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(TransportError::NonFiniteCost { i: k / cols, j: k % cols });
        }
        let negative_entries = data.iter().filter(|&&v| v < 0.0).count();
        Ok(Self {
            rows,
            cols,
            data,
            variant,
            negative_entries,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TransportError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged cost rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    /// Custom cost `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, TransportError> {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn variant(&self) -> CostVariant {
        self.variant
    }

    /// Number of strictly negative entries; only `paper_cij` can have any.
    pub fn negative_entries(&self) -> usize {
        self.negative_entries
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The same cost with `c` added to every entry.
    pub fn shifted(&self, c: f64) -> Result<Self, TransportError> {
        Self::new(self.rows, self.cols, self.data.iter().map(|v| v + c).collect())
    }
}

/// Kernel cost between samples `a` (rows) and `b` (columns).
pub fn build_cost(spec: &KernelSpec, a: &Points, b: &Points, variant: CostVariant) -> Result<CostMatrix, TransportError> {
    if a.is_empty() || b.is_empty() {
        return Err(TransportError::Empty);
    }
    if a.dim() != b.dim() {
        return Err(TransportError::DimensionMismatch(a.dim(), b.dim()));
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(KernelError::NonFinite.into());
    }
    let (n, m) = (a.len(), b.len());
    let rows: Vec<Result<Vec<f64>, KernelError>> = match variant {
        CostVariant::PaperCij => {
            if n != m {
                return Err(TransportError::PaperCijSizes { n, m });
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    Ok((0..m)
                        .map(|j| {
                            spec.value(a.row(i), a.row(j)) + spec.value(b.row(i), b.row(j))
                                - 2.0 * spec.value(a.row(i), b.row(j))
                        })
                        .collect())
                })
                .collect()
        }
        CostVariant::HilbertianSq | CostVariant::Hilbertian => {
            let diag = spec.diagonal();
            let root = variant == CostVariant::Hilbertian;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            let sq = clamp_radicand(2.0 * diag - 2.0 * spec.value(a.row(i), b.row(j)))?;
                            Ok(if root { sq.sqrt() } else { sq })
                        })
                        .collect()
                })
                .collect()
        }
        CostVariant::Custom => panic!("custom costs are built with CostMatrix::new"),
    };
    let mut data = Vec::with_capacity(n * m);
    for r in rows {
        data.extend(r?);
    }
    CostMatrix::with_variant(n, m, data, variant)
}

/// Absolute-difference cost `|a_i − b_j|` between scalar samples.
pub fn absolute_cost(a: &[f64], b: &[f64]) -> Result<CostMatrix, TransportError> {
    CostMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).abs())
}

/// A coupling with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    gamma: Vec<f64>,
    pub cost: f64,
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
}

impl TransportPlan {
    pub(crate) fn new(
        rows: usize,
        cols: usize,
        gamma: Vec<f64>,
        cost: &CostMatrix,
        source_weights: &[f64],
        target_weights: &[f64],
    ) -> Self {
        let total = gamma.iter().zip(cost.as_slice()).map(|(g, c)| g * c).sum();
        Self {
            rows,
            cols,
            gamma,
            cost: total,
            source_weights: source_weights.to_vec(),
            target_weights: target_weights.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.gamma.chunks_exact(self.cols) {
            for (acc, g) in s.iter_mut().zip(r) {
                *acc += g;
            }
        }
        s
    }

    /// Largest absolute deviation of a row or column sum from its weight.
    pub fn marginal_violation(&self) -> f64 {
        let r = self.row_sums().iter().zip(&self.source_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(&self.target_weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.max(c)
    }

    /// Number of entries strictly above `threshold`.
    pub fn support_size(&self, threshold: f64) -> usize {
        self.gamma.iter().filter(|&&g| g > threshold).count()
    }

    /// Entries `(i, j, γ_ij)` strictly above `threshold`, in row-major order.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(_, &g)| g > threshold)
            .map(|(k, &g)| (k / self.cols, k % self.cols, g))
            .collect()
    }
}

/// Dual variables for the source (`u`) and target (`v`) constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl DualPotentials {
    /// `Σ u_i w_i + Σ v_j w̄_j`.
    pub fn objective(&self, source_weights: &[f64], target_weights: &[f64]) -> f64 {
        let a: f64 = self.u.iter().zip(source_weights).map(|(u, w)| u * w).sum();
        let b: f64 = self.v.iter().zip(target_weights).map(|(v, w)| v * w).sum();
        a + b
    }

    /// Largest `u_i + v_j − C_ij` and where it occurs.
    pub fn max_violation(&self, cost: &CostMatrix) -> (usize, usize, f64) {
        let mut worst = (0, 0, f64::NEG_INFINITY);
        for i in 0..cost.rows() {
            for j in 0..cost.cols() {
                let e = self.u[i] + self.v[j] - cost.get(i, j);
                if e > worst.2 {
                    worst = (i, j, e);
                }
            }
        }
        worst
    }
}

/// Primal cost minus dual objective. Errors when the potentials are not dual
/// feasible.
pub fn duality_gap(plan: &TransportPlan, potentials: &DualPotentials, cost: &CostMatrix) -> Result<f64, TransportError> {
    check_shape(cost, &plan.source_weights, &plan.target_weights)?;
    if plan.rows != cost.rows() || plan.cols != cost.cols() || potentials.u.len() != cost.rows() || potentials.v.len() != cost.cols() {
        return Err(TransportError::Shape {
            rows: cost.rows(),
            cols: cost.cols(),
            source_len: potentials.u.len(),
            target_len: potentials.v.len(),
        });
    }
    let (i, j, excess) = potentials.max_violation(cost);
    if excess > DUAL_FEASIBILITY_TOL * (1.0 + cost.max_abs()) {
        return Err(TransportError::InfeasiblePotentials { i, j, excess });
    }
    let primal: f64 = plan.gamma.iter().zip(cost.as_slice()).map(|(g, c)| g * c).sum();
    Ok(primal - potentials.objective(&plan.source_weights, &plan.target_weights))
}

pub(crate) fn check_shape(cost: &CostMatrix, source: &[f64], target: &[f64]) -> Result<(), TransportError> {
    if source.len() != cost.rows() || target.len() != cost.cols() {
        return Err(TransportError::Shape {
            rows: cost.rows(),
            cols: cost.cols(),
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    Ok(())
}

/// Validates an instance: shapes, finite nonnegative weights, equal masses.
pub(crate) fn check_instance(cost: &CostMatrix, source: &[f64], target: &[f64]) -> Result<(), TransportError> {
    check_shape(cost, source, target)?;
    for (side, w) in [("source", source), ("target", target)] {
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(TransportError::BadWeight { side, index, value });
        }
    }
    let source_total: f64 = source.iter().sum();
    let target_total: f64 = target.iter().sum();
    if (source_total - target_total).abs() > MASS_TOL || source_total <= 0.0 {
        return Err(TransportError::Infeasible {
            source_total,
            target_total,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Points {
        let mut r = rng::seeded(seed);
        Points::from_flat(dim, (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn cost_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let a = random_points(4, 2, 1);
        let c = build_cost(&g, &a, &a, CostVariant::HilbertianSq).unwrap();
        for i in 0..4 {
            assert_eq!(c.get(i, i), 0.0);
        }
        assert_eq!(c.negative_entries(), 0);
        let one = build_cost(&g, &Points::from_scalars(&[0.0]), &Points::from_scalars(&[1.0]), CostVariant::HilbertianSq).unwrap();
        assert_abs_diff_eq!(one.get(0, 0), 2.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        let root = build_cost(&g, &Points::from_scalars(&[0.0]), &Points::from_scalars(&[1.0]), CostVariant::Hilbertian).unwrap();
        assert_abs_diff_eq!(root.get(0, 0), (2.0 - 2.0 * (-1.0f64).exp()).sqrt(), epsilon = 1e-15);
        assert_eq!(
            build_cost(&g, &a, &random_points(3, 2, 2), CostVariant::PaperCij),
            Err(TransportError::PaperCijSizes { n: 4, m: 3 })
        );
    }

    #[test]
    fn paper_cij_matches_direct_terms() {
        let g = KernelSpec::gaussian(0.8).unwrap();
        let a = random_points(5, 3, 3);
        let b = random_points(5, 3, 4);
        let c = build_cost(&g, &a, &b, CostVariant::PaperCij).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let direct = (g.value(a.row(i), a.row(j)) - g.value(a.row(i), b.row(j)))
                    - (g.value(a.row(i), b.row(j)) - g.value(b.row(i), b.row(j)));
                assert_abs_diff_eq!(c.get(i, j), direct, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn instance_validation() {
        let c = CostMatrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
        assert!(matches!(check_instance(&c, &[0.5, 0.5], &[0.5, 0.6]), Err(TransportError::Infeasible { .. })));
        assert!(matches!(check_instance(&c, &[1.5, -0.5], &[0.5, 0.5]), Err(TransportError::BadWeight { .. })));
        assert!(matches!(check_instance(&c, &[1.0], &[0.5, 0.5]), Err(TransportError::Shape { .. })));
        assert!(matches!(CostMatrix::new(1, 1, vec![f64::NAN]), Err(TransportError::NonFiniteCost { i: 0, j: 0 })));
    }

    #[test]
    fn gap_is_linear_in_potentials() {
        let c = CostMatrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
        let w = [0.3, 0.7];
        let t = [0.6, 0.4];
        let sol = solve_simplex(&c, &w, &t).unwrap();
        let gap = duality_gap(&sol.plan, &sol.potentials, &c).unwrap();
        assert!(gap.abs() <= 1e-12);
        let mut p = sol.potentials.clone();
        p.u[0] -= 0.1;
        let g2 = duality_gap(&sol.plan, &p, &c).unwrap();
        assert_abs_diff_eq!(g2 - gap, 0.1 * w[0], epsilon = 1e-15);
        p.u[0] += 5.0;
        assert!(matches!(duality_gap(&sol.plan, &p, &c), Err(TransportError::InfeasiblePotentials { .. })));
    }
}
