//! Criterion values for the samples generated at one parameter value.

use rayon::prelude::*;

use super::EstimatorError;
use crate::empirical::WeightedPointCloud;
use crate::kernels::{par_matrix, KernelSpec};
use crate::mmd::{mmd_biased, mmd_unbiased_sq, mmd_unbiased_sq_with, StatisticKind, StatisticValue, UConvention};
use crate::points::Points;
use crate::transport::{
    build_cost, duality_gap, solve_dikin, solve_simplex, CostVariant, DikinOptions, TransportPlan,
};

/// Largest `n` for which a full-grid product is handled with a kernel that
/// does not factor over the `x` and `ε` blocks (`n⁴` evaluations).
pub const MAX_GRID_DIRECT_N: usize = 100;
/// Largest number of cost entries for a transport problem against a full grid.
pub const MAX_GRID_TRANSPORT_CELLS: usize = 250_000;

/// The product-of-marginals side of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum ProductSample {
    /// A sample with equal weights.
    Sample(Points),
    /// All pairs `(x_a, ε_b)` with mass `1/n²`, kept in factored form.
    Grid { x: Points, eps: Points },
}

/// Joint and product samples at one `θ`. Joint points are `(x ‖ ε)` with the
/// first `x_dim` coordinates exogenous.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSamples {
    pub joint: Points,
    pub product: ProductSample,
    pub x_dim: usize,
}

impl ThetaSamples {
    pub fn product_len(&self) -> usize {
        match &self.product {
            ProductSample::Sample(p) => p.len(),
            ProductSample::Grid { x, .. } => x.len() * x.len(),
        }
    }

    /// The product side as explicit points (`n²` rows for a grid).
    pub fn product_points(&self) -> Points {
        match &self.product {
            ProductSample::Sample(p) => p.clone(),
            ProductSample::Grid { x, eps } => {
                let dim = x.dim() + eps.dim();
                let mut flat = Vec::with_capacity(x.len() * eps.len() * dim);
                for a in x.rows() {
                    for b in eps.rows() {
                        flat.extend_from_slice(a);
                        flat.extend_from_slice(b);
                    }
                }
                Points::from_flat(dim, flat).expect("grid dimension")
            }
        }
    }

    /// Joint and product points together, for bandwidth selection.
    pub fn pooled(&self) -> Points {
        let mut p = self.joint.clone();
        for row in self.product_points().rows() {
            p.push(row).expect("same dimension");
        }
        p
    }
}

/// Block sums for a full grid under a kernel that factors as
/// `k((x,ε),(x',ε')) = k(x,x') k(ε,ε')`.
struct GridSums {
    aa_all: f64,
    aa_diag: f64,
    ab: f64,
    bb_all: f64,
    bb_diag: f64,
    n: f64,
    big_n: f64,
}

fn grid_sums(spec: &KernelSpec, x: &Points, eps: &Points) -> GridSums {
    let n = x.len();
    let kx = par_matrix(n, n, |i, j| spec.value(x.row(i), x.row(j)));
    let ke = par_matrix(n, n, |i, j| spec.value(eps.row(i), eps.row(j)));
    let rx: Vec<f64> = (0..n).map(|i| kx.row(i).iter().sum()).collect();
    let re: Vec<f64> = (0..n).map(|i| ke.row(i).iter().sum()).collect();
    let aa_rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kx[(i, j)] * ke[(i, j)]).sum())
        .collect();
    let aa_all = aa_rows.iter().sum();
    let aa_diag = (0..n).map(|i| kx[(i, i)] * ke[(i, i)]).sum();
    let ab = rx.iter().zip(&re).map(|(a, b)| a * b).sum();
    let bb_all = rx.iter().sum::<f64>() * re.iter().sum::<f64>();
    let diag = spec.diagonal() * spec.diagonal();
    let big_n = (n * n) as f64;
    GridSums {
        aa_all,
        aa_diag,
        ab,
        bb_all,
        bb_diag: big_n * diag,
        n: n as f64,
        big_n,
    }
}

fn grid_direct_guard(n: usize) -> Result<(), EstimatorError> {
    if n > MAX_GRID_DIRECT_N {
        return Err(EstimatorError::GridTooLarge {
            n,
            limit: MAX_GRID_DIRECT_N,
            what: "full-grid statistic with a non-separable kernel",
        });
    }
    Ok(())
}

fn uniform_cloud(p: Points) -> Result<WeightedPointCloud, EstimatorError> {
    Ok(WeightedPointCloud::uniform(p)?)
}

/// `Ŝ_H` between the joint and product samples. `None` selects the paired
/// form for equal sizes and the general form otherwise.
pub fn unbiased_statistic(
    spec: &KernelSpec,
    s: &ThetaSamples,
    convention: Option<UConvention>,
) -> Result<StatisticValue, EstimatorError> {
    match &s.product {
        ProductSample::Sample(p) => Ok(match convention {
            None => mmd_unbiased_sq(spec, &s.joint, p)?,
            Some(c) => mmd_unbiased_sq_with(spec, &s.joint, p, c)?,
        }),
        ProductSample::Grid { x, eps } => {
            let n = x.len();
            if n < 2 {
                return Err(crate::mmd::MmdError::TooFewPoints { n, m: n * n }.into());
            }
            let convention = match convention {
                None => UConvention::PaperGeneral,
                Some(UConvention::PairedH) => {
                    return Err(EstimatorError::PairedSizes { n, m: n * n });
                }
                Some(c) => c,
            };
            if !spec.is_separable() {
                grid_direct_guard(n)?;
                return Ok(mmd_unbiased_sq_with(spec, &s.joint, &s.product_points(), convention)?);
            }
            let g = grid_sums(spec, x, eps);
            let (aa, bb) = (g.aa_all - g.aa_diag, g.bb_all - g.bb_diag);
            let cross = 2.0 * g.ab / (g.n * g.big_n);
            let value = match convention {
                UConvention::UnbiasedGeneral => {
                    aa / (g.n * (g.n - 1.0)) - cross + bb / (g.big_n * (g.big_n - 1.0))
                }
                _ => aa / (g.n * g.n) - cross + bb / (g.big_n * g.big_n),
            };
            Ok(StatisticValue {
                value,
                kind: StatisticKind::UnbiasedS,
                convention: Some(convention),
                n,
                m: n * n,
                kernel: *spec,
            })
        }
    }
}

/// `Ŵ_H` between the joint and product measures.
pub fn biased_statistic(spec: &KernelSpec, s: &ThetaSamples) -> Result<StatisticValue, EstimatorError> {
    match &s.product {
        ProductSample::Sample(p) => Ok(mmd_biased(
            spec,
            &uniform_cloud(s.joint.clone())?,
            &uniform_cloud(p.clone())?,
        )?),
        ProductSample::Grid { x, eps } => {
            let n = x.len();
            if !spec.is_separable() {
                grid_direct_guard(n)?;
                return Ok(mmd_biased(
                    spec,
                    &uniform_cloud(s.joint.clone())?,
                    &uniform_cloud(s.product_points())?,
                )?);
            }
            let g = grid_sums(spec, x, eps);
            let sq = g.aa_all / (g.n * g.n) - 2.0 * g.ab / (g.n * g.big_n) + g.bb_all / (g.big_n * g.big_n);
            Ok(StatisticValue {
                value: sq.max(0.0).sqrt(),
                kind: StatisticKind::BiasedW,
                convention: None,
                n,
                m: n * n,
                kernel: *spec,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpSolver {
    Simplex,
    Dikin,
}

impl LpSolver {
    pub fn name(self) -> &'static str {
        match self {
            LpSolver::Simplex => "simplex",
            LpSolver::Dikin => "dikin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simplex" => Some(LpSolver::Simplex),
            "dikin" => Some(LpSolver::Dikin),
            _ => None,
        }
    }
}

/// Solver bookkeeping for one transport solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverStats {
    pub solver: LpSolver,
    /// Pivots (simplex) or iterations (Dikin).
    pub steps: usize,
    pub support: usize,
    /// Only available from the simplex, which returns dual potentials.
    pub duality_gap: Option<f64>,
    pub marginal_violation: f64,
    pub negative_costs: usize,
}

/// Optimal plan from the joint sample (rows) to the product sample (columns).
pub fn transport_statistic(
    spec: &KernelSpec,
    s: &ThetaSamples,
    variant: CostVariant,
    solver: LpSolver,
    dikin: DikinOptions,
) -> Result<(TransportPlan, SolverStats), EstimatorError> {
    let n = s.joint.len();
    let m = s.product_len();
    if matches!(s.product, ProductSample::Grid { .. }) && n * m > MAX_GRID_TRANSPORT_CELLS {
        return Err(EstimatorError::GridTooLarge {
            n,
            limit: MAX_GRID_TRANSPORT_CELLS,
            what: "transport against a full-grid product (n³ cost entries)",
        });
    }
    let product = s.product_points();
    let cost = build_cost(spec, &s.joint, &product, variant)?;
    let ws = vec![1.0 / n as f64; n];
    let wt = vec![1.0 / m as f64; m];
    let (plan, steps, gap) = match solver {
        LpSolver::Simplex => {
            let sol = solve_simplex(&cost, &ws, &wt)?;
            let gap = duality_gap(&sol.plan, &sol.potentials, &cost)?;
            (sol.plan, sol.pivots, Some(gap))
        }
        LpSolver::Dikin => {
            let sol = solve_dikin(&cost, &ws, &wt, dikin)?;
            (sol.plan, sol.iterations, None)
        }
    };
    let stats = SolverStats {
        solver,
        steps,
        support: plan.support_size(0.0),
        duality_gap: gap,
        marginal_violation: plan.marginal_violation(),
        negative_costs: cost.negative_entries(),
    };
    Ok((plan, stats))
}
