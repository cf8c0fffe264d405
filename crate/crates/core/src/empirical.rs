//! Observations, residual models and the empirical measures built from them.
//!
//! For data `z_i = (x_i, y_i)` and a parameter `θ` the residuals are
//! `ε_i = ρ(x_i, y_i, θ)`. Two discrete measures on the joint `(x, ε)` space
//! are compared by the estimator:
//!
//! - the joint measure, mass `1/n` at each `(x_i, ε_i)`;
//! - a product measure, either the full `n²`-point grid `(x_i, ε_j)` with mass
//!   `1/n²`, or `m` resampled pairs `(x_{a(j)}, ε_{b(j)})` with independent
//!   uniform indices.

use rand::Rng as _;
use thiserror::Error;

use crate::points::{Points, PointsError};
use crate::rng;

/// Tolerance on `Σ w = 1` for a weighted point cloud.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmpiricalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("x has {x} rows but y has {y}")]
    RowMismatch { x: usize, y: usize },
    #[error("non-finite value in observation {0}")]
    NonFiniteObservation(usize),
    #[error("theta has {found} entries, model `{model}` expects {expected}")]
    ThetaDimension {
        model: String,
        expected: usize,
        found: usize,
    },
    #[error("model `{model}` needs {what}, dataset has {found}")]
    DataDimension {
        model: String,
        what: String,
        found: usize,
    },
    #[error("residual of observation {index} is not finite at theta {theta:?}")]
    NonFiniteResidual { index: usize, theta: Vec<f64> },
    #[error("{residuals} residuals for {observations} observations")]
    LengthMismatch {
        residuals: usize,
        observations: usize,
    },
    #[error("point dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights must be nonnegative and sum to 1 (sum {sum})")]
    BadWeights { sum: f64 },
    #[error("{points} points but {weights} weights")]
    WeightCount { points: usize, weights: usize },
    #[error("sample size must be >= 1")]
    ZeroSampleSize,
    #[error(transparent)]
    Points(#[from] PointsError),
}

/// One draw of exogenous `x` (dimension L) and endogenous `y` (dimension K).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `n ≥ 1` observations with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Points,
    y: Points,
}

impl Dataset {
    pub fn new(x: Points, y: Points) -> Result<Self, EmpiricalError> {
        if x.len() != y.len() {
            return Err(EmpiricalError::RowMismatch {
                x: x.len(),
                y: y.len(),
            });
        }
        if x.is_empty() {
            return Err(EmpiricalError::EmptyDataset);
        }
        if let Some(i) = (0..x.len()).find(|&i| !x.row(i).iter().chain(y.row(i)).all(|v| v.is_finite())) {
            return Err(EmpiricalError::NonFiniteObservation(i));
        }
        Ok(Self { x, y })
    }

    pub fn from_observations(obs: &[Observation]) -> Result<Self, EmpiricalError> {
        let first = obs.first().ok_or(EmpiricalError::EmptyDataset)?;
        let mut x = Points::new(first.x.len())?;
        let mut y = Points::new(first.y.len())?;
        for o in obs {
            x.push(&o.x)?;
            y.push(&o.y)?;
        }
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exogenous dimension L.
    pub fn x_dim(&self) -> usize {
        self.x.dim()
    }

    /// Endogenous dimension K.
    pub fn y_dim(&self) -> usize {
        self.y.dim()
    }

    pub fn x(&self) -> &Points {
        &self.x
    }

    pub fn y(&self) -> &Points {
        &self.y
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            x: self.x.row(i).to_vec(),
            y: self.y.row(i).to_vec(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(indices),
            y: self.y.select(indices),
        }
    }
}

/// A structural model `ε = ρ(x, y, θ)`.
pub trait ResidualModel: Send + Sync {
    fn name(&self) -> &str;

    fn theta_dim(&self) -> usize;

    /// Rejects datasets whose dimensions the model cannot consume.
    fn check_data(&self, x_dim: usize, y_dim: usize) -> Result<(), EmpiricalError>;

    /// Residual dimension for data with endogenous dimension `y_dim`.
    fn residual_dim(&self, y_dim: usize) -> usize {
        y_dim
    }

    /// Writes `ρ(x, y, θ)` into `out`.
    fn residual(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]);
}

/// `ε_k = y_k − Σ_l θ_l x_l` for every endogenous coordinate `k`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearModel {
    pub x_dim: usize,
}

impl ResidualModel for LinearModel {
    fn name(&self) -> &str {
        "linear"
    }

    fn theta_dim(&self) -> usize {
        self.x_dim
    }

    fn check_data(&self, x_dim: usize, _y_dim: usize) -> Result<(), EmpiricalError> {
        if x_dim != self.x_dim {
            return Err(EmpiricalError::DataDimension {
                model: self.name().into(),
                what: format!("{} exogenous columns", self.x_dim),
                found: x_dim,
            });
        }
        Ok(())
    }

    fn residual(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        let fit: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        for (o, yk) in out.iter_mut().zip(y) {
            *o = yk - fit;
        }
    }
}

/// Separable linear supply and demand.
///
/// `x = (z, w)` are demand and supply shifters, `y = (q, p)` quantity and
/// price, `θ = (θ_Dz, θ_Dp, θ_Sw, θ_Sq)`:
///
/// ```text
/// ε_D = q − (θ_Dz z + θ_Dp p)
/// ε_S = p − (θ_Sw w + θ_Sq q)
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct SupplyDemandModel;

impl SupplyDemandModel {
    pub fn demand(z: f64, p: f64, theta: &[f64]) -> f64 {
        theta[0] * z + theta[1] * p
    }

    pub fn supply(w: f64, q: f64, theta: &[f64]) -> f64 {
        theta[2] * w + theta[3] * q
    }
}

impl ResidualModel for SupplyDemandModel {
    fn name(&self) -> &str {
        "supply_demand"
    }

    fn theta_dim(&self) -> usize {
        4
    }

    fn check_data(&self, x_dim: usize, y_dim: usize) -> Result<(), EmpiricalError> {
        if x_dim != 2 || y_dim != 2 {
            return Err(EmpiricalError::DataDimension {
                model: self.name().into(),
                what: "x = (z, w) and y = (q, p)".into(),
                found: x_dim + y_dim,
            });
        }
        Ok(())
    }

    fn residual(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        let (z, w) = (x[0], x[1]);
        let (q, p) = (y[0], y[1]);
        out[0] = q - Self::demand(z, p, theta);
        out[1] = p - Self::supply(w, q, theta);
    }
}

/// Models available by name from configuration files.
pub const BUILTIN_MODELS: &[&str] = &["linear", "supply_demand", "experiment52"];

/// Looks up a builtin model. `x_dim` sizes the linear model.
pub fn builtin_model(name: &str, x_dim: usize) -> Option<Box<dyn ResidualModel>> {
    match name {
        "linear" => Some(Box::new(LinearModel { x_dim })),
        "supply_demand" => Some(Box::new(SupplyDemandModel)),
        "experiment52" => Some(Box::new(crate::experiment::ExperimentModel)),
        _ => None,
    }
}

/// `ε_i = ρ(x_i, y_i, θ)` for every observation, in order.
pub fn residuals(
    model: &dyn ResidualModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<Points, EmpiricalError> {
    if theta.len() != model.theta_dim() {
        return Err(EmpiricalError::ThetaDimension {
            model: model.name().into(),
            expected: model.theta_dim(),
            found: theta.len(),
        });
    }
    model.check_data(data.x_dim(), data.y_dim())?;
    let k = model.residual_dim(data.y_dim());
    let mut out = vec![0.0; data.len() * k];
    for (i, eps) in out.chunks_exact_mut(k).enumerate() {
        model.residual(data.x.row(i), data.y.row(i), theta, eps);
        if !eps.iter().all(|v| v.is_finite()) {
            return Err(EmpiricalError::NonFiniteResidual {
                index: i,
                theta: theta.to_vec(),
            });
        }
    }
    Ok(Points::from_flat(k, out)?)
}

/// A discrete probability measure: points with nonnegative weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    points: Points,
    weights: Vec<f64>,
}

impl WeightedPointCloud {
    pub fn new(points: Points, weights: Vec<f64>) -> Result<Self, EmpiricalError> {
        if points.len() != weights.len() {
            return Err(EmpiricalError::WeightCount {
                points: points.len(),
                weights: weights.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(EmpiricalError::BadWeights { sum });
        }
        Ok(Self { points, weights })
    }

    /// Equal mass `1/n` on each point.
    pub fn uniform(points: Points) -> Result<Self, EmpiricalError> {
        if points.is_empty() {
            return Err(EmpiricalError::EmptyDataset);
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.windows(2).all(|w| w[0] == w[1])
    }
}

fn concat(x: &[f64], eps: &[f64], out: &mut Vec<f64>) {
    out.extend_from_slice(x);
    out.extend_from_slice(eps);
}

fn check_aligned(data: &Dataset, eps: &Points) -> Result<(), EmpiricalError> {
    if eps.len() != data.len() {
        return Err(EmpiricalError::LengthMismatch {
            residuals: eps.len(),
            observations: data.len(),
        });
    }
    Ok(())
}

/// Joint empirical measure: mass `1/n` at each `(x_i ‖ ε_i)`.
pub fn joint_cloud(data: &Dataset, eps: &Points) -> Result<WeightedPointCloud, EmpiricalError> {
    check_aligned(data, eps)?;
    let dim = data.x_dim() + eps.dim();
    let mut flat = Vec::with_capacity(data.len() * dim);
    for i in 0..data.len() {
        concat(data.x.row(i), eps.row(i), &mut flat);
    }
    WeightedPointCloud::uniform(Points::from_flat(dim, flat)?)
}

/// How the product-of-marginals measure is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductMode {
    /// All `n²` pairs `(x_i, ε_j)`, mass `1/n²` each.
    FullGrid,
    /// `m` pairs with independently resampled indices, mass `1/m` each.
    Resample { m: usize, seed: u64 },
}

impl ProductMode {
    /// Full grid up to `n = 200`, `n` resampled pairs beyond.
    pub fn default_for(n: usize, seed: u64) -> Self {
        if n <= 200 {
            ProductMode::FullGrid
        } else {
            ProductMode::Resample { m: n, seed }
        }
    }
}

/// Index pairs `(a(j), b(j))` for a resampled product measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResampleIndices {
    pub x_index: Vec<usize>,
    pub eps_index: Vec<usize>,
}

impl ResampleIndices {
    /// `m` independent uniform draws of each index from `0..n`.
    pub fn draw(n: usize, m: usize, seed: u64) -> Result<Self, EmpiricalError> {
        if m == 0 || n == 0 {
            return Err(EmpiricalError::ZeroSampleSize);
        }
        let mut r = rng::seeded(seed);
        let mut x_index = Vec::with_capacity(m);
        let mut eps_index = Vec::with_capacity(m);
        for _ in 0..m {
            x_index.push(r.random_range(0..n));
            eps_index.push(r.random_range(0..n));
        }
        Ok(Self { x_index, eps_index })
    }

    pub fn len(&self) -> usize {
        self.x_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_index.is_empty()
    }
}

/// Product-of-marginals measure in the given mode.
pub fn product_cloud(
    data: &Dataset,
    eps: &Points,
    mode: ProductMode,
) -> Result<WeightedPointCloud, EmpiricalError> {
    check_aligned(data, eps)?;
    match mode {
        ProductMode::FullGrid => {
            let n = data.len();
            let dim = data.x_dim() + eps.dim();
            let mut flat = Vec::with_capacity(n * n * dim);
            for i in 0..n {
                for j in 0..n {
                    concat(data.x.row(i), eps.row(j), &mut flat);
                }
            }
            WeightedPointCloud::uniform(Points::from_flat(dim, flat)?)
        }
        ProductMode::Resample { m, seed } => {
            let idx = ResampleIndices::draw(data.len(), m, seed)?;
            product_cloud_from_indices(data, eps, &idx)
        }
    }
}

/// Resampled product measure with pre-drawn indices.
pub fn product_cloud_from_indices(
    data: &Dataset,
    eps: &Points,
    idx: &ResampleIndices,
) -> Result<WeightedPointCloud, EmpiricalError> {
    check_aligned(data, eps)?;
    if idx.is_empty() {
        return Err(EmpiricalError::ZeroSampleSize);
    }
    let dim = data.x_dim() + eps.dim();
    let mut flat = Vec::with_capacity(idx.len() * dim);
    for (&a, &b) in idx.x_index.iter().zip(&idx.eps_index) {
        concat(data.x.row(a), eps.row(b), &mut flat);
    }
    WeightedPointCloud::uniform(Points::from_flat(dim, flat)?)
}

/// `Σ_i w_i 1{point_i ≤ t}` with the coordinatewise, closed-right order.
pub fn empirical_cdf(cloud: &WeightedPointCloud, t: &[f64]) -> Result<f64, EmpiricalError> {
    if t.len() != cloud.dim() {
        return Err(EmpiricalError::DimensionMismatch {
            expected: cloud.dim(),
            found: t.len(),
        });
    }
    let mass = cloud
        .points
        .rows()
        .zip(&cloud.weights)
        .filter(|(p, _)| p.iter().zip(t).all(|(a, b)| a <= b))
        .map(|(_, w)| w)
        .sum::<f64>();
    Ok(mass.min(1.0))
}

/// Bootstrap of whole observations: `m` draws uniformly with replacement.
pub fn resample_dataset(data: &Dataset, m: usize, seed: u64) -> Result<Dataset, EmpiricalError> {
    if m == 0 {
        return Err(EmpiricalError::ZeroSampleSize);
    }
    let mut r = rng::seeded(seed);
    let idx: Vec<usize> = (0..m).map(|_| r.random_range(0..data.len())).collect();
    Ok(data.select(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar_data(x: &[f64], y: &[f64]) -> Dataset {
        Dataset::new(Points::from_scalars(x), Points::from_scalars(y)).unwrap()
    }

    fn random_data(n: usize, l: usize, k: usize, seed: u64) -> Dataset {
        let mut r = rng::seeded(seed);
        let x = (0..n * l).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = (0..n * k).map(|_| r.random_range(-1.0..1.0)).collect();
        Dataset::new(Points::from_flat(l, x).unwrap(), Points::from_flat(k, y).unwrap()).unwrap()
    }

    #[test]
    fn linear_residuals() {
        let data = scalar_data(&[1.0, 2.0, -1.0], &[0.5, 3.0, 4.0]);
        let m = LinearModel { x_dim: 1 };
        assert_eq!(residuals(&m, &data, &[0.0]).unwrap().as_flat(), &[0.5, 3.0, 4.0]);
        let one = scalar_data(&[1.0], &[2.0]);
        assert_eq!(residuals(&m, &one, &[2.0]).unwrap().as_flat(), &[0.0]);
        assert!(matches!(
            residuals(&m, &data, &[1.0, 2.0]),
            Err(EmpiricalError::ThetaDimension { expected: 1, found: 2, .. })
        ));
    }

    #[test]
    fn supply_demand_residuals() {
        // columns: z, w | q, p
        let rows = [[1.0, 0.5, 2.0, 1.5], [-0.3, 2.0, 0.7, 1.1], [0.0, -1.0, 1.2, 0.4]];
        let obs: Vec<Observation> = rows
            .iter()
            .map(|r| Observation {
                x: r[..2].to_vec(),
                y: r[2..].to_vec(),
            })
            .collect();
        let data = Dataset::from_observations(&obs).unwrap();
        let theta = [0.8, -0.5, 1.1, 0.3];
        let eps = residuals(&SupplyDemandModel, &data, &theta).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let (z, w, q, p) = (r[0], r[1], r[2], r[3]);
            let d = 0.8 * z - 0.5 * p;
            let s = 1.1 * w + 0.3 * q;
            assert_eq!(eps.row(i), &[q - d, p - s]);
        }
        assert!(SupplyDemandModel.check_data(1, 2).is_err());
    }

    #[test]
    fn residuals_are_permutation_equivariant() {
        let data = random_data(12, 2, 2, 4);
        let perm: Vec<usize> = (0..12).rev().collect();
        let theta = [0.3, -0.7, 0.2, 0.9];
        let eps = residuals(&SupplyDemandModel, &data, &theta).unwrap();
        let eps_p = residuals(&SupplyDemandModel, &data.select(&perm), &theta).unwrap();
        assert_eq!(eps.select(&perm), eps_p);
    }

    #[test]
    fn non_finite_residual_reported() {
        let data = scalar_data(&[1.0], &[0.0]);
        let m = crate::experiment::ExperimentModel;
        let data2 = Dataset::new(
            Points::from_rows(&[[0.0, 0.0]]).unwrap(),
            Points::from_rows(&[[0.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            residuals(&m, &data2, &[2.5]),
            Err(EmpiricalError::NonFiniteResidual { index: 0, .. })
        ));
        assert!(residuals(&m, &data, &[1.0]).is_err());
    }

    #[test]
    fn joint_cloud_weights() {
        let data = scalar_data(&[1.0], &[2.0]);
        let eps = Points::from_scalars(&[5.0]);
        let c = joint_cloud(&data, &eps).unwrap();
        assert_eq!(c.weights(), &[1.0]);
        assert_eq!(c.points().row(0), &[1.0, 5.0]);

        let data3 = scalar_data(&[1.0, 2.0, 3.0], &[0.0; 3]);
        let c3 = joint_cloud(&data3, &Points::from_scalars(&[0.0; 3])).unwrap();
        assert_eq!(c3.weights(), &[1.0 / 3.0; 3]);
        assert!(matches!(
            joint_cloud(&data3, &Points::from_scalars(&[0.0; 2])),
            Err(EmpiricalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn weights_sum_to_one() {
        for n in 1..=100 {
            let data = random_data(n, 1, 1, n as u64);
            let eps = data.y().clone();
            let total: f64 = joint_cloud(&data, &eps).unwrap().weights().iter().sum();
            assert!((total - 1.0).abs() <= WEIGHT_SUM_TOL, "n = {n}");
            let rs = product_cloud(&data, &eps, ProductMode::Resample { m: n + 3, seed: 1 }).unwrap();
            assert!((rs.weights().iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL);
        }
        for n in [1, 7, 30] {
            let data = random_data(n, 1, 1, n as u64);
            let grid = product_cloud(&data, data.y(), ProductMode::FullGrid).unwrap();
            assert!((grid.weights().iter().sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL);
        }
    }

    #[test]
    fn full_grid_product() {
        let data = scalar_data(&[1.0, 2.0], &[10.0, 20.0]);
        let eps = data.y().clone();
        let grid = product_cloud(&data, &eps, ProductMode::FullGrid).unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid.weights(), &[0.25; 4]);
        assert_eq!(grid.points().row(1), &[1.0, 20.0]);

        let one = scalar_data(&[3.0], &[4.0]);
        assert_eq!(
            product_cloud(&one, one.y(), ProductMode::FullGrid).unwrap(),
            joint_cloud(&one, one.y()).unwrap()
        );
    }

    #[test]
    fn full_grid_marginals_match_empirical_marginals() {
        let data = random_data(9, 2, 2, 8);
        let eps = residuals(&LinearModel { x_dim: 2 }, &data, &[0.4, -0.2]).unwrap();
        let grid = product_cloud(&data, &eps, ProductMode::FullGrid).unwrap();
        let joint = joint_cloud(&data, &eps).unwrap();
        let inf = f64::INFINITY;
        // Evaluate at every sample coordinate on each block with the other block unrestricted.
        for i in 0..data.len() {
            let x = data.x().row(i);
            let e = eps.row(i);
            let tx = [x[0], x[1], inf, inf];
            let te = [inf, inf, e[0], e[1]];
            let count_x = (0..9).filter(|&k| data.x().row(k).iter().zip(x).all(|(a, b)| a <= b)).count();
            let count_e = (0..9).filter(|&k| eps.row(k).iter().zip(e).all(|(a, b)| a <= b)).count();
            assert_abs_diff_eq!(empirical_cdf(&grid, &tx).unwrap(), count_x as f64 / 9.0, epsilon = 1e-14);
            assert_abs_diff_eq!(empirical_cdf(&grid, &te).unwrap(), count_e as f64 / 9.0, epsilon = 1e-14);
            assert_abs_diff_eq!(
                empirical_cdf(&joint, &tx).unwrap(),
                empirical_cdf(&grid, &tx).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn resample_is_reproducible() {
        let data = random_data(140, 2, 2, 3);
        let eps = data.y().clone();
        let mode = ProductMode::Resample { m: 150, seed: 42 };
        let a = product_cloud(&data, &eps, mode).unwrap();
        let b = product_cloud(&data, &eps, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 150);
        let c = product_cloud(&data, &eps, ProductMode::Resample { m: 150, seed: 43 }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cdf_examples() {
        let c = WeightedPointCloud::uniform(Points::from_scalars(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(empirical_cdf(&c, &[f64::INFINITY]).unwrap(), 1.0);
        assert_eq!(empirical_cdf(&c, &[0.5]).unwrap(), 0.0);
        assert_abs_diff_eq!(empirical_cdf(&c, &[2.0]).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(empirical_cdf(&c, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn resample_dataset_contract() {
        let data = random_data(4, 1, 1, 0);
        assert_eq!(resample_dataset(&data, 4, 9).unwrap(), resample_dataset(&data, 4, 9).unwrap());
        let single = scalar_data(&[1.5], &[2.5]);
        let r = resample_dataset(&single, 5, 1).unwrap();
        assert_eq!(r.len(), 5);
        assert!((0..5).all(|i| r.observation(i) == single.observation(0)));
        assert_eq!(resample_dataset(&data, 0, 1), Err(EmpiricalError::ZeroSampleSize));

        let labelled = scalar_data(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        let big = resample_dataset(&labelled, 10_000, 2024).unwrap();
        let zeros = big.x().as_flat().iter().filter(|v| **v == 0.0).count();
        let freq = zeros as f64 / 10_000.0;
        assert!((freq - 0.25).abs() <= 0.02, "frequency {freq}");
    }

    #[test]
    fn cloud_validation() {
        let p = Points::from_scalars(&[0.0, 1.0]);
        assert!(WeightedPointCloud::new(p.clone(), vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            WeightedPointCloud::new(p.clone(), vec![0.7, 0.5]),
            Err(EmpiricalError::BadWeights { .. })
        ));
        assert!(WeightedPointCloud::new(p.clone(), vec![1.5, -0.5]).is_err());
        assert!(WeightedPointCloud::new(p, vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(
            pts in proptest::collection::vec(-3.0f64..3.0, 2..40),
            t in proptest::collection::vec(-3.0f64..3.0, 2),
            dt in proptest::collection::vec(0.0f64..2.0, 2),
        ) {
            let n = pts.len() / 2;
            prop_assume!(n >= 1);
            let cloud = WeightedPointCloud::uniform(Points::from_flat(2, pts[..2 * n].to_vec()).unwrap()).unwrap();
            let t2: Vec<f64> = t.iter().zip(&dt).map(|(a, b)| a + b).collect();
            prop_assert!(empirical_cdf(&cloud, &t).unwrap() <= empirical_cdf(&cloud, &t2).unwrap());
        }
    }
}
