//! The bivariate Gaussian design.
//!
//! `q = (x₁, x₂, ε₁, ε₂)` with `x ~ N((0, −0.5), I)`, `ε(θ)` with means
//! `(0, 0.25 + θ)`, unit variances, `corr(x₂, ε₂) = 1 − θ` and every other
//! cross-correlation zero. At `θ = 1` the blocks are independent. A second,
//! independent sample of size `m` draws `x` and `ε(θ)` separately with the same
//! marginals.
//!
//! Standard normal draws are generated once and the parameter enters only
//! through
//!
//! ```text
//! ε₂(θ) = 0.25 + θ + (1 − θ)(x₂ + 0.5) + sqrt(1 − (1 − θ)²) η₂
//! ```
//!
//! so every criterion is a deterministic function of `θ` for a fixed seed.
//! The covariance is positive semidefinite only for `θ ∈ [0, 2]`.

mod figures;

use std::path::PathBuf;

use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::empirical::{Dataset, EmpiricalError, ResidualModel, WeightedPointCloud};
use crate::estimator::{
    run_scheme, EstimationConfig, EstimationProblem, EstimationResult, EstimatorError, ProductSample, ThetaSamples,
};
use crate::inference::{two_sample_test, TestMethod, TestReport};
use crate::kernels::KernelSpec;
use crate::points::Points;
use crate::rng;

pub use figures::{emit_figures, silverman_kde, FIGURE_FILES};

pub const DEFAULT_N: usize = 140;
pub const DEFAULT_M: usize = 150;
pub const THETA0: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("theta = {0} is outside [0, 2], where the covariance is not positive semidefinite")]
    InvalidTheta(f64),
    #[error("sample sizes must be >= 1 (n = {n}, m = {m})")]
    ZeroSize { n: usize, m: usize },
    #[error("the estimation result carries no transport plan")]
    MissingPlan,
    #[error("plan is {rows}x{cols} but the design has n = {n}, m = {m}")]
    PlanShape { rows: usize, cols: usize, n: usize, m: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

fn check_theta(theta: f64) -> Result<(), ExperimentError> {
    if (0.0..=2.0).contains(&theta) {
        Ok(())
    } else {
        Err(ExperimentError::InvalidTheta(theta))
    }
}

/// `x = (x₁, x₂)` with stored normals `y = (η₁, η₂)`, giving
/// `ε = (η₁, ε₂(θ))`. Registered as `experiment52`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentModel;

impl ExperimentModel {
    pub fn eps2(theta: f64, x2: f64, eta2: f64) -> f64 {
        let r = 1.0 - theta;
        0.25 + theta + r * (x2 + 0.5) + (1.0 - r * r).sqrt() * eta2
    }
}

impl ResidualModel for ExperimentModel {
    fn name(&self) -> &str {
        "experiment52"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn check_data(&self, x_dim: usize, y_dim: usize) -> Result<(), EmpiricalError> {
        if x_dim != 2 {
            return Err(EmpiricalError::DataDimension {
                model: self.name().into(),
                what: "2 exogenous columns".into(),
                found: x_dim,
            });
        }
        if y_dim != 2 {
            return Err(EmpiricalError::DataDimension {
                model: self.name().into(),
                what: "2 endogenous columns".into(),
                found: y_dim,
            });
        }
        Ok(())
    }

    /// NaN outside `θ ∈ [0, 2]`.
    fn residual(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = y[0];
        out[1] = Self::eps2(theta[0], x[1], y[1]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentDesign {
    pub theta: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl Default for ExperimentDesign {
    fn default() -> Self {
        Self {
            theta: THETA0,
            n: DEFAULT_N,
            m: DEFAULT_M,
            seed: 0,
        }
    }
}

impl ExperimentDesign {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        check_theta(self.theta)?;
        if self.n == 0 || self.m == 0 {
            return Err(ExperimentError::ZeroSize { n: self.n, m: self.m });
        }
        Ok(())
    }
}

/// Stored standard normal draws for both samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDraws {
    /// Joint sample: `x` (centered at `(0, −0.5)`) and `η`.
    pub x: Points,
    pub eta: Points,
    /// Independent sample: `x'` and `η'`.
    pub x_ind: Points,
    pub eta_ind: Points,
}

fn normal_block(r: &mut rng::Rng, rows: usize) -> (Points, Points) {
    let mut x = Vec::with_capacity(2 * rows);
    let mut eta = Vec::with_capacity(2 * rows);
    for _ in 0..rows {
        let z: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
        x.extend_from_slice(&[z[0], z[1] - 0.5]);
        eta.extend_from_slice(&[z[2], z[3]]);
    }
    (
        Points::from_flat(2, x).expect("two columns"),
        Points::from_flat(2, eta).expect("two columns"),
    )
}

impl ExperimentDraws {
    /// Joint rows from substream 1 of `seed`, independent rows from substream 2.
    pub fn generate(n: usize, m: usize, seed: u64) -> Result<Self, ExperimentError> {
        if n == 0 || m == 0 {
            return Err(ExperimentError::ZeroSize { n, m });
        }
        let (x, eta) = normal_block(&mut rng::substream(seed, 1), n);
        let (x_ind, eta_ind) = normal_block(&mut rng::substream(seed, 2), m);
        Ok(Self { x, eta, x_ind, eta_ind })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.x_ind.len()
    }

    /// `(x₁, x₂, ε₁, ε₂(θ))` for the joint sample.
    pub fn joint_points(&self, theta: f64) -> Result<Points, ExperimentError> {
        check_theta(theta)?;
        let mut flat = Vec::with_capacity(4 * self.n());
        for (x, e) in self.x.rows().zip(self.eta.rows()) {
            flat.extend_from_slice(&[x[0], x[1], e[0], ExperimentModel::eps2(theta, x[1], e[1])]);
        }
        Ok(Points::from_flat(4, flat).expect("four columns"))
    }

    /// `(x'₁, x'₂, η'₁, 0.25 + θ + η'₂)` for the independent sample.
    pub fn independent_points(&self, theta: f64) -> Result<Points, ExperimentError> {
        check_theta(theta)?;
        let mut flat = Vec::with_capacity(4 * self.m());
        for (x, e) in self.x_ind.rows().zip(self.eta_ind.rows()) {
            flat.extend_from_slice(&[x[0], x[1], e[0], 0.25 + theta + e[1]]);
        }
        Ok(Points::from_flat(4, flat).expect("four columns"))
    }

    /// The joint sample as data for [`ExperimentModel`].
    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.x.clone(), self.eta.clone()).expect("aligned draws")
    }
}

pub fn generate_joint(design: &ExperimentDesign) -> Result<WeightedPointCloud, ExperimentError> {
    design.validate()?;
    let draws = ExperimentDraws::generate(design.n, design.m, design.seed)?;
    let points = draws.joint_points(design.theta)?;
    Ok(WeightedPointCloud::uniform(points).expect("nonempty"))
}

pub fn generate_independent(design: &ExperimentDesign) -> Result<WeightedPointCloud, ExperimentError> {
    design.validate()?;
    let draws = ExperimentDraws::generate(design.n, design.m, design.seed)?;
    let points = draws.independent_points(design.theta)?;
    Ok(WeightedPointCloud::uniform(points).expect("nonempty"))
}

/// Estimation against the independent sample: the joint sample at `θ` is
/// compared with `m` independent draws at the same `θ`.
pub struct ExperimentProblem<'a> {
    pub draws: &'a ExperimentDraws,
}

impl ExperimentProblem<'_> {
    fn domain(theta: &[f64], e: ExperimentError) -> EstimatorError {
        EstimatorError::Domain {
            theta: theta.to_vec(),
            reason: e.to_string(),
        }
    }
}

impl EstimationProblem for ExperimentProblem<'_> {
    fn theta_dim(&self) -> usize {
        1
    }

    fn samples(&self, theta: &[f64]) -> Result<ThetaSamples, EstimatorError> {
        if theta.len() != 1 {
            return Err(EstimatorError::ThetaDimension {
                expected: 1,
                found: theta.len(),
            });
        }
        let joint = self.draws.joint_points(theta[0]).map_err(|e| Self::domain(theta, e))?;
        let product = self.draws.independent_points(theta[0]).map_err(|e| Self::domain(theta, e))?;
        Ok(ThetaSamples {
            joint,
            product: ProductSample::Sample(product),
            x_dim: 2,
        })
    }

    fn null_test(&self, theta: &[f64], spec: &KernelSpec, draws: usize, seed: u64) -> Result<TestReport, EstimatorError> {
        let s = self.samples(theta)?;
        let ProductSample::Sample(b) = &s.product else {
            unreachable!("experiment product is a sample")
        };
        Ok(two_sample_test(spec, &s.joint, b, TestMethod::SpectrumSim, draws, seed)?)
    }
}

/// One full run: draws, search, transport step and stopping rule.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub design: ExperimentDesign,
    pub draws: ExperimentDraws,
    pub result: EstimationResult,
}

pub fn run_experiment(design: &ExperimentDesign, config: &EstimationConfig) -> Result<ExperimentRun, ExperimentError> {
    design.validate()?;
    let draws = ExperimentDraws::generate(design.n, design.m, design.seed)?;
    let result = run_scheme(&ExperimentProblem { draws: &draws }, config)?;
    Ok(ExperimentRun {
        design: *design,
        draws,
        result,
    })
}
