//! Minimum integrated distance estimation for separable simultaneous-equation
//! models.
//!
//! A structural model `ε = ρ(x, y, θ)` is identified by independence of the
//! latent error `ε` from the exogenous `x` at the true parameter. The estimator
//! compares the joint empirical measure of `(x, ε(θ))` with a product-type
//! measure through a kernel mean embedding distance, and optionally through an
//! optimal transport problem whose cost is built from the same kernel.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernels`] | kernel families, Gram matrices, centering, Hilbertian metric |
//! | [`empirical`] | datasets, residual models, weighted point clouds, resampling |
//! | [`mmd`] | biased and unbiased embedding distances, concentration bounds |
//! | [`transport`] | cost matrices, network simplex, Dikin affine scaling, oracles |
//! | [`estimator`] | criterion evaluation, grid and Nelder–Mead search, the LP scheme |
//! | [`inference`] | null spectrum, simulated null, CLT variance, Jacobi eigensolver |
//! | [`experiment`] | the bivariate Gaussian design and figure data emission |

pub mod empirical;
pub mod estimator;
pub mod experiment;
pub mod inference;
pub mod kernels;
pub mod mmd;
pub mod points;
pub mod report;
pub mod rng;
pub mod transport;

mod error;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use points::Points;
