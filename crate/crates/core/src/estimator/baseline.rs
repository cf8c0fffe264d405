//! Integrated squared c.d.f. distance between the joint and product
//! empirical measures, integrated against the empirical measure of the
//! sample itself:
//!
//! ```text
//! M̂(θ) = (1/n) Σ_i [H_n(x_i, ε_i) − F_n(x_i) G_n(ε_i)]²
//! ```

use rayon::prelude::*;

use super::EstimatorError;
use crate::empirical::{residuals, Dataset, ResidualModel};
use crate::points::Points;

fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// `M̂` for joint points `(x ‖ ε)` whose first `x_dim` coordinates are `x`.
pub fn bw_baseline_points(joint: &Points, x_dim: usize) -> f64 {
    let n = joint.len();
    if n == 0 {
        return 0.0;
    }
    let inv = 1.0 / n as f64;
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, ei) = joint.row(i).split_at(x_dim);
            let (mut h, mut f, mut g) = (0usize, 0usize, 0usize);
            for j in 0..n {
                let (xj, ej) = joint.row(j).split_at(x_dim);
                let bx = leq(xj, xi);
                let be = leq(ej, ei);
                f += bx as usize;
                g += be as usize;
                h += (bx && be) as usize;
            }
            let d = h as f64 * inv - (f as f64 * inv) * (g as f64 * inv);
            d * d
        })
        .collect();
    terms.iter().sum::<f64>() * inv
}

/// `M̂(θ)` for a residual model.
pub fn bw_baseline(theta: &[f64], model: &dyn ResidualModel, data: &Dataset) -> Result<f64, EstimatorError> {
    let eps = residuals(model, data, theta)?;
    let mut joint = Points::new(data.x_dim() + eps.dim())?;
    let mut row = Vec::new();
    for i in 0..data.len() {
        row.clear();
        row.extend_from_slice(data.x().row(i));
        row.extend_from_slice(eps.row(i));
        joint.push(&row)?;
    }
    Ok(bw_baseline_points(&joint, data.x_dim()))
}
