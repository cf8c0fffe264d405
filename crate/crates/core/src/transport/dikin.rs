//! Primal affine scaling (Dikin's method) for the transportation LP.
//!
//! With `D = diag(x²)`, each iteration solves the normal equations
//! `(A D Aᵀ) y = A D c`, forms reduced costs `r = c − Aᵀ y` and moves along
//! `−D r` by a fixed fraction of the distance to the nearest coordinate
//! boundary. Rounding drift off the marginal constraints is then removed by a
//! projection step. One column constraint is redundant and dropped, so `A`
//! has `n + m − 1` rows.
//!
//! Close to a vertex `A D Aᵀ` is too ill-conditioned for the projection to
//! keep up. Once the marginal residual passes the tolerance the last iterate
//! that met the constraints to `1e-10` is returned.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{check_instance, CostMatrix, TransportError, TransportPlan};

/// Marginal residual required before the iteration may stop.
pub const MARGINAL_TOL: f64 = 1e-7;
/// Residual below which an iterate is kept as a fallback.
const CLEAN_TOL: f64 = 1e-10;
const CORRECTION_PASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DikinOptions {
    /// Stop once the relative cost improvement of a step, or the relative
    /// complementarity gap at dual feasible reduced costs, falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the largest feasible step taken.
    pub step_fraction: f64,
}

impl Default for DikinOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            step_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DikinSolution {
    pub plan: TransportPlan,
    pub iterations: usize,
    /// `max |b − A x|` at exit.
    pub marginal_residual: f64,
    /// Number of normal-equation solves that needed regularization.
    pub regularized_solves: usize,
}

struct Normal {
    n: usize,
    m: usize,
}

impl Normal {
    fn dim(&self) -> usize {
        self.n + self.m - 1
    }

    /// `A D Aᵀ` for the reduced constraint set.
    fn matrix(&self, d: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.n, self.m);
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..n {
            for j in 0..m {
                let dij = d[i * m + j];
                a[(i, i)] += dij;
                if j < m - 1 {
                    a[(n + j, n + j)] += dij;
                    a[(i, n + j)] += dij;
                    a[(n + j, i)] += dij;
                }
            }
        }
        a
    }

    /// `A z` for a vector over cells.
    fn apply(&self, z: &[f64]) -> DVector<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = DVector::zeros(self.dim());
        for i in 0..n {
            for j in 0..m {
                let v = z[i * m + j];
                out[i] += v;
                if j < m - 1 {
                    out[n + j] += v;
                }
            }
        }
        out
    }

    /// `(Aᵀ y)_ij = y_i + y_{n+j}`, with the dropped column's multiplier 0.
    fn transpose_at(&self, y: &DVector<f64>, i: usize, j: usize) -> f64 {
        let col = if j < self.m - 1 { y[self.n + j] } else { 0.0 };
        y[i] + col
    }
}

/// Cholesky factor of a symmetric positive semidefinite matrix, with a small
/// ridge added when the plain factorization fails.
fn factor_psd(a: DMatrix<f64>, regularized: &mut usize) -> Cholesky<f64, Dyn> {
    let p = a.nrows();
    let scale = (0..p).map(|k| a[(k, k)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    let mut attempt = a.clone();
    loop {
        if let Some(ch) = attempt.clone().cholesky() {
            return ch;
        }
        *regularized += 1;
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        attempt = a.clone();
        for k in 0..p {
            attempt[(k, k)] += ridge;
        }
    }
}

/// Largest `t` with `x + t·dir ≥ 0`.
fn max_step(x: &[f64], dir: &[f64]) -> f64 {
    x.iter()
        .zip(dir)
        .filter(|(_, &dk)| dk < 0.0)
        .map(|(&xk, &dk)| -xk / dk)
        .fold(f64::INFINITY, f64::min)
}

/// Affine scaling from the product plan `w_source ⊗ w_target`.
pub fn solve_dikin(
    cost: &CostMatrix,
    w_source: &[f64],
    w_target: &[f64],
    options: DikinOptions,
) -> Result<DikinSolution, TransportError> {
    check_instance(cost, w_source, w_target)?;
    if !(options.tol > 0.0) {
        return Err(TransportError::InvalidTolerance(options.tol));
    }
    let (n, m) = (cost.rows(), cost.cols());
    let c = cost.as_slice();
    let sys = Normal { n, m };
    let mut b = DVector::zeros(sys.dim());
    for i in 0..n {
        b[i] = w_source[i];
    }
    for j in 0..m - 1 {
        b[n + j] = w_target[j];
    }
    let residual_of = |x: &[f64]| (&b - sys.apply(x)).amax();

    let rows: Vec<usize> = (0..n).filter(|&i| w_source[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| w_target[j] > 0.0).collect();
    if rows.len() < n || cols.len() < m {
        // Zero-weight rows and columns carry no mass; solve without them.
        let sub = CostMatrix::from_fn(rows.len(), cols.len(), |a, b| cost.get(rows[a], cols[b]))?;
        let ws: Vec<f64> = rows.iter().map(|&i| w_source[i]).collect();
        let wt: Vec<f64> = cols.iter().map(|&j| w_target[j]).collect();
        let inner = solve_dikin(&sub, &ws, &wt, options)?;
        let mut gamma = vec![0.0; n * m];
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                gamma[i * m + j] = inner.plan.get(a, b);
            }
        }
        return Ok(DikinSolution {
            plan: TransportPlan::new(n, m, gamma, cost, w_source, w_target),
            ..inner
        });
    }

    let mut x: Vec<f64> = (0..n * m).map(|k| w_source[k / m] * w_target[k % m]).collect();
    if n == 1 || m == 1 {
        // A single row or column admits exactly one plan.
        let residual = residual_of(&x);
        return Ok(DikinSolution {
            plan: TransportPlan::new(n, m, x, cost, w_source, w_target),
            iterations: 0,
            marginal_residual: residual,
            regularized_solves: 0,
        });
    }

    let c_scale = 1.0 + cost.max_abs();
    let mut regularized = 0;
    let mut clean: Option<(Vec<f64>, usize, f64)> = None;
    let mut value: f64 = x.iter().zip(c).map(|(a, b)| a * b).sum();
    for iter in 1..=options.max_iter {
        let d: Vec<f64> = x.iter().map(|v| v * v).collect();
        let dc: Vec<f64> = d.iter().zip(c).map(|(a, b)| a * b).collect();
        let ch = factor_psd(sys.matrix(&d), &mut regularized);
        let y = ch.solve(&sys.apply(&dc));
        let mut dir = vec![0.0; n * m];
        let (mut gap, mut min_reduced) = (0.0, f64::INFINITY);
        for i in 0..n {
            for j in 0..m {
                let k = i * m + j;
                let r = c[k] - sys.transpose_at(&y, i, j);
                gap += x[k] * r;
                min_reduced = min_reduced.min(r);
                dir[k] = -d[k] * r;
            }
        }
        // Dual feasible reduced costs with a small complementarity gap
        // certify optimality of the current point.
        let residual = residual_of(&x);
        if residual < MARGINAL_TOL && min_reduced >= -options.tol * c_scale && gap <= options.tol * (1.0 + value.abs()) {
            return Ok(DikinSolution {
                plan: TransportPlan::new(n, m, x, cost, w_source, w_target),
                iterations: iter - 1,
                marginal_residual: residual,
                regularized_solves: regularized,
            });
        }
        let alpha = match max_step(&x, &dir) {
            s if s.is_finite() => options.step_fraction * s,
            // No coordinate decreases: the reduced costs vanish on the support.
            _ => 0.0,
        };
        for (xk, dk) in x.iter_mut().zip(&dir) {
            *xk += alpha * dk;
        }

        // −D r lies in the null space of A only up to the conditioning of
        // A D Aᵀ. The drift is pulled back along X Aᵀ z with
        // A X Aᵀ z = b − A x, X = diag(x), which is far better conditioned
        // near a vertex; the step is shortened if it would leave the
        // positive orthant.
        for _ in 0..CORRECTION_PASSES {
            let res = &b - sys.apply(&x);
            if res.amax() < MARGINAL_TOL * 1e-3 {
                break;
            }
            let z = factor_psd(sys.matrix(&x), &mut regularized).solve(&res);
            let mut corr = vec![0.0; n * m];
            for i in 0..n {
                for j in 0..m {
                    let k = i * m + j;
                    corr[k] = x[k] * sys.transpose_at(&z, i, j);
                }
            }
            let beta = (options.step_fraction * max_step(&x, &corr)).min(1.0);
            for (xk, ck) in x.iter_mut().zip(&corr) {
                *xk += beta * ck;
            }
        }
        let new_value: f64 = x.iter().zip(c).map(|(a, b)| a * b).sum();
        let improvement = (value - new_value).abs() / new_value.abs().max(1.0);
        value = new_value;
        let residual = residual_of(&x);
        if improvement < options.tol && residual < MARGINAL_TOL {
            return Ok(DikinSolution {
                plan: TransportPlan::new(n, m, x, cost, w_source, w_target),
                iterations: iter,
                marginal_residual: residual,
                regularized_solves: regularized,
            });
        }
        if residual < CLEAN_TOL {
            clean = Some((x.clone(), iter, residual));
        } else if residual >= MARGINAL_TOL {
            // Near a vertex the normal equations lose all precision and the
            // iterates drift off the constraints; the last clean point is as
            // close to optimal as this arithmetic gets.
            if let Some((x, iterations, residual)) = clean {
                return Ok(DikinSolution {
                    plan: TransportPlan::new(n, m, x, cost, w_source, w_target),
                    iterations,
                    marginal_residual: residual,
                    regularized_solves: regularized,
                });
            }
        }
    }
    Err(TransportError::DikinNotConverged {
        iterations: options.max_iter,
        cost: value,
        residual: residual_of(&x),
    })
}
