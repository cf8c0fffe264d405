//! Cyclic Jacobi eigenvalue iteration for dense symmetric matrices.

use nalgebra::DMatrix;

use super::InferenceError;

/// Absolute asymmetry allowed, relative to `max(1, max |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Iteration stops once the off-diagonal Frobenius norm is below this
/// fraction of `‖A‖_F`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, sorted nonincreasing.
pub fn eigen_symmetric(matrix: &DMatrix<f64>) -> Result<Vec<f64>, InferenceError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(InferenceError::NotSquare {
            rows: n,
            cols: matrix.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::NonFinite);
    }
    let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            let gap = (matrix[(i, j)] - matrix[(j, i)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(InferenceError::Asymmetric { row: i, col: j, gap });
            }
        }
    }

    // Row-major working copy, symmetrised.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
        }
    }
    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = OFF_DIAGONAL_TOL * frob;

    let off_norm = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > target {
        if sweeps == MAX_SWEEPS {
            return Err(InferenceError::NotConverged { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                rotate(&mut a, n, p, q, apq);
            }
        }
    }

    let mut values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

/// Applies the rotation that annihilates `a[p][q]`.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, apq: f64) {
    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * n + p] -= t * apq;
    a[q * n + q] += t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[r * n + p];
        let arq = a[r * n + q];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        a[r * n + p] = new_rp;
        a[p * n + r] = new_rp;
        a[r * n + q] = new_rq;
        a[q * n + r] = new_rq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::seeded(seed);
        let b = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        &b + b.transpose()
    }

    #[test]
    fn small_examples() {
        assert_eq!(eigen_symmetric(&DMatrix::identity(3, 3)).unwrap(), vec![1.0, 1.0, 1.0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(eigen_symmetric(&d).unwrap(), vec![3.0, 2.0, 1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = eigen_symmetric(&m).unwrap();
        assert_abs_diff_eq!(e[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(eigen_symmetric(&m), Err(InferenceError::Asymmetric { .. })));
        assert!(matches!(
            eigen_symmetric(&DMatrix::zeros(2, 3)),
            Err(InferenceError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn trace_identity_and_agreement_with_nalgebra() {
        for (n, seed) in [(1, 1), (4, 2), (17, 3), (60, 4)] {
            let m = random_symmetric(n, seed);
            let ours = eigen_symmetric(&m).unwrap();
            let frob = m.norm();
            assert_abs_diff_eq!(ours.iter().sum::<f64>(), m.trace(), epsilon = 1e-10 * frob);
            let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.iter().zip(&theirs) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10 * frob);
            }
        }
    }
}
