//! Kernel mean embedding distances between two samples.
//!
//! For measures `H` and `P` on the joint space, the embedding distance is
//! `W_H = ‖∫k(·,q)dH − ∫k(·,q)dP‖_H`. Its plug-in value on discrete measures
//! is the weighted V-statistic computed by [`mmd_biased`]; [`mmd_unbiased_sq`]
//! estimates `W_H²` with the diagonal terms removed.
//!
//! Sample A plays the role of the joint measure and sample B of the product
//! measure; both live in the same space, so `k(a_i, b_j)` is the kernel
//! between the i-th point of A and the j-th point of B.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::empirical::WeightedPointCloud;
use crate::kernels::{KernelError, KernelSpec};
use crate::points::Points;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MmdError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unbiased statistic needs at least 2 points per sample (got {n} and {m})")]
    TooFewPoints { n: usize, m: usize },
    #[error("empty sample")]
    Empty,
    #[error("bound argument {name} = {value} out of range")]
    InvalidBoundArgument { name: &'static str, value: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticKind {
    /// `Ŵ_H`, the embedding distance itself (not squared).
    BiasedW,
    /// `Ŝ_H`, an estimate of the squared distance that may be negative.
    UnbiasedS,
}

/// Normalization of the diagonal-free double sums in `Ŝ_H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UConvention {
    /// Equal sizes, paired: `1/(n(n−1)) Σ_{i≠j} h(q_i, q_j)`.
    PairedH,
    /// `1/n_a² Σ_{i≠j} k(a_i,a_j) − 2/(n_a n_b) Σ k(a_i,b_j) + 1/n_b² Σ_{i≠j} k(b_i,b_j)`.
    PaperGeneral,
    /// As [`UConvention::PaperGeneral`] with `1/(n(n−1))` on the within-sample sums.
    UnbiasedGeneral,
}

impl UConvention {
    pub fn name(self) -> &'static str {
        match self {
            UConvention::PairedH => "paired_h",
            UConvention::PaperGeneral => "general_1_over_n2",
            UConvention::UnbiasedGeneral => "general_unbiased",
        }
    }
}

impl fmt::Display for UConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticValue {
    pub value: f64,
    pub kind: StatisticKind,
    /// Set for [`StatisticKind::UnbiasedS`].
    pub convention: Option<UConvention>,
    pub n: usize,
    pub m: usize,
    pub kernel: KernelSpec,
}

/// `Σ_i wa_i Σ_j wb_j k(a_i, b_j)`, optionally skipping `j == i`.
///
/// Rows are summed in parallel, each sequentially, and the row totals are
/// then added in index order, so the result is bitwise independent of the
/// thread count.
pub(crate) fn weighted_sum(
    spec: &KernelSpec,
    a: &Points,
    wa: Option<&[f64]>,
    b: &Points,
    wb: Option<&[f64]>,
    skip_diagonal: bool,
) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            let mut s = 0.0;
            for j in 0..b.len() {
                if skip_diagonal && i == j {
                    continue;
                }
                let w = wb.map_or(1.0, |w| w[j]);
                s += w * spec.value(ai, b.row(j));
            }
            wa.map_or(s, |w| w[i] * s)
        })
        .collect();
    rows.iter().sum()
}

fn check_dims(a: &Points, b: &Points) -> Result<(), MmdError> {
    if a.is_empty() || b.is_empty() {
        return Err(MmdError::Empty);
    }
    if a.dim() != b.dim() {
        return Err(MmdError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// `Ŵ_H` between two weighted clouds:
/// `sqrt(ΣΣ w_i w_j k(a_i,a_j) + ΣΣ v_i v_j k(b_i,b_j) − 2 ΣΣ w_i v_j k(a_i,b_j))`.
pub fn mmd_biased(
    spec: &KernelSpec,
    a: &WeightedPointCloud,
    b: &WeightedPointCloud,
) -> Result<StatisticValue, MmdError> {
    check_dims(a.points(), b.points())?;
    let (pa, wa) = (a.points(), Some(a.weights()));
    let (pb, wb) = (b.points(), Some(b.weights()));
    let saa = weighted_sum(spec, pa, wa, pa, wa, false);
    let sbb = weighted_sum(spec, pb, wb, pb, wb, false);
    let sab = weighted_sum(spec, pa, wa, pb, wb, false);
    // A V-statistic of a positive definite kernel is nonnegative up to rounding.
    let sq = (saa + sbb - 2.0 * sab).max(0.0);
    Ok(StatisticValue {
        value: sq.sqrt(),
        kind: StatisticKind::BiasedW,
        convention: None,
        n: a.len(),
        m: b.len(),
        kernel: *spec,
    })
}

/// `h(q_i, q_j) = k(a_i,a_j) + k(b_i,b_j) − k(a_i,b_j) − k(a_j,b_i)`.
pub fn h_statistic(
    spec: &KernelSpec,
    a_i: &[f64],
    a_j: &[f64],
    b_i: &[f64],
    b_j: &[f64],
) -> Result<f64, MmdError> {
    let d = a_i.len();
    for p in [a_j, b_i, b_j] {
        if p.len() != d {
            return Err(MmdError::DimensionMismatch(d, p.len()));
        }
    }
    Ok(h_unchecked(spec, a_i, a_j, b_i, b_j))
}

#[inline]
pub(crate) fn h_unchecked(spec: &KernelSpec, a_i: &[f64], a_j: &[f64], b_i: &[f64], b_j: &[f64]) -> f64 {
    // Grouped so that swapping i and j gives the same bits.
    (spec.value(a_i, a_j) + spec.value(b_i, b_j)) - (spec.value(a_i, b_j) + spec.value(a_j, b_i))
}

/// `Ŝ_H` with the default convention: paired `h`-form when the sizes agree,
/// the general form otherwise.
pub fn mmd_unbiased_sq(spec: &KernelSpec, a: &Points, b: &Points) -> Result<StatisticValue, MmdError> {
    let convention = if a.len() == b.len() {
        UConvention::PairedH
    } else {
        UConvention::PaperGeneral
    };
    mmd_unbiased_sq_with(spec, a, b, convention)
}

/// `Ŝ_H` under an explicit convention. [`UConvention::PairedH`] requires
/// equal sample sizes.
pub fn mmd_unbiased_sq_with(
    spec: &KernelSpec,
    a: &Points,
    b: &Points,
    convention: UConvention,
) -> Result<StatisticValue, MmdError> {
    check_dims(a, b)?;
    let (n, m) = (a.len(), b.len());
    if n < 2 || m < 2 {
        return Err(MmdError::TooFewPoints { n, m });
    }
    let saa = weighted_sum(spec, a, None, a, None, true);
    let sbb = weighted_sum(spec, b, None, b, None, true);
    let (nf, mf) = (n as f64, m as f64);
    let value = match convention {
        UConvention::PairedH => {
            if n != m {
                return Err(MmdError::DimensionMismatch(n, m));
            }
            let sab = weighted_sum(spec, a, None, b, None, true);
            (saa + sbb - 2.0 * sab) / (nf * (nf - 1.0))
        }
        UConvention::PaperGeneral => {
            let sab = weighted_sum(spec, a, None, b, None, false);
            saa / (nf * nf) - 2.0 * sab / (nf * mf) + sbb / (mf * mf)
        }
        UConvention::UnbiasedGeneral => {
            let sab = weighted_sum(spec, a, None, b, None, false);
            saa / (nf * (nf - 1.0)) - 2.0 * sab / (nf * mf) + sbb / (mf * (mf - 1.0))
        }
    };
    Ok(StatisticValue {
        value,
        kind: StatisticKind::UnbiasedS,
        convention: Some(convention),
        n,
        m,
        kernel: *spec,
    })
}

/// Thresholds of the deviation inequality for `Ŵ_H`:
/// `P(Ŵ_H − W_H > bias + ε) ≤ tail_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationBound {
    /// `2 (sqrt(C_k/m) + sqrt(C_k/n))`
    pub bias: f64,
    /// `2 exp(−ε² m n / (2 C_k (m + n)))`
    pub tail_prob: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, MmdError> {
    if value > 0.0 && !value.is_nan() {
        Ok(value)
    } else {
        Err(MmdError::InvalidBoundArgument { name, value })
    }
}

pub fn deviation_bound(c_k: f64, n: usize, m: usize, eps: f64) -> Result<DeviationBound, MmdError> {
    positive("C_k", c_k)?;
    positive("n", n as f64)?;
    positive("m", m as f64)?;
    positive("eps", eps)?;
    let (nf, mf) = (n as f64, m as f64);
    let bias = 2.0 * ((c_k / mf).sqrt() + (c_k / nf).sqrt());
    let tail_prob = 2.0 * (-eps * eps * mf * nf / (2.0 * c_k * (mf + nf))).exp();
    Ok(DeviationBound { bias, tail_prob })
}

/// Tail bound `P(Ŝ_H − S_H > ε) ≤ exp(−ε² n / (8 C_k²))`.
pub fn hoeffding_bound(c_k: f64, n: usize, eps: f64) -> Result<f64, MmdError> {
    positive("C_k", c_k)?;
    positive("n", n as f64)?;
    if !(eps >= 0.0) {
        return Err(MmdError::InvalidBoundArgument { name: "eps", value: eps });
    }
    Ok((-eps * eps * n as f64 / (8.0 * c_k * c_k)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_points(n: usize, dim: usize, shift: f64, seed: u64) -> Points {
        let mut r = rng::seeded(seed);
        let data = (0..n * dim).map(|_| r.sample::<f64, _>(StandardNormal) + shift).collect();
        Points::from_flat(dim, data).unwrap()
    }

    fn random_weights(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        let mut w: Vec<f64> = w.iter().map(|v| v / s).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        w
    }

    /// Triple-loop reference for the weighted V-statistic.
    fn brute_biased(spec: &KernelSpec, a: &WeightedPointCloud, b: &WeightedPointCloud) -> f64 {
        let mut total = 0.0;
        let (pa, pb) = (a.points(), b.points());
        for i in 0..a.len() {
            for j in 0..a.len() {
                total += a.weights()[i] * a.weights()[j] * spec.value(pa.row(i), pa.row(j));
            }
        }
        for i in 0..b.len() {
            for j in 0..b.len() {
                total += b.weights()[i] * b.weights()[j] * spec.value(pb.row(i), pb.row(j));
            }
        }
        for i in 0..a.len() {
            for j in 0..b.len() {
                total -= 2.0 * a.weights()[i] * b.weights()[j] * spec.value(pa.row(i), pb.row(j));
            }
        }
        total.max(0.0).sqrt()
    }

    fn brute_general(spec: &KernelSpec, a: &Points, b: &Points) -> f64 {
        let (n, m) = (a.len() as f64, b.len() as f64);
        let mut aa = 0.0;
        let mut bb = 0.0;
        let mut ab = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                if i != j {
                    aa += spec.value(a.row(i), a.row(j));
                }
            }
            for j in 0..b.len() {
                ab += spec.value(a.row(i), b.row(j));
            }
        }
        for i in 0..b.len() {
            for j in 0..b.len() {
                if i != j {
                    bb += spec.value(b.row(i), b.row(j));
                }
            }
        }
        aa / (n * n) - 2.0 * ab / (n * m) + bb / (m * m)
    }

    #[test]
    fn biased_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let a = WeightedPointCloud::uniform(random_points(7, 2, 0.0, 1)).unwrap();
        assert_eq!(mmd_biased(&g, &a, &a).unwrap().value, 0.0);

        let p0 = WeightedPointCloud::uniform(Points::from_scalars(&[0.0])).unwrap();
        let p1 = WeightedPointCloud::uniform(Points::from_scalars(&[1.0])).unwrap();
        let v = mmd_biased(&g, &p0, &p1).unwrap();
        assert_abs_diff_eq!(v.value, (2.0 - 2.0 * (-1.0f64).exp()).sqrt(), epsilon = 1e-15);
        assert_eq!(v.kind, StatisticKind::BiasedW);

        let q = WeightedPointCloud::uniform(Points::from_rows(&[[0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(mmd_biased(&g, &p0, &q), Err(MmdError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn biased_matches_brute_force() {
        let g = KernelSpec::gaussian(0.4).unwrap();
        for seed in 0..10 {
            let a = WeightedPointCloud::new(random_points(10, 3, 0.0, seed), random_weights(10, seed + 100)).unwrap();
            let b = WeightedPointCloud::new(random_points(12, 3, 0.5, seed + 50), random_weights(12, seed + 200)).unwrap();
            let fast = mmd_biased(&g, &a, &b).unwrap().value;
            assert_abs_diff_eq!(fast, brute_biased(&g, &a, &b), epsilon = 1e-12);
        }
    }

    #[test]
    fn h_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(h_statistic(&g, &[0.3], &[1.2], &[0.3], &[1.2]).unwrap(), 0.0);
        assert_eq!(h_statistic(&g, &[0.5], &[0.5], &[0.5], &[0.5]).unwrap(), 0.0);
        let e = |d: f64| (-d * d).exp();
        // a_i=0, a_j=1, b_i=2, b_j=3
        let expected = e(1.0) + e(1.0) - e(3.0) - e(1.0);
        assert_abs_diff_eq!(h_statistic(&g, &[0.0], &[1.0], &[2.0], &[3.0]).unwrap(), expected, epsilon = 1e-15);
        assert_eq!(
            h_statistic(&g, &[0.0], &[1.0], &[2.0], &[3.0]).unwrap(),
            h_statistic(&g, &[1.0], &[0.0], &[3.0], &[2.0]).unwrap()
        );
        assert!(h_statistic(&g, &[0.0], &[1.0, 0.0], &[2.0], &[3.0]).is_err());
    }

    #[test]
    fn unbiased_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let a = random_points(9, 2, 0.0, 3);
        let s = mmd_unbiased_sq(&g, &a, &a).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.convention, Some(UConvention::PairedH));
        let two = Points::from_scalars(&[0.0, 1.0]);
        assert_eq!(mmd_unbiased_sq(&g, &two, &two).unwrap().value, 0.0);
        assert_eq!(
            mmd_unbiased_sq(&g, &Points::from_scalars(&[0.0]), &two),
            Err(MmdError::TooFewPoints { n: 1, m: 2 })
        );
    }

    #[test]
    fn unbiased_matches_brute_force() {
        let g = KernelSpec::gaussian(0.3).unwrap();
        for seed in 0..10 {
            let a = random_points(8, 2, 0.0, seed);
            let b = random_points(10, 2, 0.3, seed + 17);
            let s = mmd_unbiased_sq(&g, &a, &b).unwrap();
            assert_eq!(s.convention, Some(UConvention::PaperGeneral));
            assert_abs_diff_eq!(s.value, brute_general(&g, &a, &b), epsilon = 1e-12);
        }
    }

    #[test]
    fn paired_form_equals_h_average() {
        let g = KernelSpec::laplacian(0.8).unwrap();
        for seed in 0..5 {
            let n = 6 + seed as usize;
            let a = random_points(n, 2, 0.0, seed);
            let b = random_points(n, 2, 0.2, seed + 9);
            let mut h_sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        h_sum += h_statistic(&g, a.row(i), a.row(j), b.row(i), b.row(j)).unwrap();
                    }
                }
            }
            let via_h = h_sum / (n * (n - 1)) as f64;
            assert_abs_diff_eq!(mmd_unbiased_sq(&g, &a, &b).unwrap().value, via_h, epsilon = 1e-13);
        }
    }

    #[test]
    fn unbiased_lower_bound() {
        let g = KernelSpec::gaussian(2.0).unwrap();
        for seed in 0..30 {
            let n = 2 + (seed as usize % 7);
            let m = 2 + (seed as usize % 5);
            let a = random_points(n, 2, 0.0, seed);
            let b = random_points(m, 2, 0.0, seed + 1000);
            let c = g.bound();
            let s = mmd_unbiased_sq(&g, &a, &b).unwrap().value;
            assert!(s >= -2.0 * c / n.min(m) as f64, "seed {seed}: {s}");
        }
    }

    #[test]
    fn biased_minus_unbiased_shrinks_with_n() {
        let g = KernelSpec::gaussian(0.5).unwrap();
        let median_gap = |n: usize| {
            let mut gaps: Vec<f64> = (0..100)
                .map(|r| {
                    let a = random_points(n, 2, 0.0, 10_000 + r);
                    let b = random_points(n, 2, 0.0, 20_000 + r);
                    let ca = WeightedPointCloud::uniform(a.clone()).unwrap();
                    let cb = WeightedPointCloud::uniform(b.clone()).unwrap();
                    let w = mmd_biased(&g, &ca, &cb).unwrap().value;
                    (w * w - mmd_unbiased_sq(&g, &a, &b).unwrap().value).abs()
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            gaps[50]
        };
        let (g25, g50, g100) = (median_gap(25), median_gap(50), median_gap(100));
        assert!(g25 > g50 && g50 > g100, "{g25} {g50} {g100}");
    }

    #[test]
    fn deviation_bound_examples() {
        let b = deviation_bound(1.0, 100, 100, 0.1).unwrap();
        assert_abs_diff_eq!(b.bias, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(b.tail_prob, 2.0 * (-0.25f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.tail_prob, 1.5576, epsilon = 1e-4);
        assert_eq!(deviation_bound(1.0, 10, 10, 1e6).unwrap().tail_prob, 0.0);
        let big = deviation_bound(1.0, 10_000, 10_000, 0.1).unwrap();
        assert_abs_diff_eq!(big.tail_prob, 2.0 * (-25.0f64).exp(), epsilon = 1e-24);
        assert!(deviation_bound(0.0, 1, 1, 0.1).is_err());
        assert!(deviation_bound(1.0, 0, 1, 0.1).is_err());
        assert!(deviation_bound(1.0, 1, 1, 0.0).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        // ε² n = 8 C_k²
        assert_abs_diff_eq!(hoeffding_bound(1.0, 8, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(hoeffding_bound(1.0, 10, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(hoeffding_bound(1.0, 1000, 0.2).unwrap(), (-5.0f64).exp(), epsilon = 1e-15);
        assert!(hoeffding_bound(-1.0, 10, 0.1).is_err());
    }
}
