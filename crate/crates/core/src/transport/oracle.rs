//! Exhaustive reference solvers for small instances.

use super::{check_instance, CostMatrix, TransportError};

/// Largest `n · m` accepted by vertex enumeration.
pub const MAX_BRUTE_FORCE_CELLS: usize = 25;
/// Largest `n` accepted by permutation enumeration.
pub const MAX_PERMUTATION_SIZE: usize = 9;

const UNIFORM_TOL: f64 = 1e-15;

fn is_uniform(w: &[f64]) -> bool {
    let u = 1.0 / w.len() as f64;
    w.iter().all(|&x| (x - u).abs() <= UNIFORM_TOL)
}

/// Exact optimal cost by enumeration.
///
/// Square instances with uniform weights enumerate all `n!` matchings (the
/// vertices of the Birkhoff polytope, scaled by `1/n`). Other instances
/// enumerate spanning trees of the bipartite graph, solve each tree's flows
/// and keep the cheapest nonnegative one; every vertex of the
/// transportation polytope arises this way.
pub fn brute_force_ot(cost: &CostMatrix, w_source: &[f64], w_target: &[f64]) -> Result<f64, TransportError> {
    check_instance(cost, w_source, w_target)?;
    let (n, m) = (cost.rows(), cost.cols());
    if n == m && is_uniform(w_source) && is_uniform(w_target) && n <= MAX_PERMUTATION_SIZE {
        return Ok(best_matching(cost) / n as f64);
    }
    if n * m > MAX_BRUTE_FORCE_CELLS {
        return Err(TransportError::TooLarge { rows: n, cols: m });
    }
    let mut search = TreeSearch {
        cost,
        w_source,
        w_target,
        n,
        m,
        chosen: Vec::with_capacity(n + m - 1),
        best: f64::INFINITY,
    };
    let parent: Vec<usize> = (0..n + m).collect();
    search.descend(0, parent);
    Ok(search.best)
}

fn best_matching(cost: &CostMatrix) -> f64 {
    fn recurse(cost: &CostMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        let n = cost.rows();
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                recurse(cost, row + 1, used, acc + cost.get(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    recurse(cost, 0, &mut vec![false; cost.rows()], 0.0, &mut best);
    best
}

struct TreeSearch<'a> {
    cost: &'a CostMatrix,
    w_source: &'a [f64],
    w_target: &'a [f64],
    n: usize,
    m: usize,
    chosen: Vec<usize>,
    best: f64,
}

fn find(parent: &[usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

impl TreeSearch<'_> {
    /// Decides cells `cell..` given the current forest `parent`.
    fn descend(&mut self, cell: usize, parent: Vec<usize>) {
        let need = self.n + self.m - 1;
        if self.chosen.len() == need {
            self.evaluate();
            return;
        }
        let total = self.n * self.m;
        if cell == total || total - cell < need - self.chosen.len() {
            return;
        }
        let (i, j) = (cell / self.m, cell % self.m);
        let (ri, rj) = (find(&parent, i), find(&parent, self.n + j));
        if ri != rj {
            let mut joined = parent.clone();
            joined[ri] = rj;
            self.chosen.push(cell);
            self.descend(cell + 1, joined);
            self.chosen.pop();
        }
        self.descend(cell + 1, parent);
    }

    /// Flows on the current spanning tree by peeling leaves.
    fn evaluate(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut mass: Vec<f64> = self.w_source.iter().chain(self.w_target).copied().collect();
        let mut degree = vec![0usize; n + m];
        for &c in &self.chosen {
            degree[c / m] += 1;
            degree[n + c % m] += 1;
        }
        let mut open: Vec<bool> = vec![true; self.chosen.len()];
        let mut total = 0.0;
        for _ in 0..self.chosen.len() {
            let Some((slot, leaf)) = self.chosen.iter().enumerate().filter(|(s, _)| open[*s]).find_map(|(s, &c)| {
                let (a, b) = (c / m, n + c % m);
                if degree[a] == 1 {
                    Some((s, a))
                } else if degree[b] == 1 {
                    Some((s, b))
                } else {
                    None
                }
            }) else {
                return;
            };
            let c = self.chosen[slot];
            let (a, b) = (c / m, n + c % m);
            let other = if leaf == a { b } else { a };
            let flow = mass[leaf];
            if flow < -1e-14 {
                return;
            }
            mass[other] -= flow;
            mass[leaf] = 0.0;
            degree[a] -= 1;
            degree[b] -= 1;
            open[slot] = false;
            total += flow * self.cost.get(c / m, c % m);
        }
        self.best = self.best.min(total);
    }
}

/// Optimal cost between equal-size, equal-weight scalar samples under
/// `|a − b|`: the mean absolute difference of the sorted samples.
pub fn ot_1d_sorted(a: &[f64], b: &[f64]) -> Result<f64, TransportError> {
    if a.len() != b.len() {
        return Err(TransportError::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(TransportError::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::{absolute_cost, solve_simplex};
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn small_examples() {
        let c = CostMatrix::from_rows(&[[4.0]]).unwrap();
        assert_eq!(brute_force_ot(&c, &[1.0], &[1.0]).unwrap(), 4.0);
        let c = CostMatrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]).unwrap();
        assert_eq!(brute_force_ot(&c, &[0.5, 0.5], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(ot_1d_sorted(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ot_1d_sorted(&[3.0, -1.0], &[-1.0, 3.0]).unwrap(), 0.0);
        assert!(ot_1d_sorted(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn two_by_three_vertex_enumeration() {
        // Rows (0.5, 0.5), columns (1/3, 1/3, 1/3): every vertex has one split column.
        let c = CostMatrix::from_rows(&[[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]]).unwrap();
        let t = [1.0 / 3.0; 3];
        let v = brute_force_ot(&c, &[0.5, 0.5], &t).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        let s = solve_simplex(&c, &[0.5, 0.5], &t).unwrap();
        assert_abs_diff_eq!(v, s.plan.cost, epsilon = 1e-12);
    }

    #[test]
    fn tree_enumeration_agrees_with_matchings() {
        let mut r = rng::seeded(12);
        for n in 2..=4 {
            let c = CostMatrix::from_fn(n, n, |_, _| r.random_range(0.0..1.0)).unwrap();
            let w = vec![1.0 / n as f64; n];
            let by_perm = brute_force_ot(&c, &w, &w).unwrap();
            // Nudge one weight pair so the permutation path is skipped.
            let mut ws = w.clone();
            ws[0] += 1e-14;
            ws[1] -= 1e-14;
            let by_tree = brute_force_ot(&c, &ws, &w).unwrap();
            assert_abs_diff_eq!(by_perm, by_tree, epsilon = 1e-12);
        }
    }

    #[test]
    fn sorted_matching_matches_simplex() {
        let mut r = rng::seeded(4);
        let a: Vec<f64> = (0..30).map(|_| r.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| r.random_range(-1.0..5.0)).collect();
        let w = vec![1.0 / 30.0; 30];
        let s = solve_simplex(&absolute_cost(&a, &b).unwrap(), &w, &w).unwrap();
        assert_abs_diff_eq!(s.plan.cost, ot_1d_sorted(&a, &b).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn too_large_rejected() {
        let c = CostMatrix::from_fn(3, 9, |i, j| (i + j) as f64).unwrap();
        let t = vec![1.0 / 9.0; 9];
        assert_eq!(
            brute_force_ot(&c, &[0.2, 0.3, 0.5], &t),
            Err(TransportError::TooLarge { rows: 3, cols: 9 })
        );
    }
}
