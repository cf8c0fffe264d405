//! Transportation simplex on the spanning-tree basis of the bipartite graph.
//!
//! The basis is a spanning tree with `n + m − 1` cells, started from the
//! northwest-corner rule. Each pivot prices cells with the tree potentials,
//! pushes flow around the cycle closed by the entering cell and drops one
//! blocking cell. The entering cell has the most negative reduced cost; after
//! a long run of degenerate pivots the entering cell is instead the first
//! eligible one in row-major order. Ties for the leaving cell always go to the
//! smallest index, so that fallback is Bland's rule and rules out cycling.

use super::{check_instance, CostMatrix, DualPotentials, TransportError, TransportPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    /// Basic cells `(i, j)`, including degenerate zero-flow ones.
    pub basis: Vec<(usize, usize)>,
    pub pivots: usize,
}

struct Tree {
    n: usize,
    m: usize,
    /// Per node (rows `0..n`, columns `n..n+m`): adjacent basic cells.
    adj: Vec<Vec<usize>>,
    basic: Vec<bool>,
}

impl Tree {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            adj: vec![Vec::new(); n + m],
            basic: vec![false; n * m],
        }
    }

    fn insert(&mut self, cell: usize) {
        let (i, j) = (cell / self.m, cell % self.m);
        self.basic[cell] = true;
        self.adj[i].push(cell);
        self.adj[self.n + j].push(cell);
    }

    fn remove(&mut self, cell: usize) {
        let (i, j) = (cell / self.m, cell % self.m);
        self.basic[cell] = false;
        self.adj[i].retain(|&c| c != cell);
        self.adj[self.n + j].retain(|&c| c != cell);
    }

    /// The node on the other end of `cell` from `node`.
    fn other(&self, cell: usize, node: usize) -> usize {
        let (i, j) = (cell / self.m, cell % self.m);
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Potentials with `u_0 = 0` and `u_i + v_j = C_ij` on every basic cell.
    fn potentials(&self, cost: &CostMatrix, u: &mut [f64], v: &mut [f64], seen: &mut [bool], stack: &mut Vec<usize>) {
        seen.fill(false);
        stack.clear();
        u[0] = 0.0;
        seen[0] = true;
        stack.push(0);
        while let Some(node) = stack.pop() {
            for &cell in &self.adj[node] {
                let next = self.other(cell, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = (cell / self.m, cell % self.m);
                if next >= self.n {
                    v[j] = cost.get(i, j) - u[i];
                } else {
                    u[i] = cost.get(i, j) - v[j];
                }
                stack.push(next);
            }
        }
    }

    /// Cells on the tree path from row node `from` to column node `to`, in
    /// order starting at `from`.
    fn path(&self, from: usize, to: usize, parent: &mut [usize], stack: &mut Vec<usize>) -> Vec<usize> {
        const NONE: usize = usize::MAX;
        parent.fill(NONE);
        stack.clear();
        parent[from] = from;
        stack.push(from);
        'search: while let Some(node) = stack.pop() {
            for &cell in &self.adj[node] {
                let next = self.other(cell, node);
                if parent[next] != NONE {
                    continue;
                }
                parent[next] = cell;
                if next == to {
                    break 'search;
                }
                stack.push(next);
            }
        }
        let mut cells = Vec::new();
        let mut node = to;
        while node != from {
            let cell = parent[node];
            cells.push(cell);
            node = self.other(cell, node);
        }
        cells.reverse();
        cells
    }
}

/// Exact optimal plan and dual potentials of a transportation problem.
pub fn solve_simplex(cost: &CostMatrix, w_source: &[f64], w_target: &[f64]) -> Result<SimplexSolution, TransportError> {
    check_instance(cost, w_source, w_target)?;
    let (n, m) = (cost.rows(), cost.cols());
    let mut flow = vec![0.0; n * m];
    let mut tree = Tree::new(n, m);

    // Northwest corner. Every step advances one index, so the walk from
    // (0, 0) to (n-1, m-1) visits exactly n + m - 1 cells.
    let mut supply = w_source.to_vec();
    let mut demand = w_target.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let cell = i * m + j;
        tree.insert(cell);
        if i == n - 1 && j == m - 1 {
            flow[cell] = supply[i].min(demand[j]).max(0.0);
            break;
        }
        let row_done = j == m - 1 || (i < n - 1 && supply[i] <= demand[j]);
        if row_done {
            let x = supply[i];
            flow[cell] = x;
            demand[j] -= x;
            supply[i] = 0.0;
            i += 1;
        } else {
            let x = demand[j];
            flow[cell] = x;
            supply[i] -= x;
            demand[j] = 0.0;
            j += 1;
        }
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut seen = vec![false; n + m];
    let mut parent = vec![0usize; n + m];
    let mut stack = Vec::with_capacity(n + m);
    let eps = 1e-12 * (1.0 + cost.max_abs());
    let max_pivots = 100 * n * m + 10_000;
    let mut pivots = 0;
    // Consecutive pivots that moved no flow. Past `n + m` of them pricing
    // switches from the most negative reduced cost to Bland's first-index
    // rule, which cannot cycle, until flow moves again.
    let mut degenerate_run = 0;

    loop {
        tree.potentials(cost, &mut u, &mut v, &mut seen, &mut stack);
        let reduced = |k: usize| cost.get(k / m, k % m) - u[k / m] - v[k % m];
        let entering = if degenerate_run > n + m {
            (0..n * m).find(|&k| !tree.basic[k] && reduced(k) < -eps)
        } else {
            let mut best = (usize::MAX, -eps);
            for k in 0..n * m {
                if !tree.basic[k] {
                    let r = reduced(k);
                    if r < best.1 {
                        best = (k, r);
                    }
                }
            }
            (best.0 != usize::MAX).then_some(best.0)
        };
        let Some(entering) = entering else { break };
        if pivots == max_pivots {
            return Err(TransportError::PivotLimit(max_pivots));
        }
        pivots += 1;

        let (ie, je) = (entering / m, entering % m);
        let path = tree.path(ie, n + je, &mut parent, &mut stack);
        // Cells alternate -, +, -, ... from the row end; the path has odd
        // length, so the cells at even positions lose flow.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &cell in path.iter().step_by(2) {
            if flow[cell] < theta || (flow[cell] == theta && cell < leaving) {
                theta = flow[cell];
                leaving = cell;
            }
        }
        flow[entering] = theta;
        for (pos, &cell) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[cell] -= theta;
            } else {
                flow[cell] += theta;
            }
        }
        flow[leaving] = 0.0;
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        tree.remove(leaving);
        tree.insert(entering);
    }

    let basis: Vec<(usize, usize)> = (0..n * m).filter(|&k| tree.basic[k]).map(|k| (k / m, k % m)).collect();
    for (k, f) in flow.iter_mut().enumerate() {
        if !tree.basic[k] || *f < 0.0 {
            *f = 0.0;
        }
    }
    let plan = TransportPlan::new(n, m, flow, cost, w_source, w_target);
    Ok(SimplexSolution {
        plan,
        potentials: DualPotentials { u, v },
        basis,
        pivots,
    })
}
