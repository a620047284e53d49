use crate::error::{Error, Result};

/// Exact solution of a balanced transportation problem.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// Optimal objective `Σ ω_ij · cost_ij`.
    pub objective: f64,
    /// Optimal coupling, row-major `[m, n]`.
    pub plan: Vec<f64>,
    /// Row potentials `u` with `u_i + v_j ≤ cost_ij` at optimality.
    pub row_duals: Vec<f64>,
    /// Column potentials `v`.
    pub col_duals: Vec<f64>,
}

const FEASIBILITY_TOL: f64 = 1e-9;
const REDUCED_COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// Primal network simplex on the dense transportation polytope.
///
/// Exact up to f64 arithmetic: the returned duals certify optimality
/// (`u_i + v_j ≤ cost_ij` everywhere, equality on the support of `plan`).
/// Bland's entering rule keeps degenerate pivots from cycling.
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    let m = supply.len();
    let n = demand.len();
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch {
            context: "transport cost matrix".into(),
            lhs: cost.len(),
            rhs: m * n,
        });
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    let gap = (total_supply - total_demand).abs();
    if gap > FEASIBILITY_TOL {
        return Err(Error::InfeasibleMarginals { gap });
    }
    if supply.iter().chain(demand).any(|&x| x < -FEASIBILITY_TOL) {
        return Err(Error::InvalidDistribution { what: "negative marginal mass".into() });
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidDistribution {
            what: "cost entries must be finite and non-negative".into(),
        });
    }

    // Strip zero-mass atoms; they never carry flow.
    let rows: Vec<usize> = (0..m).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| demand[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(TransportPlan {
            objective: 0.0,
            plan: vec![0.0; m * n],
            row_duals: vec![0.0; m],
            col_duals: vec![0.0; n],
        });
    }

    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    let c = |i: usize, j: usize| cost[rows[i] * n + cols[j]];
    let (mr, nc) = (rows.len(), cols.len());

    let mut solver = Solver::new(mr, nc, &a, &b, &c);
    solver.run(&c)?;

    let mut plan = vec![0.0; m * n];
    for (&(i, j), &flow) in solver.basis_cells.iter().zip(&solver.basis_flow) {
        plan[rows[i] * n + cols[j]] = flow.max(0.0);
    }
    let mut row_duals = vec![0.0; m];
    let mut col_duals = vec![0.0; n];
    // Zero-mass atoms get potentials consistent with dual feasibility.
    for (k, &i) in rows.iter().enumerate() {
        row_duals[i] = solver.u[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        col_duals[j] = solver.v[k];
    }
    for i in 0..m {
        if supply[i] == 0.0 {
            row_duals[i] =
                (0..n).map(|j| cost[i * n + j] - col_duals[j]).fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..n {
        if demand[j] == 0.0 {
            col_duals[j] =
                (0..m).map(|i| cost[i * n + j] - row_duals[i]).fold(f64::INFINITY, f64::min);
        }
    }

    let objective: f64 = plan
        .iter()
        .zip(cost)
        .map(|(&w, &cst)| if w > 0.0 { w * cst } else { 0.0 })
        .sum();
    Ok(TransportPlan { objective, plan, row_duals, col_duals })
}

struct Solver {
    m: usize,
    n: usize,
    basis_cells: Vec<(usize, usize)>,
    basis_flow: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Solver {
    /// Northwest-corner initial basic feasible solution; exactly m+n-1 basic
    /// cells including degenerate zero-flow ones.
    fn new(m: usize, n: usize, a: &[f64], b: &[f64], _c: &impl Fn(usize, usize) -> f64) -> Self {
        let mut rem_a = a.to_vec();
        let mut rem_b = b.to_vec();
        let mut basis_cells = Vec::with_capacity(m + n - 1);
        let mut basis_flow = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = rem_a[i].min(rem_b[j]);
            basis_cells.push((i, j));
            basis_flow.push(f);
            rem_a[i] -= f;
            rem_b[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            // On ties advance one axis only, keeping the basis a tree.
            if rem_a[i] <= rem_b[j] && i < m - 1 {
                i += 1;
            } else if j < n - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
        Solver { m, n, basis_cells, basis_flow, u: vec![0.0; m], v: vec![0.0; n] }
    }

    fn compute_potentials(&mut self, c: &impl Fn(usize, usize) -> f64) {
        // The basis is a spanning tree of the bipartite row/col graph; fix
        // u[0] = 0 and walk the tree.
        let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for (k, &(i, j)) in self.basis_cells.iter().enumerate() {
            row_adj[i].push(k);
            col_adj[j].push(k);
        }
        let mut row_done = vec![false; self.m];
        let mut col_done = vec![false; self.n];
        self.u[0] = 0.0;
        row_done[0] = true;
        let mut stack: Vec<(bool, usize)> = vec![(true, 0)];
        while let Some((is_row, idx)) = stack.pop() {
            let adj = if is_row { &row_adj[idx] } else { &col_adj[idx] };
            for &k in adj {
                let (i, j) = self.basis_cells[k];
                if is_row && !col_done[j] {
                    self.v[j] = c(i, j) - self.u[i];
                    col_done[j] = true;
                    stack.push((false, j));
                } else if !is_row && !row_done[i] {
                    self.u[i] = c(i, j) - self.v[j];
                    row_done[i] = true;
                    stack.push((true, i));
                }
            }
        }
    }

    /// Bland's rule: first cell (row-major) with negative reduced cost.
    fn entering_cell(&self, c: &impl Fn(usize, usize) -> f64) -> Option<(usize, usize)> {
        let mut in_basis = vec![false; self.m * self.n];
        for &(i, j) in &self.basis_cells {
            in_basis[i * self.n + j] = true;
        }
        for i in 0..self.m {
            for j in 0..self.n {
                if !in_basis[i * self.n + j] && c(i, j) - self.u[i] - self.v[j] < -REDUCED_COST_TOL
                {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// The unique cycle formed by adding (ei, ej) to the basis tree, as the
    /// list of basis-cell indices along the tree path from row ei to col ej.
    fn cycle_path(&self, ei: usize, ej: usize) -> Vec<usize> {
        let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for (k, &(i, j)) in self.basis_cells.iter().enumerate() {
            row_adj[i].push(k);
            col_adj[j].push(k);
        }
        // DFS from row node ei to col node ej over basis edges.
        let mut parent_edge: Vec<Option<usize>> = vec![None; self.m + self.n];
        let mut visited = vec![false; self.m + self.n];
        visited[ei] = true;
        let mut stack = vec![(true, ei)];
        'outer: while let Some((is_row, idx)) = stack.pop() {
            let adj = if is_row { &row_adj[idx] } else { &col_adj[idx] };
            for &k in adj {
                let (i, j) = self.basis_cells[k];
                let next = if is_row { self.m + j } else { i };
                if !visited[next] {
                    visited[next] = true;
                    parent_edge[next] = Some(k);
                    if next == self.m + ej {
                        break 'outer;
                    }
                    stack.push((!is_row, if is_row { j } else { i }));
                }
            }
        }
        // Walk back from col ej to row ei.
        let mut path = Vec::new();
        let mut node = self.m + ej;
        while node != ei {
            let k = parent_edge[node].expect("basis must be connected");
            path.push(k);
            let (i, j) = self.basis_cells[k];
            node = if node == self.m + j { i } else { self.m + j };
        }
        path
    }

    fn run(&mut self, c: &impl Fn(usize, usize) -> f64) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            self.compute_potentials(c);
            let Some((ei, ej)) = self.entering_cell(c) else {
                return Ok(());
            };
            let path = self.cycle_path(ei, ej);
            // Entering cell takes +θ; walking the path from the entering
            // cell's row, signs alternate -θ, +θ, ...
            // `path` is ordered col ej → row ei; reverse to start at ei.
            let ordered: Vec<usize> = path.into_iter().rev().collect();
            let mut theta = f64::INFINITY;
            let mut leave_k = usize::MAX;
            for (pos, &k) in ordered.iter().enumerate() {
                if pos % 2 == 0 {
                    // Minus position; first minimizer leaves (deterministic).
                    let f = self.basis_flow[k];
                    if f < theta {
                        theta = f;
                        leave_k = k;
                    }
                }
            }
            for (pos, &k) in ordered.iter().enumerate() {
                if pos % 2 == 0 {
                    self.basis_flow[k] -= theta;
                } else {
                    self.basis_flow[k] += theta;
                }
            }
            self.basis_cells[leave_k] = (ei, ej);
            self.basis_flow[leave_k] = theta;
        }
        Err(Error::NoConvergence { iterations: MAX_PIVOTS, residual: f64::NAN })
    }
}
