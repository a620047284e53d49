use crate::error::{Error, Result};
use crate::transport::wp_discrete;

use super::mdp::FiniteMDP;

const MAX_FIXED_POINT_ITERS: usize = 10_000;

/// Converged bisimulation metric on a finite MDP.
#[derive(Clone, Debug)]
pub struct BisimMetric {
    n: usize,
    d: Vec<f64>,
    pub c_r: f64,
    pub c_s: f64,
    pub p: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl BisimMetric {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.d
    }

    pub fn max_entry(&self) -> f64 {
        self.d.iter().cloned().fold(0.0, f64::max)
    }
}

fn validate_weights(c_r: f64, c_s: f64) -> Result<()> {
    if !(0.0 < c_r && c_r < 1.0 && 0.0 < c_s && c_s < 1.0 && c_r + c_s < 1.0) {
        return Err(Error::Precondition(format!(
            "weights must satisfy C_r, C_s ∈ (0,1) and C_r + C_s < 1, got ({c_r}, {c_s})"
        )));
    }
    Ok(())
}

/// Wasserstein gap between the reward distributions of (i, a) and (j, a)
/// under the absolute-difference ground metric. Independent of the state
/// metric, so it is computed once per pair.
fn reward_gap(mdp: &FiniteMDP, i: usize, j: usize, a: usize, p: f64) -> Result<f64> {
    let ri = mdp.reward(i, a);
    let rj = mdp.reward(j, a);
    let mut cost = Vec::with_capacity(ri.atoms.len() * rj.atoms.len());
    for &x in &ri.atoms {
        for &y in &rj.atoms {
            cost.push((x - y).abs());
        }
    }
    let mu = crate::transport::DiscreteDist::new(ri.probs.clone())?;
    let nu = crate::transport::DiscreteDist::new(rj.probs.clone())?;
    wp_discrete(&mu, &nu, &cost, p)
}

/// One application of the fixed-point operator; returns the updated metric
/// and the sup-norm change.
fn apply_operator(
    mdp: &FiniteMDP,
    d: &[f64],
    reward_gaps: &[f64],
    c_r: f64,
    c_s: f64,
    p: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = mdp.n_states;
    let mut next = vec![0.0; n * n];
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions {
                let rg = reward_gaps[(i * n + j) * mdp.n_actions + a];
                let sg = wp_discrete(mdp.transition(i, a), mdp.transition(j, a), d, p)?;
                best = best.max(c_r * rg + c_s * sg);
            }
            next[i * n + j] = best;
            next[j * n + i] = best;
            residual = residual.max((best - d[i * n + j]).abs());
        }
    }
    Ok((next, residual))
}

/// Iterate the bisimulation operator from an arbitrary starting metric,
/// recording the sup-norm residual of every sweep.
pub fn bisim_iterates(
    mdp: &FiniteMDP,
    c_r: f64,
    c_s: f64,
    p: f64,
    tol: f64,
    d0: Vec<f64>,
) -> Result<(BisimMetric, Vec<f64>)> {
    validate_weights(c_r, c_s)?;
    if tol <= 0.0 {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    if p < 1.0 {
        return Err(Error::Precondition(format!("order p = {p} must be ≥ 1")));
    }
    let n = mdp.n_states;
    if d0.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "initial metric".into(),
            lhs: d0.len(),
            rhs: n * n,
        });
    }

    let mut reward_gaps = vec![0.0; n * n * mdp.n_actions];
    for i in 0..n {
        for j in (i + 1)..n {
            for a in 0..mdp.n_actions {
                let g = reward_gap(mdp, i, j, a, p)?;
                reward_gaps[(i * n + j) * mdp.n_actions + a] = g;
            }
        }
    }

    let mut d = d0;
    let mut residuals = Vec::new();
    for iter in 1..=MAX_FIXED_POINT_ITERS {
        let (next, residual) = apply_operator(mdp, &d, &reward_gaps, c_r, c_s, p)?;
        d = next;
        residuals.push(residual);
        if residual <= tol {
            return Ok((
                BisimMetric { n, d, c_r, c_s, p, iterations: iter, residual },
                residuals,
            ));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_FIXED_POINT_ITERS,
        residual: *residuals.last().unwrap(),
    })
}

/// Exact bisimulation metric: the fixed point of
/// `d(i,j) = max_a [ C_r·W_p(|·|)(R_i, R_j) + C_s·W_p(d)(P_i, P_j) ]`
/// iterated from `d = 0` to sup-norm residual ≤ `tol`.
pub fn exact_bisim(mdp: &FiniteMDP, c_r: f64, c_s: f64, p: f64, tol: f64) -> Result<BisimMetric> {
    let n = mdp.n_states;
    Ok(bisim_iterates(mdp, c_r, c_s, p, tol, vec![0.0; n * n])?.0)
}

/// Optimal value function by value iteration to sup-norm residual ≤ `tol`.
pub fn value_iteration(mdp: &FiniteMDP, tol: f64) -> Result<Vec<f64>> {
    if tol <= 0.0 {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    let n = mdp.n_states;
    let mut v = vec![0.0; n];
    loop {
        let mut next = vec![0.0; n];
        let mut residual = 0.0f64;
        for i in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions {
                let mean_r = mdp.reward(i, a).mean();
                let cont: f64 = mdp
                    .transition(i, a)
                    .probs()
                    .iter()
                    .zip(&v)
                    .map(|(&p, &vj)| p * vj)
                    .sum();
                best = best.max(mean_r + mdp.gamma * cont);
            }
            next[i] = best;
            residual = residual.max((best - v[i]).abs());
        }
        v = next;
        // Contraction with factor gamma < 1 guarantees termination.
        if residual <= tol {
            return Ok(v);
        }
    }
}

/// Value function of a fixed stochastic policy `pi[s][a]`.
pub fn policy_evaluation(mdp: &FiniteMDP, pi: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    let n = mdp.n_states;
    let mut v = vec![0.0; n];
    loop {
        let mut next = vec![0.0; n];
        let mut residual = 0.0f64;
        for i in 0..n {
            let mut acc = 0.0;
            for a in 0..mdp.n_actions {
                let mean_r = mdp.reward(i, a).mean();
                let cont: f64 = mdp
                    .transition(i, a)
                    .probs()
                    .iter()
                    .zip(&v)
                    .map(|(&p, &vj)| p * vj)
                    .sum();
                acc += pi[i][a] * (mean_r + mdp.gamma * cont);
            }
            next[i] = acc;
            residual = residual.max((acc - v[i]).abs());
        }
        v = next;
        if residual <= tol {
            return Ok(v);
        }
    }
}

/// Report from checking `C_r·|V_i − V_j| ≤ d(i,j)` over all state pairs.
#[derive(Clone, Debug)]
pub struct ValueBoundReport {
    pub max_violation: f64,
    pub pairs_checked: usize,
}

/// Verify the value-difference bound: solves for the optimal value function
/// and the exact metric, then reports `max_ij (C_r·|V_i − V_j| − d(i,j))`.
///
/// Requires the theorem hypotheses `C_s ∈ [γ, 1)`, `C_r ∈ (0,1)`,
/// `C_r + C_s < 1`.
pub fn verify_value_bound(
    mdp: &FiniteMDP,
    c_r: f64,
    c_s: f64,
    p: f64,
    tol: f64,
) -> Result<ValueBoundReport> {
    validate_weights(c_r, c_s)?;
    if c_s < mdp.gamma {
        return Err(Error::Precondition(format!(
            "theorem hypothesis requires C_s ≥ gamma, got C_s = {c_s} < gamma = {}",
            mdp.gamma
        )));
    }
    let v = value_iteration(mdp, 1e-12)?;
    let d = exact_bisim(mdp, c_r, c_s, p, 1e-10)?;
    let n = mdp.n_states;
    let mut max_violation = f64::NEG_INFINITY;
    let mut pairs = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let lhs = c_r * (v[i] - v[j]).abs();
            max_violation = max_violation.max(lhs - d.get(i, j));
            pairs += 1;
        }
    }
    if pairs == 0 {
        max_violation = 0.0;
    }
    let report = ValueBoundReport { max_violation, pairs_checked: pairs };
    if report.max_violation > tol {
        return Err(Error::NoConvergence { iterations: pairs, residual: report.max_violation });
    }
    Ok(report)
}

/// Observed contraction rate of the fixed-point iteration.
#[derive(Clone, Debug)]
pub struct ContractionReport {
    pub observed_rate: f64,
    pub iterations: usize,
}

/// Measure the sup-norm ratio of successive iterate changes; after burn-in
/// it must not exceed `C_r + C_s`.
pub fn verify_contraction(
    mdp: &FiniteMDP,
    c_r: f64,
    c_s: f64,
    p: f64,
) -> Result<ContractionReport> {
    let (metric, residuals) = bisim_iterates(
        mdp,
        c_r,
        c_s,
        p,
        1e-12,
        vec![0.0; mdp.n_states * mdp.n_states],
    )?;
    let mut rate = 0.0f64;
    // Skip the first sweep (zero-start transient) and ignore ratios once
    // the residual is at noise level.
    for w in residuals.windows(2).skip(1) {
        if w[0] > 1e-12 {
            rate = rate.max(w[1] / w[0]);
        }
    }
    Ok(ContractionReport { observed_rate: rate, iterations: metric.iterations })
}

/// Both sides of the model-error bound, with measured slack.
#[derive(Clone, Debug)]
pub struct ModelErrorReport {
    /// `‖d − d̂‖_∞`
    pub metric_gap: f64,
    /// `(2C_r·E_φ + 2C_s·E_θ) / (1 − C_r − C_s)`
    pub bound: f64,
    pub reward_error: f64,
    pub transition_error: f64,
    pub slack: f64,
}

/// Verify the p = 1 model-error bound between an MDP and a perturbed copy:
/// `‖d − d̂‖_∞ ≤ (2C_r·E_φ + 2C_s·E_θ)/(1−C_r−C_s)` where `E_φ` is the
/// worst reward Wasserstein gap and `E_θ` the worst transition gap under
/// the true metric `d`.
pub fn verify_model_error_bound(
    mdp: &FiniteMDP,
    mdp_hat: &FiniteMDP,
    c_r: f64,
    c_s: f64,
    tol: f64,
) -> Result<ModelErrorReport> {
    validate_weights(c_r, c_s)?;
    if mdp.n_states != mdp_hat.n_states || mdp.n_actions != mdp_hat.n_actions {
        return Err(Error::DimensionMismatch {
            context: "model-error bound state/action sets".into(),
            lhs: mdp.n_states * mdp.n_actions,
            rhs: mdp_hat.n_states * mdp_hat.n_actions,
        });
    }
    let p = 1.0;
    let d = exact_bisim(mdp, c_r, c_s, p, 1e-10)?;
    let d_hat = exact_bisim(mdp_hat, c_r, c_s, p, 1e-10)?;
    let n = mdp.n_states;

    let mut metric_gap = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            metric_gap = metric_gap.max((d.get(i, j) - d_hat.get(i, j)).abs());
        }
    }

    let mut e_phi = 0.0f64;
    let mut e_theta = 0.0f64;
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let ri = mdp.reward(s, a);
            let rj = mdp_hat.reward(s, a);
            let mut cost = Vec::with_capacity(ri.atoms.len() * rj.atoms.len());
            for &x in &ri.atoms {
                for &y in &rj.atoms {
                    cost.push((x - y).abs());
                }
            }
            let mu = crate::transport::DiscreteDist::new(ri.probs.clone())?;
            let nu = crate::transport::DiscreteDist::new(rj.probs.clone())?;
            e_phi = e_phi.max(wp_discrete(&mu, &nu, &cost, 1.0)?);

            let gap = wp_discrete(
                mdp.transition(s, a),
                mdp_hat.transition(s, a),
                d.matrix(),
                1.0,
            )?;
            e_theta = e_theta.max(gap);
        }
    }
    let bound = (2.0 * c_r * e_phi + 2.0 * c_s * e_theta) / (1.0 - c_r - c_s);
    let report = ModelErrorReport {
        metric_gap,
        bound,
        reward_error: e_phi,
        transition_error: e_theta,
        slack: bound - metric_gap,
    };
    if metric_gap > bound + tol {
        return Err(Error::NoConvergence { iterations: 0, residual: metric_gap - bound });
    }
    Ok(report)
}
