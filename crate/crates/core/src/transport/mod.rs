//! Wasserstein distances: the diagonal-Gaussian closed form, exact discrete
//! `W_p` via linear programming over the transportation polytope, and the
//! sorted-quantile evaluator for 1D samples.
//!
//! These are the metric primitives behind both the bisimulation losses and
//! every verification oracle in the crate, so exactness wins over speed:
//! the discrete solver is a dense network simplex that returns dual
//! certificates of optimality.

mod simplex;

pub use simplex::{solve_transport, TransportPlan};

use crate::error::{Error, Result};

/// Diagonal Gaussian: mean vector plus per-dimension standard deviation.
/// `std = 0` is allowed and denotes a point mass.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                context: "DiagGaussian".into(),
                lhs: mean.len(),
                rhs: std.len(),
            });
        }
        if std.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidDistribution {
                what: "standard deviations must be non-negative and finite".into(),
            });
        }
        Ok(DiagGaussian { mean, std })
    }

    pub fn point_mass(mean: Vec<f64>) -> Self {
        let std = vec![0.0; mean.len()];
        DiagGaussian { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Probability vector over a finite support `0..n`; the geometry comes from
/// whatever cost matrix a distance call supplies.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution { what: "empty support".into() });
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidDistribution {
                what: "probabilities must be non-negative and finite".into(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution {
                what: format!("probabilities sum to {sum}, not 1"),
            });
        }
        Ok(DiscreteDist { probs })
    }

    /// Point mass at index `at` over a support of size `n`.
    pub fn delta(n: usize, at: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        DiscreteDist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Closed-form 2-Wasserstein distance between diagonal Gaussians:
/// `sqrt(‖μ_a − μ_b‖² + ‖std_a − std_b‖²)`. With both stds zero this
/// recedes to the Euclidean distance between the means.
pub fn w2_diag_gaussian(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "w2_diag_gaussian".into(),
            lhs: a.dim(),
            rhs: b.dim(),
        });
    }
    let mut sq = 0.0;
    for i in 0..a.dim() {
        let dm = a.mean[i] - b.mean[i];
        let ds = a.std[i] - b.std[i];
        sq += dm * dm + ds * ds;
    }
    Ok(sq.sqrt())
}

/// Exact order-p Wasserstein distance between discrete distributions:
/// `(min_ω Σ ω_ij cost_ij^p)^{1/p}` solved by network simplex.
///
/// `cost` is row-major `[mu.len(), nu.len()]`, non-negative.
pub fn wp_discrete(mu: &DiscreteDist, nu: &DiscreteDist, cost: &[f64], p: f64) -> Result<f64> {
    Ok(wp_discrete_with_plan(mu, nu, cost, p)?.0)
}

/// As [`wp_discrete`] but also returns the optimal coupling and duals of the
/// powered problem.
pub fn wp_discrete_with_plan(
    mu: &DiscreteDist,
    nu: &DiscreteDist,
    cost: &[f64],
    p: f64,
) -> Result<(f64, TransportPlan)> {
    if p < 1.0 {
        return Err(Error::Precondition(format!("Wasserstein order p = {p} must be ≥ 1")));
    }
    if cost.len() != mu.len() * nu.len() {
        return Err(Error::DimensionMismatch {
            context: "wp_discrete cost".into(),
            lhs: cost.len(),
            rhs: mu.len() * nu.len(),
        });
    }
    let powered: Vec<f64> =
        if p == 1.0 { cost.to_vec() } else { cost.iter().map(|c| c.powf(p)).collect() };
    let plan = solve_transport(mu.probs(), nu.probs(), &powered)?;
    let distance = if p == 1.0 { plan.objective } else { plan.objective.max(0.0).powf(1.0 / p) };
    Ok((distance, plan))
}

/// Evaluate the Kantorovich–Rubinstein dual witness `E_mu[f] − E_nu[f]`.
///
/// `f` must be 1-Lipschitz w.r.t. `cost` (checked exhaustively over all
/// pairs); the result then lower-bounds `W_1(cost)(mu, nu)`.
pub fn w1_dual_check(
    mu: &DiscreteDist,
    nu: &DiscreteDist,
    cost: &[f64],
    f: &[f64],
) -> Result<f64> {
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::DimensionMismatch {
            context: "w1_dual_check supports".into(),
            lhs: n,
            rhs: nu.len(),
        });
    }
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            context: "w1_dual_check witness".into(),
            lhs: f.len(),
            rhs: n,
        });
    }
    if cost.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "w1_dual_check cost".into(),
            lhs: cost.len(),
            rhs: n * n,
        });
    }
    for i in 0..n {
        for j in 0..n {
            let excess = (f[i] - f[j]).abs() - cost[i * n + j];
            if excess > 1e-12 {
                return Err(Error::LipschitzViolation { i, j, excess });
            }
        }
    }
    let val: f64 = (0..n).map(|i| f[i] * (mu.probs()[i] - nu.probs()[i])).sum();
    Ok(val)
}

/// Order-p Wasserstein distance between equal-size 1D sample sets via the
/// sorted-quantile coupling: `(Σ_i |x_(i) − y_(i)|^p / n)^{1/p}`.
pub fn wp_empirical_1d(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Precondition("empty sample set".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "wp_empirical_1d".into(),
            lhs: xs.len(),
            rhs: ys.len(),
        });
    }
    if p < 1.0 {
        return Err(Error::Precondition(format!("Wasserstein order p = {p} must be ≥ 1")));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("samples must not contain NaN"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("samples must not contain NaN"));
    let n = a.len() as f64;
    let sum: f64 = a.iter().zip(&b).map(|(&x, &y)| (x - y).abs().powf(p)).sum();
    Ok((sum / n).powf(1.0 / p))
}

/// Tight dual witness extracted from the optimal transport duals:
/// `f_i = min_j (cost_ij − v_j)` is 1-Lipschitz when `cost` is a metric and
/// attains `E_mu[f] − E_nu[f] = W_1(cost)(mu, nu)`.
pub fn w1_optimal_witness(cost: &[f64], n: usize, col_duals: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            (0..n).map(|j| cost[i * n + j] - col_duals[j]).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    use super::*;

    // ── Gaussian closed form ────────────────────────────────────────────

    #[test]
    fn identical_gaussians_distance_zero() {
        let g = DiagGaussian::new(vec![1.0, 2.0], vec![0.5, 0.25]).unwrap();
        assert_eq!(w2_diag_gaussian(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn point_masses_recede_to_euclidean() {
        let a = DiagGaussian::point_mass(vec![3.0]);
        let b = DiagGaussian::point_mass(vec![0.0]);
        assert_eq!(w2_diag_gaussian(&a, &b).unwrap(), 3.0);
    }

    /// Abramowitz–Stegun 7.1.26 erf approximation, test-only.
    fn erf(x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }

    fn std_normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
    }

    fn std_normal_quantile(u: f64) -> f64 {
        // Bisection against the CDF; plenty for an oracle.
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gaussian_w2_matches_quantile_coupling_integral() {
        // W2(N(0,1), N(0,3))² = ∫₀¹ (F⁻¹(u) − G⁻¹(u))² du with
        // F⁻¹(u) = Φ⁻¹(u), G⁻¹(u) = 3Φ⁻¹(u); midpoint quadrature oracle.
        let steps = 20_000;
        let mut integral = 0.0;
        for k in 0..steps {
            let u = (k as f64 + 0.5) / steps as f64;
            let q = std_normal_quantile(u);
            let diff = q - 3.0 * q;
            integral += diff * diff / steps as f64;
        }
        let oracle = integral.sqrt();
        let a = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let b = DiagGaussian::new(vec![0.0], vec![3.0]).unwrap();
        let w2 = w2_diag_gaussian(&a, &b).unwrap();
        assert!((w2 - 2.0).abs() < 1e-12);
        assert!((w2 - oracle).abs() < 5e-3, "closed form {w2} vs quadrature {oracle}");
    }

    #[test]
    fn gaussian_dimension_mismatch_rejected() {
        let a = DiagGaussian::point_mass(vec![0.0]);
        let b = DiagGaussian::point_mass(vec![0.0, 1.0]);
        assert!(w2_diag_gaussian(&a, &b).is_err());
    }

    // ── Discrete W_p ────────────────────────────────────────────────────

    fn metric_from_points(points: &[(f64, f64)]) -> Vec<f64> {
        let n = points.len();
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                cost[i * n + j] = (dx * dx + dy * dy).sqrt();
            }
        }
        cost
    }

    fn random_dist(rng: &mut impl Rng, n: usize) -> DiscreteDist {
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = p.iter().sum();
        for x in &mut p {
            *x /= s;
        }
        // Exact renormalization to survive the 1e-12 sum gate.
        let s2: f64 = p.iter().sum();
        p[0] += 1.0 - s2;
        DiscreteDist::new(p).unwrap()
    }

    #[test]
    fn equal_distributions_have_zero_distance() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let points: Vec<(f64, f64)> =
            (0..5).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let cost = metric_from_points(&points);
        let mu = random_dist(&mut rng, 5);
        for p in [1.0, 1.5, 2.0] {
            let d = wp_discrete(&mu, &mu, &cost, p).unwrap();
            assert!(d.abs() < 1e-9, "p={p}: {d}");
        }
    }

    #[test]
    fn point_masses_give_cost_entry() {
        let cost = vec![0.0, 2.5, 2.5, 0.0];
        let mu = DiscreteDist::delta(2, 0);
        let nu = DiscreteDist::delta(2, 1);
        assert!((wp_discrete(&mu, &nu, &cost, 1.0).unwrap() - 2.5).abs() < 1e-12);
        assert!((wp_discrete(&mu, &nu, &cost, 2.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn forced_half_mass_move() {
        // The only feasible coupling moves 0.5 across distance 1.
        let mu = DiscreteDist::new(vec![0.5, 0.5]).unwrap();
        let nu = DiscreteDist::new(vec![1.0, 0.0]).unwrap();
        let cost = vec![0.0, 1.0, 1.0, 0.0];
        assert!((wp_discrete(&mu, &nu, &cost, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_order_p() {
        // W_q ≥ W_p for q ≥ p, on 100 random pairs.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(2..7);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let cost = metric_from_points(&points);
            let mu = random_dist(&mut rng, n);
            let nu = random_dist(&mut rng, n);
            let orders = [1.0, 1.5, 2.0];
            let ds: Vec<f64> =
                orders.iter().map(|&p| wp_discrete(&mu, &nu, &cost, p).unwrap()).collect();
            for i in 0..orders.len() {
                for j in i + 1..orders.len() {
                    assert!(
                        ds[j] >= ds[i] - 1e-9,
                        "W_{} = {} < W_{} = {}",
                        orders[j],
                        ds[j],
                        orders[i],
                        ds[i]
                    );
                }
            }
        }
    }

    #[test]
    fn diameter_sandwich() {
        // W1 ≤ Wp ≤ diam^((p-1)/p) · W1^(1/p) on metric supports.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..7);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let cost = metric_from_points(&points);
            let diam = cost.iter().cloned().fold(0.0, f64::max);
            let mu = random_dist(&mut rng, n);
            let nu = random_dist(&mut rng, n);
            let w1 = wp_discrete(&mu, &nu, &cost, 1.0).unwrap();
            for p in [1.5, 2.0, 3.0] {
                let wp = wp_discrete(&mu, &nu, &cost, p).unwrap();
                assert!(wp >= w1 - 1e-9);
                let upper = diam.powf((p - 1.0) / p) * w1.powf(1.0 / p);
                assert!(wp <= upper + 1e-9, "Wp = {wp} > bound {upper}");
            }
        }
    }

    #[test]
    fn symmetry_and_triangle_inequality_under_metric_cost() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..60 {
            let n = rng.random_range(2..6);
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let cost = metric_from_points(&points);
            let a = random_dist(&mut rng, n);
            let b = random_dist(&mut rng, n);
            let c = random_dist(&mut rng, n);
            for p in [1.0, 2.0] {
                let dab = wp_discrete(&a, &b, &cost, p).unwrap();
                let dba = wp_discrete(&b, &a, &cost, p).unwrap();
                assert!((dab - dba).abs() < 1e-9);
                let dac = wp_discrete(&a, &c, &cost, p).unwrap();
                let dcb = wp_discrete(&c, &b, &cost, p).unwrap();
                assert!(dab <= dac + dcb + 1e-9);
            }
        }
    }

    #[test]
    fn quantile_coupling_cross_check_on_line_supports() {
        // For uniform weights on sorted 1D atoms, the monotone coupling is
        // optimal: an independent route to the same value.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(2..8);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut ys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut cost = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cost[i * n + j] = (xs[i] - ys[j]).abs();
                }
            }
            let w = 1.0 / n as f64;
            let mut probs = vec![w; n];
            let s: f64 = probs.iter().sum();
            probs[0] += 1.0 - s;
            let mu = DiscreteDist::new(probs.clone()).unwrap();
            let nu = DiscreteDist::new(probs).unwrap();
            for p in [1.0, 2.0] {
                let lp = wp_discrete(&mu, &nu, &cost, p).unwrap();
                let quantile = wp_empirical_1d(&xs, &ys, p).unwrap();
                assert!((lp - quantile).abs() < 1e-9, "p={p}: LP {lp} vs quantile {quantile}");
            }
        }
    }

    // ── Dual formulation ────────────────────────────────────────────────

    #[test]
    fn constant_witness_scores_zero() {
        let mu = DiscreteDist::new(vec![0.3, 0.7]).unwrap();
        let nu = DiscreteDist::new(vec![0.6, 0.4]).unwrap();
        let cost = vec![0.0, 1.0, 1.0, 0.0];
        let v = w1_dual_check(&mu, &nu, &cost, &[5.0, 5.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn equal_marginals_score_zero_for_any_witness() {
        let mu = DiscreteDist::new(vec![0.25, 0.75]).unwrap();
        let cost = vec![0.0, 2.0, 2.0, 0.0];
        let v = w1_dual_check(&mu, &mu, &cost, &[1.0, -1.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn lipschitz_violation_names_pair() {
        let mu = DiscreteDist::new(vec![0.5, 0.5]).unwrap();
        let cost = vec![0.0, 1.0, 1.0, 0.0];
        match w1_dual_check(&mu, &mu, &cost, &[0.0, 2.0]) {
            Err(Error::LipschitzViolation { i, j, .. }) => {
                assert!((i, j) == (0, 1) || (i, j) == (1, 0));
            }
            other => panic!("expected LipschitzViolation, got {other:?}"),
        }
    }

    #[test]
    fn dual_lower_bounds_primal_and_optimal_witness_attains() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..20 {
            let n = 5;
            let points: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let cost = metric_from_points(&points);
            let mu = random_dist(&mut rng, n);
            let nu = random_dist(&mut rng, n);
            let (w1, plan) = wp_discrete_with_plan(&mu, &nu, &cost, 1.0).unwrap();

            // 100 random admissible witnesses via McShane extension:
            // f_i = min_j (g_j + cost_ij) is 1-Lipschitz for any g.
            let mut best = f64::NEG_INFINITY;
            for _ in 0..100 {
                let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let f: Vec<f64> = (0..n)
                    .map(|i| {
                        (0..n).map(|j| g[j] + cost[i * n + j]).fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                let v = w1_dual_check(&mu, &nu, &cost, &f).unwrap();
                assert!(v <= w1 + 1e-9, "dual {v} exceeds primal {w1}");
                best = best.max(v);
            }
            // The witness built from the optimal duals attains the primal.
            let f_star = w1_optimal_witness(&cost, n, &plan.col_duals);
            let v_star = w1_dual_check(&mu, &nu, &cost, &f_star).unwrap();
            assert!(v_star <= w1 + 1e-9);
            best = best.max(v_star);
            assert!((best - w1).abs() < 1e-9, "best dual {best} vs primal {w1}");
        }
    }

    // ── 1D empirical ────────────────────────────────────────────────────

    #[test]
    fn empirical_identical_samples_zero() {
        let xs = [0.3, -1.0, 2.0];
        assert_eq!(wp_empirical_1d(&xs, &xs, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn empirical_single_points() {
        assert_eq!(wp_empirical_1d(&[0.0], &[5.0], 1.0).unwrap(), 5.0);
    }

    #[test]
    fn empirical_shifted_pair() {
        // Couplings of {0,1} to {1,2}: sorted pairing costs 1, crossed
        // pairing costs (1+1)/2 = 1 at p=1 but 2^(1/2) at p=2; the sorted
        // coupling is optimal in 1D.
        let xs = [0.0, 1.0];
        let ys = [1.0, 2.0];
        assert_eq!(wp_empirical_1d(&xs, &ys, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn empirical_rejects_empty_and_mismatch() {
        assert!(wp_empirical_1d(&[], &[], 1.0).is_err());
        assert!(wp_empirical_1d(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDist::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![-1.0]).is_err());
    }
}
