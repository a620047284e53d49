//! Asynchronous diffusion model.
//!
//! The environment's perturbation is treated as the first `delta` steps of a
//! variance-preserving diffusion; training injects noise forward from that
//! offset while sampling reverses all the way down to the early-stopping
//! step `k0` and inverts the remainder. The reverse pass therefore removes
//! `delta` more steps of noise than training ever added on top of the input.

mod scorenet;

pub use scorenet::{adm_loss, AdmLossReport, Guidance, ScoreNet};

use rand::Rng;

use crate::error::{Error, Result};

/// Per-step coefficients of the variance-preserving forward process.
///
/// `beta` is linear from `beta_min` to `beta_max` over `K` steps;
/// `alpha_k = 1 - beta_k`, `alpha_bar_k = Π_{j≤k} alpha_j` with
/// `alpha_bar_0 = 1`, and `sigma2_k = 1 - alpha_k`.
#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    pub k_total: usize,
    pub k0: usize,
    pub delta: usize,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Beta for step `k` in `1..=K`.
    pub fn beta(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        1.0 - self.beta[k - 1]
    }

    pub fn sigma2(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    /// Cumulative product `ᾱ_k` for `k` in `0..=K`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bar[k]
    }

    /// Std of the inversion posterior at the offset step,
    /// `sqrt((1-ᾱ_δ)/ᾱ_δ)` — the width of the denoised estimate.
    pub fn inversion_std(&self) -> f64 {
        let ab = self.alpha_bar(self.delta);
        ((1.0 - ab) / ab).sqrt()
    }
}

/// Build the linear variance schedule with early-stopping step `k0` and
/// noise-intensity offset `delta`.
pub fn make_schedule(
    k_total: usize,
    beta_min: f64,
    beta_max: f64,
    k0: usize,
    delta: usize,
) -> Result<NoiseSchedule> {
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Precondition(format!(
            "beta range must satisfy 0 < beta_min ≤ beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    if !(1 <= k0 && k0 <= delta && delta <= k_total) {
        return Err(Error::Precondition(format!(
            "steps must satisfy 1 ≤ k0 ≤ delta ≤ K, got k0={k0}, delta={delta}, K={k_total}"
        )));
    }
    let beta: Vec<f64> = (0..k_total)
        .map(|i| {
            if k_total == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (k_total - 1) as f64
            }
        })
        .collect();
    let mut alpha_bar = Vec::with_capacity(k_total + 1);
    alpha_bar.push(1.0);
    let mut prod = 1.0;
    for &b in &beta {
        prod *= 1.0 - b;
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule { k_total, k0, delta, beta, alpha_bar })
}

/// Marginal of the forward process: `sqrt(ᾱ_k)·x0 + sqrt(1-ᾱ_k)·eps`.
pub fn forward_sample(x0: &[f64], k: usize, eps: &[f64], sched: &NoiseSchedule) -> Vec<f64> {
    assert_eq!(x0.len(), eps.len(), "noise dimension must match input");
    assert!(k <= sched.k_total, "step {k} beyond schedule");
    let ab = sched.alpha_bar(k);
    let (s, t) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.iter().zip(eps).map(|(&x, &e)| s * x + t * e).collect()
}

/// Continue the chain from the offset: noise `x_delta` forward to step
/// `k ≥ delta` in one jump, `sqrt(ᾱ_k/ᾱ_δ)·x_δ + sqrt(1-ᾱ_k/ᾱ_δ)·eps`.
pub fn forward_from_delta(
    x_delta: &[f64],
    k: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Vec<f64> {
    assert!(k >= sched.delta && k <= sched.k_total);
    let ratio = sched.alpha_bar(k) / sched.alpha_bar(sched.delta);
    let (s, t) = (ratio.sqrt(), (1.0 - ratio).sqrt());
    x_delta.iter().zip(eps).map(|(&x, &e)| s * x + t * e).collect()
}

/// Algebraic inversion at step `k`: `(x_k - sqrt(1-ᾱ_k)·eps_hat)/sqrt(ᾱ_k)`.
pub fn invert_at(x_k: &[f64], eps_hat: &[f64], k: usize, sched: &NoiseSchedule) -> Vec<f64> {
    let ab = sched.alpha_bar(k);
    let (s, t) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_k.iter().zip(eps_hat).map(|(&x, &e)| (x - t * e) / s).collect()
}

/// Inversion at the offset step `delta`.
pub fn invert_delta(x_delta: &[f64], eps_hat: &[f64], sched: &NoiseSchedule) -> Vec<f64> {
    invert_at(x_delta, eps_hat, sched.delta, sched)
}

/// Classifier-free guidance mask: conditioning is kept with probability 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GuidanceMask {
    pub keep: bool,
}

impl GuidanceMask {
    pub fn draw(rng: &mut impl Rng) -> Self {
        GuidanceMask { keep: rng.random::<bool>() }
    }

    pub fn draw_batch(rng: &mut impl Rng, n: usize) -> Vec<bool> {
        (0..n).map(|_| rng.random::<bool>()).collect()
    }
}

/// Ancestral reverse chain from step `delta` down to `k0`, then the
/// epsilon-inversion at `k0`. `eps_fn(xs, k)` must return the guided noise
/// prediction for every row of `xs` at step `k`.
///
/// With `stochastic` false the per-step injection noise is dropped, giving
/// the posterior-mean path.
pub fn reverse_denoise(
    x_delta: &[Vec<f64>],
    sched: &NoiseSchedule,
    stochastic: bool,
    rng: &mut impl Rng,
    eps_fn: &mut dyn FnMut(&[Vec<f64>], usize) -> Result<Vec<Vec<f64>>>,
) -> Result<Vec<Vec<f64>>> {
    let mut xs = x_delta.to_vec();
    let normal = rand_distr::StandardNormal;
    for k in (sched.k0 + 1..=sched.delta).rev() {
        let eps_hat = eps_fn(&xs, k)?;
        let ab_k = sched.alpha_bar(k);
        let ab_prev = sched.alpha_bar(k - 1);
        let beta = sched.beta(k);
        let alpha = sched.alpha(k);
        let coeff = beta / (1.0 - ab_k).sqrt();
        let sigma = ((1.0 - ab_prev) / (1.0 - ab_k) * beta).sqrt();
        for (x, e) in xs.iter_mut().zip(&eps_hat) {
            for (xi, &ei) in x.iter_mut().zip(e) {
                let mut next = (*xi - coeff * ei) / alpha.sqrt();
                if stochastic {
                    let z: f64 = rng.sample(normal);
                    next += sigma * z;
                }
                *xi = next;
            }
        }
        for (row, x) in xs.iter().enumerate() {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("reverse chain at step {k}, item {row}"),
                });
            }
        }
    }
    let eps_hat = eps_fn(&xs, sched.k0)?;
    let out: Vec<Vec<f64>> = xs
        .iter()
        .zip(&eps_hat)
        .map(|(x, e)| invert_at(x, e, sched.k0, sched))
        .collect();
    for (row, x) in out.iter().enumerate() {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("inversion at step {}, item {row}", sched.k0),
            });
        }
    }
    Ok(out)
}
