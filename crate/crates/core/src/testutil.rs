//! Oracle helpers shared by the property and acceptance test suites.
//!
//! Everything here is an independent route to a quantity the library also
//! computes: finite differences for gradients, truncated-horizon sums for
//! fixed points, Monte-Carlo estimators for moments. Keep these free of the
//! code paths they are used to check.

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Worst relative error between gradients, with an absolute floor for
/// entries near zero.
pub fn max_grad_error(analytic: &[f64], fd: &[f64], abs_floor: f64) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < abs_floor {
                0.0
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Mean and standard deviation of a sample.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
