//! Central finite differences for validating analytic gradients.

/// Numeric gradient of a scalar function at `x` by central differences.
pub fn numeric_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut point = x.to_vec();
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + step;
        let fp = f(&point);
        point[i] = orig - step;
        let fm = f(&point);
        point[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Relative agreement with an absolute floor for near-zero entries.
pub fn grads_close(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_floor: f64) -> bool {
    analytic.len() == numeric.len()
        && analytic.iter().zip(numeric).all(|(&a, &n)| {
            let diff = (a - n).abs();
            diff <= rel_tol * a.abs().max(n.abs()) || diff <= abs_floor
        })
}

/// Largest relative deviation (with floor) between two gradients, for
/// reporting.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs()).max(abs_floor)
            }
        })
        .fold(0.0, f64::max)
}
