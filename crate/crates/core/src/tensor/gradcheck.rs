//! Central finite differences, used as an independent oracle for analytic gradients.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Scale below which gradient components are compared absolutely.
///
/// Central differences at h = 1e-5 carry about 1e-10 of truncation and
/// round-off noise, which would dominate a purely relative comparison of
/// near-zero components.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest component-wise [`relative_error`]. Panics on length mismatch.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}
