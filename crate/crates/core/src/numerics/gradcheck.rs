/// Denominator floor so coordinates with vanishing gradients do not turn
/// finite-difference roundoff into huge relative errors.
const REL_FLOOR: f64 = 1e-4;

/// Compares `analytic` against central differences of `loss` around
/// `params` and returns the worst relative deviation
/// `|a − n| / max(|a|, |n|, 1e-4)` over all coordinates.
pub fn finite_diff_check<F>(mut loss: F, params: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let plus = loss(&p);
        p[i] = orig - eps;
        let minus = loss(&p);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    worst
}
