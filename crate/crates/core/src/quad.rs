//! Adaptive Simpson quadrature.

/// Adaptive Simpson rule with an absolute tolerance.
///
/// The classic recursive scheme: a panel is accepted when the two-half
/// refinement agrees with the single panel to within 15x the local budget.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol.abs().max(f64::MIN_POSITIVE), 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson with a relative tolerance: the budget is scaled by a
/// first coarse estimate of the integral's magnitude.
pub fn adaptive_simpson_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let coarse: f64 = (0..=16)
        .map(|i| {
            let x = a + (b - a) * (i as f64) / 16.0;
            f(x).abs()
        })
        .sum::<f64>()
        / 17.0
        * (b - a).abs();
    let scale = coarse.max(1e-300);
    adaptive_simpson(f, a, b, rel_tol * scale)
}
