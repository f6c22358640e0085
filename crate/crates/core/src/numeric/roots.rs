//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Stopping rule for [`brent`].
#[derive(Debug, Clone, Copy)]
pub struct RootTol {
    /// Accept as soon as `|f(x)| <= ftol`.
    pub ftol: f64,
    /// Accept once the bracket is narrower than `xtol` (absolute).
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for RootTol {
    fn default() -> Self {
        RootTol { ftol: 1e-12, xtol: 4.0 * f64::EPSILON, max_iter: 200 }
    }
}

/// Brent's method (bisection safeguarded inverse quadratic / secant steps)
/// on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite sign or zero.
///
/// `fa`, `fb` are passed in so callers that already evaluated the end
/// points (often expensive here) do not pay twice.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    tol: RootTol,
) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NotBracketed { a, b, fa, fb });
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.xtol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= tol.ftol || xm.abs() <= tol1 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::RootNotConverged { best: b, residual: fb })
}

/// Walks right from `start` in steps of `step` until `f` changes sign
/// relative to `f(start)` (which must be nonzero), stopping at `limit`.
/// Returns the bracket `(a, b, fa, fb)`.
pub fn expand_right<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    f_start: f64,
    step: f64,
    limit: f64,
) -> Option<(f64, f64, f64, f64)> {
    let mut a = start;
    let mut fa = f_start;
    while a < limit {
        let b = (a + step).min(limit);
        let fb = f(b);
        if fb == 0.0 || fb.signum() != fa.signum() {
            return Some((a, b, fa, fb));
        }
        a = b;
        fa = fb;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let f = |x: f64| x * x - 2.0;
        let r = brent(f, 0.0, 2.0, f(0.0), f(2.0), RootTol { ftol: 0.0, ..Default::default() })
            .unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unbracketed() {
        let f = |x: f64| x * x + 1.0;
        assert!(matches!(
            brent(f, -1.0, 1.0, 2.0, 2.0, RootTol::default()),
            Err(Error::NotBracketed { .. })
        ));
    }

    #[test]
    fn expansion_finds_first_crossing() {
        let f = |x: f64| x - 0.35;
        let (a, b, fa, fb) = expand_right(f, 0.0, -0.35, 0.1, 1.0).unwrap();
        assert!(a <= 0.35 && 0.35 <= b);
        assert!(fa < 0.0 && fb > 0.0);
        assert!(expand_right(f, 0.0, -0.35, 0.1, 0.3).is_none());
    }
}
