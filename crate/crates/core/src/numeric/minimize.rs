//! Derivative-free 1-D minimisation.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimiser of a unimodal `f` on `[a, b]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd { c } else { d }
}

/// Refines a minimiser estimate by repeatedly fitting a parabola through
/// three symmetric samples and jumping to its vertex. Exact (up to
/// rounding) when `f` is quadratic near the minimum.
pub fn parabolic_polish<F: Fn(f64) -> f64>(f: F, mut x: f64, mut h: f64, rounds: usize) -> f64 {
    for _ in 0..rounds {
        let (fl, f0, fr) = (f(x - h), f(x), f(x + h));
        let curv = fl - 2.0 * f0 + fr;
        if curv <= 0.0 || !curv.is_finite() {
            break;
        }
        let shift = 0.5 * h * (fl - fr) / curv;
        if shift.abs() > 2.0 * h {
            break;
        }
        x += shift;
        h = (shift.abs() * 4.0).clamp(h * 1e-2, h);
    }
    x
}
