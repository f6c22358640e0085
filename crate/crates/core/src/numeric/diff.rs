//! Central finite differences with one level of Richardson extrapolation.
//!
//! Step sizes are chosen by the caller; the helpers only combine samples.

/// First derivative: `(4 D(h/2) - D(h)) / 3` with `D` the central quotient.
pub fn first<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// Second derivative from the three-point stencil, Richardson-extrapolated.
pub fn second<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let f0 = f(x);
    let d = |h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// Mixed partial `∂²f/∂u∂v` from the four-point cross stencil,
/// Richardson-extrapolated.
pub fn mixed<F: Fn(f64, f64) -> f64>(f: F, u: f64, v: f64, hu: f64, hv: f64) -> f64 {
    let d = |s: f64| {
        let (a, b) = (hu * s, hv * s);
        (f(u + a, v + b) - f(u + a, v - b) - f(u - a, v + b) + f(u - a, v - b)) / (4.0 * a * b)
    };
    (4.0 * d(0.5) - d(1.0)) / 3.0
}

/// Plain (non-extrapolated) central quotient, used for cheap consistency
/// checks where `O(h^2)` is enough.
pub fn central<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_derivatives() {
        let x = 0.7;
        assert!((first(f64::sin, x, 1e-3) - x.cos()).abs() < 1e-12);
        assert!((second(f64::sin, x, 1e-3) + x.sin()).abs() < 1e-8);
        let g = |u: f64, v: f64| (u * v).sin();
        let uv = x * 0.3;
        let exact = uv.cos() - uv * uv.sin();
        assert!((mixed(g, x, 0.3, 1e-3, 1e-3) - exact).abs() < 1e-8);
    }
}
