//! Small numerical kernels shared by the analysis modules: adaptive
//! quadrature, bracketed root finding, 1-D minimisation and finite
//! differences.

pub mod diff;
pub mod minimize;
pub mod quad;
pub mod roots;

/// `n` uniformly spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |k| if k + 1 == n && n > 1 { hi } else { lo + step * k as f64 })
}

/// `n` uniformly spaced interior points of `(lo, hi)`, endpoints excluded.
pub fn interior_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n + 1) as f64;
    (1..=n).map(|k| lo + step * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_ends() {
        let v: Vec<f64> = linspace(-1.0, 1.0, 5).collect();
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn interior_grid_excludes_ends() {
        let v = interior_grid(-2.0, -0.25, 36);
        assert_eq!(v.len(), 36);
        assert!(v[0] > -2.0 && v[35] < -0.25);
        let h = v[1] - v[0];
        assert!((h - 1.75 / 37.0).abs() < 1e-15);
    }
}
