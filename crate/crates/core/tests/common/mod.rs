//! Checks shared by the property tests and the acceptance suite. Each
//! returns `Err` with a description of the first violation.

#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use delayexit::polar::{
    angle_diff, branch_angles, classify_branch_stability, corollary_checks, dphi_dtheta, phi, PolarAnalysis,
};
use delayexit::spectral::{eigenvalues_xi, SpectralProfile};
use delayexit::system::{make_builtin, BuiltinName, Domain, FastSlowSystem, Jacobian};

pub type Check = Result<(), String>;

pub fn builtin(n: BuiltinName) -> FastSlowSystem {
    make_builtin(n, None).unwrap()
}

/// Linear system `A(x) = A0 + x A1` with constant coefficients.
pub fn affine_system(a0: [f64; 4], a1: [f64; 4]) -> FastSlowSystem {
    let jac = move |x: f64, _eps: f64| Jacobian {
        f1: a0[0] + x * a1[0],
        f2: a0[1] + x * a1[1],
        g1: a0[2] + x * a1[2],
        g2: a0[3] + x * a1[3],
    };
    FastSlowSystem::from_fns(
        "affine",
        Domain::new(-4.0, 4.0).unwrap(),
        move |x, z1, z2, eps| {
            let a = jac(x, eps);
            (a.f1 * z1 + a.f2 * z2, a.g1 * z1 + a.g2 * z2)
        },
        jac,
    )
    .unwrap()
}

/// Eigenvalue sum and product against trace and determinant. Complex
/// spectra are skipped.
pub fn eigen_sum_product(sys: &FastSlowSystem, x: f64, eps: f64) -> Check {
    let a = sys.jacobian(x, eps);
    let Ok((p, m)) = eigenvalues_xi(sys, x, eps) else {
        return Ok(());
    };
    let scale = 1.0 + a.max_abs();
    let sum_err = (p + m - (a.f1 + a.g2)).abs();
    let prod_err = (p * m - (a.f1 * a.g2 - a.f2 * a.g1)).abs();
    if sum_err > 1e-10 * scale || prod_err > 1e-10 * scale * scale {
        return Err(format!("x = {x}, eps = {eps}: sum error {sum_err:e}, product error {prod_err:e}"));
    }
    Ok(())
}

pub fn phi_periodic(sys: &FastSlowSystem, x: f64, theta: f64, eps: f64) -> Check {
    let scale = 1.0 + sys.jacobian(x, eps).max_abs();
    let d = (phi(sys, x, theta + PI, eps) - phi(sys, x, theta, eps)).abs();
    if d > 1e-12 * scale {
        return Err(format!("Phi(x, theta + pi) differs by {d:e} at x = {x}, theta = {theta}"));
    }
    Ok(())
}

/// Analytic angle derivative against a fourth-order central difference.
pub fn dphi_matches_difference(sys: &FastSlowSystem, x: f64, theta: f64, eps: f64) -> Check {
    let h = 1e-3;
    let f = |t: f64| phi(sys, x, t, eps);
    let fd = (8.0 * (f(theta + h) - f(theta - h)) - (f(theta + 2.0 * h) - f(theta - 2.0 * h))) / (12.0 * h);
    let d = (dphi_dtheta(sys, x, theta, eps) - fd).abs();
    if d > 1e-7 {
        return Err(format!("dPhi/dtheta off by {d:e} at x = {x}, theta = {theta}"));
    }
    Ok(())
}

/// Zeros of `Phi(x, ., 0)` over one period by scan and bisection. The window
/// is offset from the multiples of `pi/2`, where `Phi` often vanishes exactly,
/// and the grid is fine enough to split root pairs `|x - x*| / 10` apart.
pub fn phi_roots(sys: &FastSlowSystem, x: f64) -> Vec<f64> {
    let f = |t: f64| phi(sys, x, t, 0.0);
    let n = 40_000;
    let start = -FRAC_PI_2 + 0.123_456_789;
    let grid: Vec<f64> = (0..=n).map(|i| start + PI * i as f64 / n as f64).collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let fa = f(a);
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        let fb = f(b);
        if fb == 0.0 || fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m).signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// Every eigenvector angle is a zero of `Phi(x, ., 0)` and vice versa.
pub fn roots_are_branches(sys: &FastSlowSystem, x: f64) -> Check {
    let profile = SpectralProfile::new(sys).map_err(|e| e.to_string())?;
    let (t1, t2) = branch_angles(&profile, x);
    let roots = phi_roots(sys, x);
    for t in [t1, t2] {
        let best = roots.iter().map(|r| angle_diff(*r, t).abs()).fold(f64::INFINITY, f64::min);
        if best > 1e-9 {
            return Err(format!("branch angle {t} at x = {x} is {best:e} from the nearest root of {roots:?}"));
        }
    }
    for r in &roots {
        let best = angle_diff(*r, t1).abs().min(angle_diff(*r, t2).abs());
        if best > 1e-9 {
            return Err(format!("root {r} at x = {x} matches no branch ({t1}, {t2})"));
        }
    }
    Ok(())
}

/// Both branches change stability across `x*`.
pub fn stability_flips(sys: &FastSlowSystem, d: f64) -> Check {
    let profile = SpectralProfile::new(sys).map_err(|e| e.to_string())?;
    let xs = profile.x_star;
    let left = classify_branch_stability(&profile, xs - d).map_err(|e| e.to_string())?;
    let right = classify_branch_stability(&profile, xs + d).map_err(|e| e.to_string())?;
    if left.0 == right.0 || left.1 == right.1 || left.0 == left.1 {
        return Err(format!("x* = {xs}, d = {d}: left {left:?}, right {right:?}"));
    }
    Ok(())
}

/// Corollary conditions: all hold for the first two builtins at their
/// collision angle; for the nonlinear builtin at `theta* = -pi/2` exactly
/// the second-angle-derivative condition fails.
pub fn corollary_verdicts() -> Check {
    for n in [BuiltinName::OneWayCoupled, BuiltinName::EpsCoupled] {
        let a = PolarAnalysis::from_system(&builtin(n)).map_err(|e| e.to_string())?;
        let r = &a.primary.corollary_report;
        if !r.all_pass() {
            return Err(format!("{n}: {r:?}"));
        }
    }
    let sys = builtin(BuiltinName::Nonlinear);
    let a = PolarAnalysis::from_system(&sys).map_err(|e| e.to_string())?;
    let r = corollary_checks(&sys, a.x_star, -FRAC_PI_2);
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.condition).collect();
    if failed != ["d2phi_dtheta2_nonzero"] {
        return Err(format!("nonlinear at -pi/2 failed {failed:?}"));
    }
    Ok(())
}

pub fn t1_vanishes_at_collision(sys: &FastSlowSystem) -> Check {
    let a = PolarAnalysis::from_system(sys).map_err(|e| e.to_string())?;
    let t1 = a.t1(a.x_star);
    if t1.abs() > 1e-10 {
        return Err(format!("{}: T1(x*) = {t1:e}", sys.name()));
    }
    Ok(())
}
