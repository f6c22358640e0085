//! Polar reduction of the fast linearisation.
//!
//! With `z = r (cos theta, sin theta)` the angle obeys `theta' = Phi(x, theta, eps)`
//! on `r = 0`, where
//!
//! `Phi = g1 cos^2 + (g2 - f1) cos sin - f2 sin^2`.
//!
//! Equilibria of `Phi(x, ., 0)` are eigenvector angles of `A(x; 0)`; the two
//! branches `S0` (angle of the `mu1` eigenvector) and `Z0` (angle of the
//! `mu2` eigenvector) cross at `(x*, theta*)` in a transcritical point.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{diff, linspace};
use crate::spectral::SpectralProfile;
use crate::system::{FastSlowSystem, Jacobian};

/// `|lambda - 1|` below this counts as `lambda = 1`.
pub const LAMBDA_TOL: f64 = 1e-8;
pub const INVARIANCE_EPS: [f64; 2] = [1e-2, 1e-3];
pub const INVARIANCE_TOL: f64 = 1e-8;
const INVARIANCE_POINTS: usize = 101;
const COROLLARY_TOL: f64 = 1e-8;
const DEGENERATE_SLOPE: f64 = 1e-12;

/// Reduces an angle modulo `pi` into `[-pi/2, pi/2)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let r = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if r >= FRAC_PI_2 { r - PI } else { r }
}

/// Signed distance between two angles as elements of `R mod pi`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    reduce_angle(a - b)
}

/// `(sin, cos)` with the quadrant taken off first, so that the floating
/// point multiples of `pi/2` map to exact zeros and ones.
pub fn sin_cos(theta: f64) -> (f64, f64) {
    let k = (theta / FRAC_PI_2).round();
    let (s, c) = (theta - k * FRAC_PI_2).sin_cos();
    match (k as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

pub fn phi_from(a: &Jacobian, theta: f64) -> f64 {
    let (s, c) = sin_cos(theta);
    a.g1 * c * c + (a.g2 - a.f1) * c * s - a.f2 * s * s
}

pub fn dphi_dtheta_from(a: &Jacobian, theta: f64) -> f64 {
    let (s, c) = sin_cos(theta);
    (a.g2 - a.f1) * (c * c - s * s) - 2.0 * (a.f2 + a.g1) * s * c
}

/// Angular velocity on `r = 0`.
pub fn phi(sys: &FastSlowSystem, x: f64, theta: f64, eps: f64) -> f64 {
    phi_from(&sys.jacobian(x, eps), theta)
}

pub fn dphi_dtheta(sys: &FastSlowSystem, x: f64, theta: f64, eps: f64) -> f64 {
    dphi_dtheta_from(&sys.jacobian(x, eps), theta)
}

/// Radial growth rate `r'/r` on `r = 0`.
pub fn radial_rate(a: &Jacobian, theta: f64) -> f64 {
    let (s, c) = sin_cos(theta);
    (a.f1 * c + a.f2 * s) * c + (a.g1 * c + a.g2 * s) * s
}

/// Angle of an eigenvector of `a` for eigenvalue `mu`, or `None` when
/// `a - mu I` vanishes (every direction is an eigenvector).
pub fn eigenvector_angle(a: &Jacobian, mu: f64) -> Option<f64> {
    let va = (a.f2, mu - a.f1);
    let vb = (mu - a.g2, a.g1);
    let na = va.0.hypot(va.1);
    let nb = vb.0.hypot(vb.1);
    let scale = 1.0 + a.max_abs();
    let v = if na >= nb { va } else { vb };
    if na.max(nb) <= 1e-13 * scale {
        return None;
    }
    Some(reduce_angle(v.1.atan2(v.0)))
}

fn limit_step(x_star: f64) -> f64 {
    1e-7 * (1.0 + x_star.abs())
}

/// Eigenvector angles `(theta1, theta2)` of `mu1(x)` and `mu2(x)` at
/// `eps = 0`. Where `A(x; 0)` is a multiple of the identity the angles
/// are taken as limits from the left.
pub fn branch_angles(profile: &SpectralProfile, x: f64) -> (f64, f64) {
    let sys = profile.system();
    let angle = |x: f64, second: bool| {
        let a = sys.jacobian(x, 0.0);
        let mu = if second { profile.mu2(x) } else { profile.mu1(x) };
        eigenvector_angle(&a, mu)
    };
    let h = limit_step(profile.x_star);
    let pick = |second: bool| {
        angle(x, second)
            .or_else(|| angle(x - h, second))
            .or_else(|| angle(x + h, second))
            .unwrap_or(f64::NAN)
    };
    (pick(false), pick(true))
}

/// Normal-form coefficients `(T1, T2)` of `Phi(x, ., 0)` about `theta*`.
pub fn transcritical_coeffs(sys: &FastSlowSystem, theta_star: f64, x: f64) -> (f64, f64) {
    let a = sys.jacobian(x, 0.0);
    let (s, c) = sin_cos(theta_star);
    let t1 = (a.g2 - a.f1) * (c * c - s * s) - 2.0 * (a.f2 + a.g1) * s * c;
    let t2 = -2.0 * (a.g2 - a.f1) * s * c - (a.f2 + a.g1) * (c * c - s * s);
    (t1, t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Half the `eps`-derivative of `Phi`.
    pub coef_delta: f64,
}

fn second_step(x: f64) -> f64 {
    1e-3 * (1.0 + x.abs())
}

fn first_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

/// Half second partials of `Phi` at `(x*, theta*, 0)` and half its
/// `eps`-derivative, by Richardson-extrapolated central differences.
pub fn theorem_coeffs_at(sys: &FastSlowSystem, x_star: f64, theta_star: f64) -> TheoremCoeffs {
    let h2 = second_step(x_star);
    let h1 = first_step(x_star);
    let p = |x: f64, th: f64| phi(sys, x, th, 0.0);
    TheoremCoeffs {
        alpha: 0.5 * diff::second(|th| p(x_star, th), theta_star, h2),
        beta: 0.5 * diff::mixed(p, x_star, theta_star, h2, h2),
        gamma: 0.5 * diff::second(|x| p(x, theta_star), x_star, h2),
        coef_delta: 0.5 * diff::first(|e| phi(sys, x_star, theta_star, e), 0.0, h1),
    }
}

/// `(coef_delta alpha + beta) / sqrt(beta^2 - gamma alpha)`.
pub fn lambda_value(alpha: f64, beta: f64, gamma: f64, coef_delta: f64) -> Result<f64> {
    let d = beta * beta - gamma * alpha;
    if !(d > 0.0) {
        return Err(Error::DegenerateTranscritical(d));
    }
    Ok((coef_delta * alpha + beta) / d.sqrt())
}

impl TheoremCoeffs {
    pub fn lambda(&self) -> Result<f64> {
        lambda_value(self.alpha, self.beta, self.gamma, self.coef_delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    S0,
    Z0,
}

/// Largest deviation of the graph `theta = theta_b(x)` from invariance
/// under `x' = eps, theta' = Phi`, i.e. `|Phi(x, theta_b, eps) - eps theta_b'(x)|`
/// over a 101-point grid and the given `eps` samples.
pub fn branch_invariance_residual(profile: &SpectralProfile, branch: Branch, eps_samples: &[f64]) -> f64 {
    let sys = profile.system();
    let dom = sys.domain();
    let h = 1e-5 * (1.0 + dom.width());
    let theta = |x: f64| {
        let (t1, t2) = branch_angles(profile, x);
        match branch {
            Branch::S0 => t1,
            Branch::Z0 => t2,
        }
    };
    let mut worst = 0.0f64;
    for x in linspace(dom.lo + 2.0 * h, dom.hi - 2.0 * h, INVARIANCE_POINTS) {
        if (x - profile.x_star).abs() <= 2.0 * h {
            continue;
        }
        let th = theta(x);
        let slope = angle_diff(theta(x + h), theta(x - h)) / (2.0 * h);
        for &eps in eps_samples {
            let r = (phi(sys, x, th, eps) - eps * slope).abs();
            worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
        }
    }
    worst
}

pub fn branch_invariance(profile: &SpectralProfile, branch: Branch, eps_samples: &[f64], tol: f64) -> bool {
    branch_invariance_residual(profile, branch, eps_samples) <= tol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Attracting,
    Repelling,
}

/// Stability of `(S0, Z0)` at `x` from the sign of `dPhi/dtheta`.
pub fn classify_branch_stability(profile: &SpectralProfile, x: f64) -> Result<(Stability, Stability)> {
    let (t1, t2) = branch_angles(profile, x);
    let classify = |th: f64| {
        let slope = dphi_dtheta(profile.system(), x, th, 0.0);
        if slope.abs() < DEGENERATE_SLOPE || slope.is_nan() {
            Err(Error::DegenerateBranch { x, slope })
        } else if slope < 0.0 {
            Ok(Stability::Attracting)
        } else {
            Ok(Stability::Repelling)
        }
    };
    Ok((classify(t1)?, classify(t2)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryCheck {
    pub condition: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub x: f64,
    pub theta: f64,
    pub checks: Vec<CorollaryCheck>,
}

impl CorollaryReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, condition: &str) -> Option<&CorollaryCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

/// The five derivative conditions that hold at a transcritical point.
pub fn corollary_checks(sys: &FastSlowSystem, x: f64, theta: f64) -> CorollaryReport {
    let h1 = first_step(x);
    let h2 = second_step(x);
    let p = |x: f64, th: f64| phi(sys, x, th, 0.0);
    let p_theta = dphi_dtheta(sys, x, theta, 0.0);
    let p_x = diff::first(|u| p(u, theta), x, h1);
    let p_tt = diff::second(|th| p(x, th), theta, h2);
    let p_xt = diff::mixed(p, x, theta, h2, h2);
    let p_xx = diff::second(|u| p(u, theta), x, h2);
    let det = p_tt * p_xx - p_xt * p_xt;
    let zero = |condition, value: f64| CorollaryCheck { condition, value, pass: value.abs() <= COROLLARY_TOL };
    let nonzero = |condition, value: f64| CorollaryCheck { condition, value, pass: value.abs() >= COROLLARY_TOL };
    CorollaryReport {
        x,
        theta,
        checks: vec![
            zero("dphi_dtheta_zero", p_theta),
            zero("dphi_dx_zero", p_x),
            nonzero("d2phi_dtheta2_nonzero", p_tt),
            nonzero("d2phi_dxdtheta_nonzero", p_xt),
            CorollaryCheck { condition: "hessian_det_negative", value: det, pass: det < 0.0 },
        ],
    }
}

/// Coefficients, `lambda` and corollary verdicts for one choice of `theta*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollisionRoute {
    pub theta_star: f64,
    pub coeffs: TheoremCoeffs,
    /// `None` when `beta^2 - gamma alpha <= 0`.
    pub lambda: Option<f64>,
    pub corollary_report: CorollaryReport,
}

impl CollisionRoute {
    pub fn new(sys: &FastSlowSystem, x_star: f64, theta_star: f64) -> Self {
        let coeffs = theorem_coeffs_at(sys, x_star, theta_star);
        CollisionRoute {
            theta_star,
            lambda: coeffs.lambda().ok(),
            coeffs,
            corollary_report: corollary_checks(sys, x_star, theta_star),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolarAnalysis {
    #[serde(skip)]
    profile: SpectralProfile,
    pub x_star: f64,
    pub geometric_multiplicity: u8,
    /// `theta*` is the limit of `theta1` as `x -> x*` from the left.
    pub primary: CollisionRoute,
    /// With multiplicity 2 every angle is an equilibrium at `x*`; the route
    /// through the limit of `theta2` is reported alongside.
    pub alternate: Option<CollisionRoute>,
    pub s0_invariant: bool,
    pub z0_invariant: bool,
    pub s0_residual: f64,
    pub z0_residual: f64,
}

impl PolarAnalysis {
    pub fn new(profile: &SpectralProfile) -> Self {
        let sys = profile.system();
        let xs = profile.x_star;
        let h = limit_step(xs);
        let (t1_left, t2_left) = branch_angles(profile, xs - h);
        let multiplicity = profile.geometric_multiplicity_at_star;
        let theta_star = if multiplicity == 1 { branch_angles(profile, xs).0 } else { t1_left };
        let primary = CollisionRoute::new(sys, xs, theta_star);
        let alternate = (multiplicity == 2 && angle_diff(t2_left, t1_left).abs() > 1e-6)
            .then(|| CollisionRoute::new(sys, xs, t2_left));
        let s0_residual = branch_invariance_residual(profile, Branch::S0, &INVARIANCE_EPS);
        let z0_residual = branch_invariance_residual(profile, Branch::Z0, &INVARIANCE_EPS);
        let mut profile = profile.clone();
        profile.theta_star = Some(theta_star);
        PolarAnalysis {
            profile,
            x_star: xs,
            geometric_multiplicity: multiplicity,
            primary,
            alternate,
            s0_invariant: s0_residual <= INVARIANCE_TOL,
            z0_invariant: z0_residual <= INVARIANCE_TOL,
            s0_residual,
            z0_residual,
        }
    }

    pub fn from_system(sys: &FastSlowSystem) -> Result<Self> {
        Ok(Self::new(&SpectralProfile::new(sys)?))
    }

    pub fn profile(&self) -> &SpectralProfile {
        &self.profile
    }

    pub fn system(&self) -> &FastSlowSystem {
        self.profile.system()
    }

    pub fn theta_star(&self) -> f64 {
        self.primary.theta_star
    }

    pub fn coeffs(&self) -> TheoremCoeffs {
        self.primary.coeffs
    }

    pub fn lambda(&self) -> Result<f64> {
        self.primary.coeffs.lambda()
    }

    pub fn theta1(&self, x: f64) -> f64 {
        branch_angles(&self.profile, x).0
    }

    pub fn theta2(&self, x: f64) -> f64 {
        branch_angles(&self.profile, x).1
    }

    pub fn t1(&self, x: f64) -> f64 {
        transcritical_coeffs(self.system(), self.theta_star(), x).0
    }

    pub fn t2(&self, x: f64) -> f64 {
        transcritical_coeffs(self.system(), self.theta_star(), x).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{make_builtin, BuiltinName, Domain};
    use std::f64::consts::FRAC_PI_4;

    fn profile(n: BuiltinName) -> SpectralProfile {
        SpectralProfile::new(&make_builtin(n, None).unwrap()).unwrap()
    }

    #[test]
    fn reduction_range() {
        assert_eq!(reduce_angle(FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(reduce_angle(-FRAC_PI_2), -FRAC_PI_2);
        assert!((reduce_angle(PI) - 0.0).abs() < 1e-15);
        assert!((reduce_angle(0.75 * PI) + 0.25 * PI).abs() < 1e-15);
    }

    #[test]
    fn quadrant_sin_cos() {
        assert_eq!(sin_cos(-FRAC_PI_2), (-1.0, 0.0));
        assert_eq!(sin_cos(PI), (0.0, -1.0));
        for t in [-7.3, -2.0, -0.4, 0.0, 0.9, 2.5, 5.1] {
            let (s, c) = sin_cos(t);
            assert!((s - t.sin()).abs() < 1e-15 && (c - t.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_examples() {
        let one = make_builtin(BuiltinName::OneWayCoupled, None).unwrap();
        assert!((phi(&one, 0.0, FRAC_PI_4, 0.0) + 0.5).abs() < 1e-15);
        let eps = make_builtin(BuiltinName::EpsCoupled, None).unwrap();
        assert!((phi(&eps, -1.0, -FRAC_PI_2, 0.01) - 0.01).abs() < 1e-15);
        assert!(dphi_dtheta(&one, -1.0, -FRAC_PI_2, 0.0).abs() < 1e-15);
        assert!((dphi_dtheta(&one, -2.0, -FRAC_PI_2, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_slope_at_zero() {
        let s = FastSlowSystem::from_fns(
            "diag",
            Domain::new(-3.0, 3.0).unwrap(),
            |x, z1, z2, _| ((x - 2.0) * z1, (x + 2.0) * z2),
            |x, _| Jacobian { f1: x - 2.0, f2: 0.0, g1: 0.0, g2: x + 2.0 },
        )
        .unwrap();
        assert_eq!(dphi_dtheta(&s, 0.7, 0.0, 0.0), 4.0);
        assert_eq!(transcritical_coeffs(&s, 0.0, 0.7).1, 0.0);
    }

    #[test]
    fn branch_angle_examples() {
        let one = profile(BuiltinName::OneWayCoupled);
        let (a, b) = branch_angles(&one, 0.0);
        assert_eq!(a, -FRAC_PI_2);
        assert!(b.abs() < 1e-15);
        let (a, b) = branch_angles(&one, -1.0);
        assert_eq!((a, b), (-FRAC_PI_2, -FRAC_PI_2));
        let (a, b) = branch_angles(&one, -3.0);
        assert!((b - (-3.0f64 / -2.0).atan()).abs() < 1e-14, "{a} {b}");
        let nl = profile(BuiltinName::Nonlinear);
        let (a, b) = branch_angles(&nl, 0.0);
        assert_eq!(a, -FRAC_PI_2);
        assert!(b.abs() < 1e-15);
        let (a, b) = branch_angles(&nl, -1.0);
        assert_eq!(a, -FRAC_PI_2);
        assert!(b.abs() < 1e-15);
    }

    #[test]
    fn normal_form_linear_term() {
        let one = make_builtin(BuiltinName::OneWayCoupled, None).unwrap();
        assert!(transcritical_coeffs(&one, -FRAC_PI_2, -1.0).0.abs() < 1e-15);
        assert!((transcritical_coeffs(&one, -FRAC_PI_2, 0.0).0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_value(-1.0, 0.5, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(lambda_value(-1.0, 0.5, 0.0, 0.5).unwrap().abs() < 1e-15);
        assert!((lambda_value(0.0, -0.5, 0.0, 0.5).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(lambda_value(1.0, 0.0, 1.0, 0.0), Err(Error::DegenerateTranscritical(_))));
    }

    fn close(c: TheoremCoeffs, expect: [f64; 4]) -> bool {
        let got = [c.alpha, c.beta, c.gamma, c.coef_delta];
        got.iter().zip(expect).all(|(g, e)| (g - e).abs() < 1e-6)
    }

    #[test]
    fn linear_example_coefficients() {
        let a = PolarAnalysis::new(&profile(BuiltinName::OneWayCoupled));
        assert!(close(a.coeffs(), [-1.0, 0.5, 0.0, 0.0]), "{:?}", a.coeffs());
        assert!((a.lambda().unwrap() - 1.0).abs() < 1e-8);
        let a = PolarAnalysis::new(&profile(BuiltinName::EpsCoupled));
        assert!(close(a.coeffs(), [-1.0, 0.5, 0.0, 0.5]), "{:?}", a.coeffs());
        assert!(a.lambda().unwrap().abs() < 1e-8);
    }

    #[test]
    fn nonlinear_routes() {
        let a = PolarAnalysis::new(&profile(BuiltinName::Nonlinear));
        assert_eq!(a.theta_star(), -FRAC_PI_2);
        assert!(close(a.coeffs(), [0.0, 0.5, 0.0, -0.5]), "{:?}", a.coeffs());
        assert!((a.lambda().unwrap() - 1.0).abs() < 1e-8);
        let alt = a.alternate.as_ref().unwrap();
        assert!(alt.theta_star.abs() < 1e-15);
        assert!(close(alt.coeffs, [0.0, -0.5, 0.0, 0.0]), "{:?}", alt.coeffs);
        assert!((alt.lambda.unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn invariance_flags() {
        let a = PolarAnalysis::new(&profile(BuiltinName::OneWayCoupled));
        assert!(a.s0_invariant && !a.z0_invariant);
        let a = PolarAnalysis::new(&profile(BuiltinName::EpsCoupled));
        assert!(!a.s0_invariant && !a.z0_invariant);
        let a = PolarAnalysis::new(&profile(BuiltinName::Nonlinear));
        assert!(!a.s0_invariant && a.z0_invariant);
        assert!(a.z0_residual < 1e-14);
    }

    #[test]
    fn stability_examples() {
        use Stability::*;
        let one = profile(BuiltinName::OneWayCoupled);
        assert_eq!(classify_branch_stability(&one, -2.0).unwrap(), (Attracting, Repelling));
        assert_eq!(classify_branch_stability(&one, 0.0).unwrap(), (Repelling, Attracting));
        let eps = profile(BuiltinName::EpsCoupled);
        assert_eq!(classify_branch_stability(&eps, -2.0).unwrap(), (Attracting, Repelling));
        assert!(matches!(classify_branch_stability(&one, -1.0), Err(Error::DegenerateBranch { .. })));
    }

    #[test]
    fn corollary_verdicts() {
        let one = make_builtin(BuiltinName::OneWayCoupled, None).unwrap();
        assert!(corollary_checks(&one, -1.0, -FRAC_PI_2).all_pass());
        let nl = make_builtin(BuiltinName::Nonlinear, None).unwrap();
        let r = corollary_checks(&nl, -1.0, -FRAC_PI_2);
        assert!(!r.check("d2phi_dtheta2_nonzero").unwrap().pass);
        let r = corollary_checks(&one, 0.5, -FRAC_PI_2);
        assert!(!r.check("dphi_dtheta_zero").unwrap().pass);
    }
}
