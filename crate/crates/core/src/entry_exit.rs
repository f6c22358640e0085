//! Entry-exit relations: where a trajectory entering near the critical
//! manifold at `x0` leaves it again.
//!
//! Every relation balances accumulated contraction against expansion,
//! `int mu dx = 0`, with the integrand switching between eigenvalue curves
//! at `x*` (transcritical passage) or at a switch point `x_tilde`
//! (passage along an invariant branch).

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::quad;
use crate::numeric::roots::{brent, RootTol};
use crate::polar::{dphi_dtheta, PolarAnalysis, LAMBDA_TOL};
use crate::spectral::{assumption_report, SpectralProfile};
use crate::system::FastSlowSystem;

pub const QUAD_TOL: f64 = 1e-11;
/// Entry points this close to `x*` use the classical relation on `mu2`.
pub const COLLISION_SNAP: f64 = 1e-9;
const ZERO_SCAN: usize = 400;
const EXPANSION_FRACTION: f64 = 0.1;
const ROOT_TOL: RootTol = RootTol { ftol: 1e-13, xtol: 1e-15, max_iter: 200 };

/// `int_{x0}^{x} mu`, adaptive Gauss-Kronrod to absolute tolerance `1e-11`.
pub fn accumulated_exponent<F: Fn(f64) -> f64>(mu: F, x0: f64, x: f64) -> Result<f64> {
    quad::integrate(mu, x0, x, QUAD_TOL)
}

/// `F(x) = int_{x0}^{x} f` with cached node values, so a probe only
/// integrates from the nearest node at or left of it.
pub struct RunningIntegral<F> {
    f: F,
    nodes: Vec<(f64, f64)>,
}

impl<F: Fn(f64) -> f64> RunningIntegral<F> {
    pub fn new(f: F, x0: f64) -> Self {
        RunningIntegral { f, nodes: vec![(x0, 0.0)] }
    }

    pub fn eval(&mut self, x: f64) -> Result<f64> {
        let k = self.nodes.partition_point(|n| n.0 <= x);
        if k == 0 {
            let (a, fa) = self.nodes[0];
            return Ok(fa + quad::integrate(&self.f, a, x, QUAD_TOL)?);
        }
        let (a, fa) = self.nodes[k - 1];
        if a == x {
            return Ok(fa);
        }
        let v = fa + quad::integrate(&self.f, a, x, QUAD_TOL)?;
        self.nodes.insert(k, (x, v));
        Ok(v)
    }

    pub fn nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Brent on a fallible function; the first error aborts the search.
fn brent_fallible<G: FnMut(f64) -> Result<f64>>(mut g: G, a: f64, b: f64, fa: f64, fb: f64) -> Result<f64> {
    let failure: Cell<Option<Error>> = Cell::new(None);
    let root = brent(
        |x| match g(x) {
            Ok(v) => v,
            Err(e) => {
                let prev = failure.take();
                failure.set(Some(prev.unwrap_or(e)));
                f64::NAN
            }
        },
        a,
        b,
        fa,
        fb,
        ROOT_TOL,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => root,
    }
}

/// First `x > start` where `base + int_{start}^{x} f` reaches zero, given
/// `base < 0`. Expands right in steps of a tenth of the remaining domain.
fn exit_after<F: Fn(f64) -> f64>(f: F, start: f64, base: f64, hi: f64) -> Result<Option<f64>> {
    let mut acc = RunningIntegral::new(f, start);
    let step = EXPANSION_FRACTION * (hi - start);
    if !(step > 0.0) {
        return Ok(None);
    }
    let (mut a, mut va) = (start, base);
    while a < hi {
        let b = (a + step).min(hi);
        let vb = base + acc.eval(b)?;
        if vb >= 0.0 {
            let root = brent_fallible(|x| Ok(base + acc.eval(x)?), a, b, va, vb)?;
            return Ok(Some(root));
        }
        a = b;
        va = vb;
    }
    Ok(None)
}

/// First zero of `f` in `(x0, hi]`, by grid scan and Brent.
fn first_zero<F: Fn(f64) -> f64>(f: &F, x0: f64, hi: f64) -> Result<Option<f64>> {
    let h = (hi - x0) / ZERO_SCAN as f64;
    let (mut a, mut fa) = (x0, f(x0));
    for i in 1..=ZERO_SCAN {
        let b = if i == ZERO_SCAN { hi } else { x0 + h * i as f64 };
        let fb = f(b);
        if fb == 0.0 || fb.signum() != fa.signum() {
            return brent(f, a, b, fa, fb, ROOT_TOL).map(Some);
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

/// First `s > x0` in `(x0, hi]` with `int_{x0}^{s} f = 0`, or `None`.
///
/// The running integral is monotone until `f` first changes sign, so the
/// search starts at that zero and expands right from it.
pub fn balance_point<F: Fn(f64) -> f64>(f: F, x0: f64, hi: f64) -> Result<Option<f64>> {
    if !(hi > x0) {
        return Ok(None);
    }
    let f0 = f(x0);
    if f0 == 0.0 {
        return Ok(Some(x0));
    }
    let Some(z) = first_zero(&f, x0, hi)? else {
        return Ok(None);
    };
    let sign = -f0.signum();
    let base = sign * accumulated_exponent(&f, x0, z)?;
    if base == 0.0 {
        return Ok(Some(z));
    }
    // normalise so the accumulated value starts negative
    exit_after(|x| sign * f(x), z, base, hi)
}

/// Root `x1 > x0` of `int_{x0}^{x1} mu = 0` on `(x0, hi]`.
pub fn solve_classical<F: Fn(f64) -> f64>(mu: F, x0: f64, hi: f64) -> Result<f64> {
    balance_point(mu, x0, hi)?.ok_or(Error::NoExitInDomain { x0 })
}

fn require_left_of_collision(profile: &SpectralProfile, x0: f64) -> Result<()> {
    let dom = profile.system().domain();
    if !dom.contains(x0) {
        return Err(Error::InvalidInput(format!("x0 = {x0} lies outside [{}, {}]", dom.lo, dom.hi)));
    }
    if x0 >= profile.x_star {
        return Err(Error::Precondition(format!("x0 = {x0} must lie left of x* = {}", profile.x_star)));
    }
    Ok(())
}

/// Exit point through a transcritical passage:
/// `int_{x0}^{x*} mu1 + int_{x*}^{x1} mu2 = 0`.
pub fn solve_trans(profile: &SpectralProfile, x0: f64) -> Result<f64> {
    require_left_of_collision(profile, x0)?;
    let xs = profile.x_star;
    let base = accumulated_exponent(|x| profile.mu1(x), x0, xs)?;
    if base >= 0.0 {
        return Err(Error::Precondition(format!(
            "no net contraction at x* (accumulated exponent {base})"
        )));
    }
    exit_after(|x| profile.mu2(x), xs, base, profile.system().domain().hi)?.ok_or(Error::NoExitInDomain { x0 })
}

/// Integrand of the switch-point relation, `dPhi/dtheta` along `S0`.
pub fn switch_integrand(analysis: &PolarAnalysis, x: f64) -> f64 {
    dphi_dtheta(analysis.system(), x, analysis.theta1(x), 0.0)
}

/// Switch point `x_tilde` where the contraction accumulated towards `S0`
/// is used up: `int_{x0}^{x_tilde} dPhi/dtheta(x, theta1(x), 0) dx = 0`.
pub fn solve_xtil(analysis: &PolarAnalysis, x0: f64) -> Result<f64> {
    let profile = analysis.profile();
    if (x0 - profile.x_star).abs() <= COLLISION_SNAP && profile.system().domain().contains(x0) {
        return Ok(x0);
    }
    require_left_of_collision(profile, x0)?;
    let g = |x: f64| switch_integrand(analysis, x);
    let g0 = g(x0);
    if !(g0 < 0.0) {
        return Err(Error::Precondition(format!("S0 is not attracting at x0 = {x0} (slope {g0})")));
    }
    match balance_point(g, x0, profile.system().domain().hi)? {
        Some(xt) if xt > x0 => Ok(xt),
        _ => Err(Error::NoSwitchInDomain { x0 }),
    }
}

/// Exit point along an invariant `S0`: switch at `x_tilde`, then
/// `int_{x0}^{x_tilde} mu1 + int_{x_tilde}^{x1} mu2 = 0`.
pub fn solve_invar(analysis: &PolarAnalysis, x0: f64) -> Result<(f64, f64)> {
    let profile = analysis.profile();
    let hi = profile.system().domain().hi;
    let xt = solve_xtil(analysis, x0)?;
    let base = accumulated_exponent(|x| profile.mu1(x), x0, xt)?;
    let x1 = if base == 0.0 {
        solve_classical(|x| profile.mu2(x), xt, hi)?
    } else if base < 0.0 {
        exit_after(|x| profile.mu2(x), xt, base, hi)?.ok_or(Error::NoExitInDomain { x0 })?
    } else {
        return Err(Error::Precondition(format!("expansion along mu1 before the switch point ({base})")));
    };
    Ok((xt, x1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitCase {
    Trans,
    Invar,
    Classical,
}

impl ExitCase {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitCase::Trans => "trans",
            ExitCase::Invar => "invar",
            ExitCase::Classical => "classical",
        }
    }
}

impl std::fmt::Display for ExitCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InvarianceFlags {
    pub s0: bool,
    pub z0: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitPrediction {
    pub case: ExitCase,
    pub x0: f64,
    pub x_tilde: Option<f64>,
    pub x1: f64,
    /// `lambda` of the primary collision route; NaN when degenerate.
    pub lambda_used: f64,
    pub invariance_flags: InvarianceFlags,
    pub x_star: f64,
    /// Standing-assumption items that failed for this entry point.
    pub assumption_failures: Vec<u8>,
}

/// The defining integral of the prediction's case, evaluated at its roots.
pub fn exit_residual(profile: &SpectralProfile, p: &ExitPrediction) -> Result<f64> {
    let mu1 = |x: f64| profile.mu1(x);
    let mu2 = |x: f64| profile.mu2(x);
    Ok(match p.case {
        ExitCase::Trans => accumulated_exponent(mu1, p.x0, p.x_star)? + accumulated_exponent(mu2, p.x_star, p.x1)?,
        ExitCase::Invar => {
            let xt = p.x_tilde.unwrap_or(p.x0);
            accumulated_exponent(mu1, p.x0, xt)? + accumulated_exponent(mu2, xt, p.x1)?
        }
        ExitCase::Classical => {
            let a = accumulated_exponent(mu1, p.x0, p.x1)?;
            let b = accumulated_exponent(mu2, p.x0, p.x1)?;
            if a.abs() < b.abs() { a } else { b }
        }
    })
}

fn classical_exit(profile: &SpectralProfile, x0: f64, snapped: bool) -> Result<f64> {
    let hi = profile.system().domain().hi;
    if snapped {
        return solve_classical(|x| profile.mu2(x), x0, hi);
    }
    let mut best: Option<f64> = None;
    for second in [false, true] {
        let mu = |x: f64| if second { profile.mu2(x) } else { profile.mu1(x) };
        if mu(x0) < 0.0 {
            if let Some(x1) = balance_point(mu, x0, hi)? {
                best = Some(best.map_or(x1, |b| b.min(x1)));
            }
        }
    }
    best.ok_or(Error::NoExitInDomain { x0 })
}

/// Predicts the exit point for entry at `x0`.
///
/// Right of `x*` (or within `1e-9` of it) the classical relation applies
/// on whichever curve changes sign. Left of `x*` the transcritical
/// relation is used unless `lambda = 1`, in which case the invariant
/// branch decides: `Z0` gives the transcritical relation and `S0` the
/// switch-point relation.
pub fn predict_exit(sys: &FastSlowSystem, x0: f64) -> Result<ExitPrediction> {
    let analysis = PolarAnalysis::from_system(sys)?;
    predict_exit_with(&analysis, x0)
}

/// As [`predict_exit`], reusing a precomputed analysis.
pub fn predict_exit_with(analysis: &PolarAnalysis, x0: f64) -> Result<ExitPrediction> {
    let profile = analysis.profile();
    let sys = profile.system();
    let dom = sys.domain();
    if !dom.contains(x0) {
        return Err(Error::InvalidInput(format!("x0 = {x0} lies outside [{}, {}]", dom.lo, dom.hi)));
    }
    let xs = profile.x_star;
    let flags = InvarianceFlags { s0: analysis.s0_invariant, z0: analysis.z0_invariant };
    let lambda = analysis.lambda();
    let mut prediction = ExitPrediction {
        case: ExitCase::Classical,
        x0,
        x_tilde: None,
        x1: f64::NAN,
        lambda_used: *lambda.as_ref().unwrap_or(&f64::NAN),
        invariance_flags: flags,
        x_star: xs,
        assumption_failures: Vec::new(),
    };

    let snapped = (x0 - xs).abs() <= COLLISION_SNAP;
    if snapped || x0 > xs {
        prediction.x1 = classical_exit(profile, x0, snapped)?;
        return Ok(prediction);
    }

    let report = assumption_report(sys, x0)?;
    prediction.assumption_failures = report.failed();
    if !prediction.assumption_failures.is_empty() {
        log::info!(
            "{}: standing assumptions {:?} fail for x0 = {x0}; proceeding",
            sys.name(),
            prediction.assumption_failures
        );
    }

    let lambda = lambda?;
    let use_trans = if (lambda - 1.0).abs() > LAMBDA_TOL {
        true
    } else {
        match (flags.s0, flags.z0) {
            (false, true) => true,
            (true, false) => false,
            (true, true) => {
                let trans_x1 = solve_trans(profile, x0)?;
                let (xt, invar_x1) = solve_invar(analysis, x0)?;
                return Err(Error::AmbiguousCase { trans_x1, invar_x_tilde: xt, invar_x1 });
            }
            (false, false) => return Err(Error::UncoveredCase { lambda }),
        }
    };
    if use_trans {
        prediction.case = ExitCase::Trans;
        prediction.x1 = solve_trans(profile, x0)?;
    } else {
        let (xt, x1) = solve_invar(analysis, x0)?;
        prediction.case = ExitCase::Invar;
        prediction.x_tilde = Some(xt);
        prediction.x1 = x1;
    }
    Ok(prediction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{make_builtin, BuiltinName};

    fn analysis(n: BuiltinName) -> PolarAnalysis {
        PolarAnalysis::from_system(&make_builtin(n, None).unwrap()).unwrap()
    }

    #[test]
    fn exponent_examples() {
        assert!(accumulated_exponent(|x| x, -2.0, 2.0).unwrap().abs() < 1e-14);
        assert!((accumulated_exponent(|_| -1.0, -2.0, 0.0).unwrap() + 2.0).abs() < 1e-14);
        assert!((accumulated_exponent(|x| x, -1.0, 3f64.sqrt()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn running_integral_matches_direct() {
        let mut acc = RunningIntegral::new(|x: f64| x.cos(), 0.0);
        for x in [0.5, 2.0, 1.0, 1.5, 1.5, -0.5] {
            assert!((acc.eval(x).unwrap() - x.sin()).abs() < 1e-13, "{x}");
        }
        assert_eq!(acc.nodes(), 5);
    }

    #[test]
    fn classical_examples() {
        assert!((solve_classical(|x| x, -0.5, 4.0).unwrap() - 0.5).abs() < 1e-12);
        let x1 = solve_classical(|x| x, -1e-6, 4.0).unwrap();
        assert!(x1 > 0.0 && x1 < 2e-6);
        assert!(matches!(solve_classical(|_| -1.0, -0.5, 4.0), Err(Error::NoExitInDomain { .. })));
    }

    #[test]
    fn classical_quadratic_rate() {
        // oracle: s^2/2 + s^3/3 = 0.4^2/2 - 0.4^3/3 solved by bisection
        let target = 0.08 - 0.064 / 3.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid / 2.0 + mid.powi(3) / 3.0 < target { lo = mid } else { hi = mid }
        }
        let x1 = solve_classical(|x| x + x * x, -0.4, 4.0).unwrap();
        assert!((x1 - lo).abs() < 1e-10, "{x1} vs {lo}");
        assert!((x1 - 0.3116843969807043).abs() < 1e-10);
    }

    #[test]
    fn trans_closed_form() {
        let a = analysis(BuiltinName::EpsCoupled);
        for x0 in [-2.0, -1.5, -1.25] {
            let x1 = solve_trans(a.profile(), x0).unwrap();
            assert!((x1 - (-1.0 - 2.0 * x0).sqrt()).abs() < 1e-10, "{x0}: {x1}");
        }
    }

    #[test]
    fn switch_point_examples() {
        let a = analysis(BuiltinName::OneWayCoupled);
        assert!(solve_xtil(&a, -2.0).unwrap().abs() < 1e-10);
        assert!((solve_xtil(&a, -3.0).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(solve_xtil(&a, -1.0).unwrap(), -1.0);
    }

    #[test]
    fn invar_examples() {
        let a = analysis(BuiltinName::OneWayCoupled);
        for (x0, xt, x1) in [(-2.0, 0.0, 2.0), (-3.0, 1.0, 3.0), (-1.25, -0.75, 1.25)] {
            let (t, e) = solve_invar(&a, x0).unwrap();
            assert!((t - xt).abs() < 1e-10 && (e - x1).abs() < 1e-10, "{x0}: {t} {e}");
        }
    }

    #[test]
    fn dispatch_examples() {
        let one = make_builtin(BuiltinName::OneWayCoupled, None).unwrap();
        let p = predict_exit(&one, -2.0).unwrap();
        assert_eq!(p.case, ExitCase::Invar);
        assert!(p.x_tilde.unwrap().abs() < 1e-10 && (p.x1 - 2.0).abs() < 1e-10);

        let eps = make_builtin(BuiltinName::EpsCoupled, None).unwrap();
        let p = predict_exit(&eps, -2.0).unwrap();
        assert_eq!(p.case, ExitCase::Trans);
        assert!((p.x1 - 3f64.sqrt()).abs() < 1e-10);
        let p = predict_exit(&eps, -0.5).unwrap();
        assert_eq!(p.case, ExitCase::Classical);
        assert!((p.x1 - 0.5).abs() < 1e-10);

        let nl = make_builtin(BuiltinName::Nonlinear, None).unwrap();
        let p = predict_exit(&nl, -2.0).unwrap();
        assert_eq!(p.case, ExitCase::Trans);
        assert_eq!(p.assumption_failures, vec![6]);
        assert!((p.x1 - 3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn snapped_entry_uses_classical() {
        let eps = make_builtin(BuiltinName::EpsCoupled, None).unwrap();
        let p = predict_exit(&eps, -1.0).unwrap();
        assert_eq!(p.case, ExitCase::Classical);
        assert!((p.x1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn residuals_vanish() {
        for n in BuiltinName::ALL {
            let a = analysis(n);
            for x0 in [-2.5, -2.0, -1.3, -0.6] {
                let p = predict_exit_with(&a, x0).unwrap();
                assert!(exit_residual(a.profile(), &p).unwrap().abs() <= 1e-9, "{n} {x0}");
            }
        }
    }
}
