//! Eigenvalue curves of `A(x; eps)` along the critical manifold.
//!
//! `xi_plus >= xi_minus` are the ordered eigenvalues. `mu1`/`mu2` relabel
//! them so that each curve stays smooth through the collision point `x*`:
//! `mu1 = xi_plus` left of `x*` and `xi_minus` right of it, `mu2` the other.

use serde::{Serialize, Serializer};

use crate::entry_exit::balance_point;
use crate::error::{Error, Result};
use crate::numeric::linspace;
use crate::numeric::minimize::{golden_section, parabolic_polish};
use crate::numeric::roots::{brent, RootTol};
use crate::system::FastSlowSystem;

const SCAN_POINTS: usize = 2001;
const MONOTONE_POINTS: usize = 1001;
const MONOTONE_TOL: f64 = 1e-9;
const COLLISION_TOL: f64 = 1e-12;

fn discriminant_clamped(sys: &FastSlowSystem, x: f64, eps: f64) -> Result<f64> {
    let a = sys.jacobian(x, eps);
    let d = a.discriminant();
    let scale = 1.0 + a.max_abs();
    if d >= 0.0 {
        Ok(d)
    } else if d >= -1e-14 * scale * scale {
        Ok(0.0)
    } else {
        Err(Error::ComplexEigenvalues { x, eps, discriminant: d })
    }
}

/// Ordered real eigenvalues `(xi_plus, xi_minus)` of `A(x; eps)`.
pub fn eigenvalues_xi(sys: &FastSlowSystem, x: f64, eps: f64) -> Result<(f64, f64)> {
    let d = discriminant_clamped(sys, x, eps)?;
    let tr = sys.jacobian(x, eps).trace();
    let s = d.sqrt();
    Ok((0.5 * (tr + s), 0.5 * (tr - s)))
}

fn dedupe(mut xs: Vec<f64>, sep: f64) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| (*b - *a).abs() <= sep);
    xs
}

/// Locates the unique point of `I` where the two eigenvalues coincide.
///
/// Transversal zeros of the discriminant are bracketed and refined with
/// Brent's method. Tangential zeros (the discriminant touches zero without
/// changing sign, the usual situation for two real curves crossing) are
/// found by golden-section minimisation followed by a parabolic polish.
pub fn find_x_star(sys: &FastSlowSystem, eps: f64) -> Result<f64> {
    let dom = sys.domain();
    let disc = |x: f64| sys.jacobian(x, eps).discriminant();
    let xs: Vec<f64> = linspace(dom.lo, dom.hi, SCAN_POINTS).collect();
    let ds: Vec<f64> = xs.iter().map(|&x| disc(x)).collect();
    let spacing = dom.width() / (SCAN_POINTS - 1) as f64;
    let accept = |x: f64| {
        let a = sys.jacobian(x, eps);
        let scale = 1.0 + a.max_abs();
        a.discriminant().abs() <= COLLISION_TOL * scale * scale
    };

    let mut cands = Vec::new();
    for i in 0..xs.len() {
        if ds[i] == 0.0 {
            cands.push(xs[i]);
            continue;
        }
        if i + 1 < xs.len() && ds[i + 1] != 0.0 && ds[i].signum() != ds[i + 1].signum() {
            let tol = RootTol { ftol: 0.0, xtol: 1e-15 * (1.0 + xs[i].abs()), max_iter: 200 };
            cands.push(brent(disc, xs[i], xs[i + 1], ds[i], ds[i + 1], tol)?);
            continue;
        }
        if i > 0 && i + 1 < xs.len() && ds[i] > 0.0 && ds[i] <= ds[i - 1] && ds[i] <= ds[i + 1] {
            let x = golden_section(disc, xs[i - 1], xs[i + 1], 1e-11 * (1.0 + xs[i].abs()));
            let x = parabolic_polish(disc, x, 1e-3 * spacing.max(1e-6), 4);
            if accept(x) {
                cands.push(x);
            }
        }
    }
    let cands = dedupe(cands, 2.0 * spacing);
    match cands.len() {
        0 => Err(Error::NoCollision),
        1 => Ok(cands[0]),
        _ => Err(Error::MultipleCollisions(cands)),
    }
}

fn curve_zeros<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let xs: Vec<f64> = linspace(lo, hi, SCAN_POINTS).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..xs.len() {
        if vs[i] == 0.0 {
            roots.push(xs[i]);
        } else if i + 1 < xs.len() && vs[i + 1] != 0.0 && vs[i].signum() != vs[i + 1].signum() {
            let tol = RootTol { ftol: 0.0, xtol: 1e-15 * (1.0 + xs[i].abs()), max_iter: 200 };
            roots.push(brent(&f, xs[i], xs[i + 1], vs[i], vs[i + 1], tol)?);
        }
    }
    Ok(dedupe(roots, 2.0 * (hi - lo) / (SCAN_POINTS - 1) as f64))
}

/// Zeros `(x_plus, x_minus)` of `xi_plus(.; 0)` and `xi_minus(.; 0)` in `I`.
pub fn find_eigenvalue_zeros(sys: &FastSlowSystem) -> Result<(Option<f64>, Option<f64>)> {
    let dom = sys.domain();
    // surface complex eigenvalues before scanning
    for x in linspace(dom.lo, dom.hi, SCAN_POINTS) {
        eigenvalues_xi(sys, x, 0.0)?;
    }
    let plus = |x: f64| eigenvalues_xi(sys, x, 0.0).map(|e| e.0).unwrap_or(f64::NAN);
    let minus = |x: f64| eigenvalues_xi(sys, x, 0.0).map(|e| e.1).unwrap_or(f64::NAN);
    let single = |curve: &'static str, roots: Vec<f64>| match roots.len() {
        0 => Ok(None),
        1 => Ok(Some(roots[0])),
        _ => Err(Error::NonUniqueZeros { curve, roots }),
    };
    let p = single("xi_plus", curve_zeros(plus, dom.lo, dom.hi)?)?;
    let m = single("xi_minus", curve_zeros(minus, dom.lo, dom.hi)?)?;
    Ok((p, m))
}

/// Default rank tolerance `1e-9 * (1 + max|A|)`.
pub fn default_multiplicity_tol(sys: &FastSlowSystem, x: f64, eps: f64) -> f64 {
    1e-9 * (1.0 + sys.jacobian(x, eps).max_abs())
}

/// Geometric multiplicity of the double eigenvalue at `(x, eps)`: 2 iff
/// `A` is a multiple of the identity to within `tol`.
///
/// The eigenvalues must coincide; a gap `sqrt(discriminant)` larger than
/// `max(tol, 1e-6 (1 + max|A|))` is rejected.
pub fn geometric_multiplicity(sys: &FastSlowSystem, x: f64, eps: f64, tol: Option<f64>) -> Result<u8> {
    let a = sys.jacobian(x, eps);
    let tol = tol.unwrap_or_else(|| default_multiplicity_tol(sys, x, eps));
    let d = a.discriminant();
    let gap = d.abs().sqrt();
    if gap > tol.max(1e-6 * (1.0 + a.max_abs())) {
        return Err(Error::NotCoincident { x, discriminant: d });
    }
    let xi = 0.5 * a.trace();
    let off = (a.f1 - xi).abs().max((a.g2 - xi).abs()).max(a.f2.abs()).max(a.g1.abs());
    Ok(if off <= tol { 2 } else { 1 })
}

fn ser_floats<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element(&x.to_string())?;
        }
    }
    seq.end()
}

/// Verdict for one of the six standing assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionItem {
    pub item: u8,
    pub pass: bool,
    pub detail: String,
    #[serde(serialize_with = "ser_floats")]
    pub witnesses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub x0: f64,
    pub items: Vec<AssumptionItem>,
}

impl AssumptionReport {
    pub fn item(&self, n: u8) -> Option<&AssumptionItem> {
        self.items.iter().find(|i| i.item == n)
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn failed(&self) -> Vec<u8> {
        self.items.iter().filter(|i| !i.pass).map(|i| i.item).collect()
    }
}

/// Eigenvalue data along the critical manifold at `eps = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralProfile {
    #[serde(skip)]
    system: FastSlowSystem,
    pub x_star: f64,
    /// Collision angle; filled in by the polar analysis.
    pub theta_star: Option<f64>,
    pub xi_star: f64,
    pub x_plus: Option<f64>,
    pub x_minus: Option<f64>,
    pub geometric_multiplicity_at_star: u8,
    pub assumption_report: Option<AssumptionReport>,
}

impl SpectralProfile {
    /// Collision point, double eigenvalue, zeros and multiplicity, without
    /// an entry-point-specific assumption report.
    pub fn new(sys: &FastSlowSystem) -> Result<Self> {
        let x_star = find_x_star(sys, 0.0)?;
        let xi_star = 0.5 * sys.jacobian(x_star, 0.0).trace();
        let (x_plus, x_minus) = find_eigenvalue_zeros(sys).unwrap_or_else(|e| {
            log::warn!("{}: {e}", sys.name());
            (None, None)
        });
        let geometric_multiplicity_at_star = geometric_multiplicity(sys, x_star, 0.0, None)?;
        Ok(SpectralProfile {
            system: sys.clone(),
            x_star,
            theta_star: None,
            xi_star,
            x_plus,
            x_minus,
            geometric_multiplicity_at_star,
            assumption_report: None,
        })
    }

    pub fn system(&self) -> &FastSlowSystem {
        &self.system
    }

    pub fn xi(&self, x: f64) -> (f64, f64) {
        let a = self.system.jacobian(x, 0.0);
        let s = a.discriminant().max(0.0).sqrt();
        (0.5 * (a.trace() + s), 0.5 * (a.trace() - s))
    }

    /// Eigenvalue curve followed from the left of `x*` (dominant there).
    pub fn mu1(&self, x: f64) -> f64 {
        let (p, m) = self.xi(x);
        if x < self.x_star { p } else { m }
    }

    pub fn mu2(&self, x: f64) -> f64 {
        let (p, m) = self.xi(x);
        if x < self.x_star { m } else { p }
    }
}

/// Evaluates all six standing assumptions for entry point `x0`.
///
/// Failures are verdicts; the only errors are `x0` outside the domain and
/// `x0 >= x*` when a collision point exists.
pub fn assumption_report(sys: &FastSlowSystem, x0: f64) -> Result<AssumptionReport> {
    let dom = sys.domain();
    if !dom.contains(x0) {
        return Err(Error::InvalidInput(format!("x0 = {x0} lies outside [{}, {}]", dom.lo, dom.hi)));
    }
    let x_star = find_x_star(sys, 0.0);
    if let Ok(xs) = x_star {
        if x0 >= xs {
            return Err(Error::Precondition(format!("entry point x0 = {x0} must lie left of x* = {xs}")));
        }
    }
    let mut items = Vec::with_capacity(6);

    let (res, rx, reps) = sys.manifold_residual(crate::system::DEFAULT_EPS_MAX);
    items.push(AssumptionItem {
        item: 1,
        pass: res <= 1e-12,
        detail: format!("max |Z(x,0,0,eps)| = {res:e} (at x = {rx}, eps = {reps})"),
        witnesses: vec![res],
    });

    let mut real = true;
    let mut worst_drop = 0.0f64;
    let mut drop_at = f64::NAN;
    let mut prev: Option<(f64, f64)> = None;
    for x in linspace(dom.lo, dom.hi, MONOTONE_POINTS) {
        match eigenvalues_xi(sys, x, 0.0) {
            Ok(e) => {
                if let Some(p) = prev {
                    let drop = (p.0 - e.0).max(p.1 - e.1);
                    if drop > worst_drop {
                        worst_drop = drop;
                        drop_at = x;
                    }
                }
                prev = Some(e);
            }
            Err(_) => {
                real = false;
                drop_at = x;
                break;
            }
        }
    }
    items.push(AssumptionItem {
        item: 2,
        pass: real && worst_drop <= MONOTONE_TOL,
        detail: if real {
            format!("eigenvalues real; largest decrease {worst_drop:e}")
        } else {
            format!("complex eigenvalues at x = {drop_at}")
        },
        witnesses: if drop_at.is_nan() { vec![worst_drop] } else { vec![worst_drop, drop_at] },
    });

    let zeros = find_eigenvalue_zeros(sys);
    items.push(match &zeros {
        Ok((p, m)) => AssumptionItem {
            item: 3,
            pass: p.is_some() || m.is_some(),
            detail: format!("x_plus = {p:?}, x_minus = {m:?}"),
            witnesses: [*p, *m].into_iter().flatten().collect(),
        },
        Err(e) => AssumptionItem { item: 3, pass: false, detail: e.to_string(), witnesses: vec![] },
    });

    items.push(match &x_star {
        Ok(xs) => AssumptionItem { item: 4, pass: true, detail: format!("x* = {xs}"), witnesses: vec![*xs] },
        Err(Error::MultipleCollisions(c)) => {
            AssumptionItem { item: 4, pass: false, detail: "collision not unique".into(), witnesses: c.clone() }
        }
        Err(e) => AssumptionItem { item: 4, pass: false, detail: e.to_string(), witnesses: vec![] },
    });

    match x_star {
        Ok(xs) => {
            let profile = SpectralProfile::new(sys)?;
            let hi = dom.hi;
            let b1 = balance_point(|x| profile.mu1(x), x0, hi)?.unwrap_or(f64::INFINITY);
            let b2 = balance_point(|x| profile.mu2(x), x0, hi)?.unwrap_or(f64::INFINITY);
            items.push(AssumptionItem {
                item: 5,
                pass: xs < b1.min(b2),
                detail: format!("x1^(1) = {b1}, x1^(2) = {b2}, x* = {xs}"),
                witnesses: vec![b1, b2, xs],
            });
            let m = profile.geometric_multiplicity_at_star;
            items.push(AssumptionItem {
                item: 6,
                pass: m == 1,
                detail: format!("geometric multiplicity {m} at x* = {xs}"),
                witnesses: vec![m as f64],
            });
        }
        Err(_) => {
            for item in [5, 6] {
                items.push(AssumptionItem { item, pass: false, detail: "x* unavailable".into(), witnesses: vec![] });
            }
        }
    }
    Ok(AssumptionReport { x0, items })
}

/// Builds the spectral profile and attaches the assumption report for `x0`.
pub fn check_assumptions(sys: &FastSlowSystem, x0: f64) -> Result<SpectralProfile> {
    let report = assumption_report(sys, x0)?;
    let mut profile = SpectralProfile::new(sys)?;
    profile.assumption_report = Some(report);
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{make_builtin, BuiltinName, Domain, Jacobian};

    fn builtin(n: BuiltinName) -> FastSlowSystem {
        make_builtin(n, None).unwrap()
    }

    #[test]
    fn eigenvalue_examples() {
        let s = builtin(BuiltinName::OneWayCoupled);
        assert_eq!(eigenvalues_xi(&s, -2.0, 0.0).unwrap(), (-1.0, -2.0));
        assert_eq!(eigenvalues_xi(&s, -1.0, 0.0).unwrap(), (-1.0, -1.0));
        let zero = FastSlowSystem::from_fns(
            "zero",
            Domain::new(-1.0, 1.0).unwrap(),
            |_, _, _, _| (0.0, 0.0),
            |_, _| Jacobian { f1: 0.0, f2: 0.0, g1: 0.0, g2: 0.0 },
        )
        .unwrap();
        assert_eq!(eigenvalues_xi(&zero, 0.3, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn complex_eigenvalues_rejected() {
        let rot = FastSlowSystem::from_fns(
            "rot",
            Domain::new(-1.0, 1.0).unwrap(),
            |x, z1, z2, _| (x * z1 - z2, z1 + x * z2),
            |x, _| Jacobian { f1: x, f2: -1.0, g1: 1.0, g2: x },
        )
        .unwrap();
        assert!(matches!(eigenvalues_xi(&rot, 0.0, 0.0), Err(Error::ComplexEigenvalues { .. })));
    }

    #[test]
    fn collision_points() {
        for n in BuiltinName::ALL {
            let xs = find_x_star(&builtin(n), 0.0).unwrap();
            assert!((xs + 1.0).abs() < 1e-9, "{n}: {xs}");
        }
    }

    #[test]
    fn transversal_collision_is_bracketed() {
        // discriminant x changes sign at 0.25 -> eigenvalues turn complex
        let s = FastSlowSystem::from_fns(
            "t",
            Domain::new(-1.0, 1.0).unwrap(),
            |x, z1, z2, _| (z2, (x - 0.25) * 0.25 * z1),
            |x, _| Jacobian { f1: 0.0, f2: 1.0, g1: 0.25 * (x - 0.25), g2: 0.0 },
        )
        .unwrap();
        let xs = find_x_star(&s, 0.0).unwrap();
        assert!((xs - 0.25).abs() < 1e-13);
    }

    #[test]
    fn distinct_curves_have_no_collision() {
        let s = FastSlowSystem::from_fns(
            "diag",
            Domain::new(-3.0, 3.0).unwrap(),
            |x, z1, z2, _| ((x - 2.0) * z1, (x + 2.0) * z2),
            |x, _| Jacobian { f1: x - 2.0, f2: 0.0, g1: 0.0, g2: x + 2.0 },
        )
        .unwrap();
        assert!(matches!(find_x_star(&s, 0.0), Err(Error::NoCollision)));
        let (p, m) = find_eigenvalue_zeros(&s).unwrap();
        assert!((p.unwrap() + 2.0).abs() < 1e-14);
        assert!((m.unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn repeated_collisions_are_reported() {
        // discriminant (x^2 - 1)^2 touches zero at both -1 and 1
        let s = FastSlowSystem::from_fns(
            "two",
            Domain::new(-2.0, 2.0).unwrap(),
            |x, z1, z2, _| ((x * x - 1.0) * z1, 0.0 * z2),
            |x, _| Jacobian { f1: x * x - 1.0, f2: 0.0, g1: 0.0, g2: 0.0 },
        )
        .unwrap();
        match find_x_star(&s, 0.0) {
            Err(Error::MultipleCollisions(c)) => {
                assert_eq!(c.len(), 2);
                assert!((c[0] + 1.0).abs() < 1e-8 && (c[1] - 1.0).abs() < 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn eigenvalue_zeros_of_builtins() {
        for n in [BuiltinName::OneWayCoupled, BuiltinName::EpsCoupled] {
            let (p, m) = find_eigenvalue_zeros(&builtin(n)).unwrap();
            assert!(p.unwrap().abs() < 1e-14);
            assert!(m.is_none());
        }
    }

    #[test]
    fn multiplicity_examples() {
        let one = builtin(BuiltinName::OneWayCoupled);
        assert_eq!(geometric_multiplicity(&one, -1.0, 0.0, None).unwrap(), 1);
        let eps = builtin(BuiltinName::EpsCoupled);
        assert_eq!(geometric_multiplicity(&eps, -1.0, 0.0, None).unwrap(), 1);
        let nl = builtin(BuiltinName::Nonlinear);
        assert_eq!(geometric_multiplicity(&nl, -1.0, 0.0, None).unwrap(), 2);
        assert!(matches!(geometric_multiplicity(&one, 0.0, 0.0, None), Err(Error::NotCoincident { .. })));
    }

    #[test]
    fn relabelled_curves_of_builtins() {
        for n in BuiltinName::ALL {
            let p = SpectralProfile::new(&builtin(n)).unwrap();
            for x in linspace(-4.0, 4.0, 161) {
                assert!((p.mu1(x) + 1.0).abs() < 1e-12, "{n} mu1({x})");
                assert!((p.mu2(x) - x).abs() < 1e-12, "{n} mu2({x})");
            }
        }
    }

    #[test]
    fn one_way_assumptions() {
        let p = check_assumptions(&builtin(BuiltinName::OneWayCoupled), -2.0).unwrap();
        let r = p.assumption_report.unwrap();
        assert!(r.all_pass(), "{r:?}");
        let five = r.item(5).unwrap();
        assert_eq!(five.witnesses[0], f64::INFINITY);
        assert!((five.witnesses[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn nonlinear_fails_multiplicity_only() {
        let r = assumption_report(&builtin(BuiltinName::Nonlinear), -2.0).unwrap();
        assert_eq!(r.failed(), vec![6]);
    }

    #[test]
    fn entry_right_of_collision_rejected() {
        let r = assumption_report(&builtin(BuiltinName::OneWayCoupled), -0.5);
        assert!(matches!(r, Err(Error::Precondition(_))));
        let r = assumption_report(&builtin(BuiltinName::OneWayCoupled), -10.0);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn report_serialises_infinite_witness() {
        let r = assumption_report(&builtin(BuiltinName::EpsCoupled), -2.0).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""), "{text}");
    }
}
