//! Fast-slow systems with two fast variables and one slow variable,
//!
//! ```text
//! x'  = eps
//! z1' = Z1(x, z1, z2, eps)
//! z2' = Z2(x, z1, z2, eps)
//! ```
//!
//! with the critical manifold `{z1 = z2 = 0}` invariant for every `eps`.
//! The linearisation along that manifold is the 2x2 matrix
//! `A(x; eps) = [[f1, f2], [g1, g2]]`, which every system supplies
//! analytically.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linspace;

/// Default upper end of the `eps` range sampled by [`FastSlowSystem::validate`].
pub const DEFAULT_EPS_MAX: f64 = 0.05;

const FD_STEP: f64 = 1e-5;
const JACOBIAN_RTOL: f64 = 1e-6;

/// Entries of `A(x; eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    pub f1: f64,
    pub f2: f64,
    pub g1: f64,
    pub g2: f64,
}

impl Jacobian {
    pub fn trace(&self) -> f64 {
        self.f1 + self.g2
    }

    pub fn det(&self) -> f64 {
        self.f1 * self.g2 - self.f2 * self.g1
    }

    /// `tr^2 - 4 det`, evaluated as `(f1 - g2)^2 + 4 f2 g1` to avoid the
    /// cancellation the textbook form suffers near a double eigenvalue.
    pub fn discriminant(&self) -> f64 {
        let d = self.f1 - self.g2;
        d * d + 4.0 * self.f2 * self.g1
    }

    pub fn max_abs(&self) -> f64 {
        self.f1.abs().max(self.f2.abs()).max(self.g1.abs()).max(self.g2.abs())
    }
}

/// The vector field behind a [`FastSlowSystem`].
pub trait VectorField: Send + Sync {
    /// `(Z1, Z2)` at the given point.
    fn rhs(&self, x: f64, z1: f64, z2: f64, eps: f64) -> (f64, f64);
    /// Linearisation along `z1 = z2 = 0`.
    fn jacobian(&self, x: f64, eps: f64) -> Jacobian;
}

/// Closed slow-variable interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("domain [{lo}, {hi}] must be a finite interval with lo < hi")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone)]
pub struct FastSlowSystem {
    name: String,
    domain: Domain,
    field: Arc<dyn VectorField>,
}

impl fmt::Debug for FastSlowSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FastSlowSystem").field("name", &self.name).field("domain", &self.domain).finish()
    }
}

impl FastSlowSystem {
    /// Wraps a vector field and checks the manifold-invariance and
    /// Jacobian-consistency invariants on a sample grid.
    pub fn new(name: impl Into<String>, domain: Domain, field: Arc<dyn VectorField>) -> Result<Self> {
        let sys = FastSlowSystem { name: name.into(), domain, field };
        sys.validate(DEFAULT_EPS_MAX)?;
        Ok(sys)
    }

    /// Builds a system from plain closures.
    pub fn from_fns<R, J>(name: impl Into<String>, domain: Domain, rhs: R, jacobian: J) -> Result<Self>
    where
        R: Fn(f64, f64, f64, f64) -> (f64, f64) + Send + Sync + 'static,
        J: Fn(f64, f64) -> Jacobian + Send + Sync + 'static,
    {
        Self::new(name, domain, Arc::new(ClosureField { rhs, jacobian }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn rhs(&self, x: f64, z1: f64, z2: f64, eps: f64) -> (f64, f64) {
        self.field.rhs(x, z1, z2, eps)
    }

    pub fn rhs_z1(&self, x: f64, z1: f64, z2: f64, eps: f64) -> f64 {
        self.field.rhs(x, z1, z2, eps).0
    }

    pub fn rhs_z2(&self, x: f64, z1: f64, z2: f64, eps: f64) -> f64 {
        self.field.rhs(x, z1, z2, eps).1
    }

    pub fn jacobian(&self, x: f64, eps: f64) -> Jacobian {
        self.field.jacobian(x, eps)
    }

    pub fn jac_f1(&self, x: f64, eps: f64) -> f64 {
        self.jacobian(x, eps).f1
    }

    pub fn jac_f2(&self, x: f64, eps: f64) -> f64 {
        self.jacobian(x, eps).f2
    }

    pub fn jac_g1(&self, x: f64, eps: f64) -> f64 {
        self.jacobian(x, eps).g1
    }

    pub fn jac_g2(&self, x: f64, eps: f64) -> f64 {
        self.jacobian(x, eps).g2
    }

    /// Largest `|Z(x, 0, 0, eps)|` over a 101 x 5 grid on `I x [0, eps_max]`,
    /// with the point where it occurs.
    pub fn manifold_residual(&self, eps_max: f64) -> (f64, f64, f64) {
        let mut worst = (0.0, self.domain.lo, 0.0);
        for eps in linspace(0.0, eps_max, 5) {
            for x in linspace(self.domain.lo, self.domain.hi, 101) {
                let (a, b) = self.rhs(x, 0.0, 0.0, eps);
                let r = a.abs().max(b.abs());
                if r > worst.0 || r.is_nan() {
                    worst = (r, x, eps);
                }
            }
        }
        worst
    }

    /// Checks both sampled invariants: the critical manifold is invariant and
    /// the supplied Jacobian matches central differences of the right-hand
    /// side to `1e-6 * (1 + |entry|)`.
    pub fn validate(&self, eps_max: f64) -> Result<()> {
        let (residual, x, eps) = self.manifold_residual(eps_max);
        if !(residual <= 1e-12) {
            return Err(Error::ManifoldNotInvariant { x, eps, residual });
        }
        for eps in linspace(0.0, eps_max, 5) {
            for x in linspace(self.domain.lo, self.domain.hi, 101) {
                let jac = self.jacobian(x, eps);
                let fd = self.differenced_jacobian(x, eps);
                let pairs = [
                    ("f1", jac.f1, fd.f1),
                    ("f2", jac.f2, fd.f2),
                    ("g1", jac.g1, fd.g1),
                    ("g2", jac.g2, fd.g2),
                ];
                for (entry, supplied, differenced) in pairs {
                    if !((supplied - differenced).abs() <= JACOBIAN_RTOL * (1.0 + supplied.abs())) {
                        return Err(Error::JacobianMismatch { entry, x, eps, supplied, differenced });
                    }
                }
            }
        }
        Ok(())
    }

    /// Central-difference linearisation of the right-hand side at `z = 0`.
    pub fn differenced_jacobian(&self, x: f64, eps: f64) -> Jacobian {
        let h = FD_STEP;
        let (p1a, p1b) = self.rhs(x, h, 0.0, eps);
        let (m1a, m1b) = self.rhs(x, -h, 0.0, eps);
        let (p2a, p2b) = self.rhs(x, 0.0, h, eps);
        let (m2a, m2b) = self.rhs(x, 0.0, -h, eps);
        Jacobian {
            f1: (p1a - m1a) / (2.0 * h),
            f2: (p2a - m2a) / (2.0 * h),
            g1: (p1b - m1b) / (2.0 * h),
            g2: (p2b - m2b) / (2.0 * h),
        }
    }
}

struct ClosureField<R, J> {
    rhs: R,
    jacobian: J,
}

impl<R, J> VectorField for ClosureField<R, J>
where
    R: Fn(f64, f64, f64, f64) -> (f64, f64) + Send + Sync,
    J: Fn(f64, f64) -> Jacobian + Send + Sync,
{
    fn rhs(&self, x: f64, z1: f64, z2: f64, eps: f64) -> (f64, f64) {
        (self.rhs)(x, z1, z2, eps)
    }

    fn jacobian(&self, x: f64, eps: f64) -> Jacobian {
        (self.jacobian)(x, eps)
    }
}

// ---------------------------------------------------------------------------
// Builtin examples

/// Slow-variable interval used for every builtin.
pub const BUILTIN_DOMAIN: Domain = Domain { lo: -4.0, hi: 4.0 };

/// Default `a` for the nonlinear builtin.
pub const DEFAULT_NONLINEAR_A: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    /// `z1' = x z1`, `z2' = x z1 - z2`.
    OneWayCoupled,
    /// `z1' = x z1 - eps z2`, `z2' = x z1 - z2`.
    EpsCoupled,
    /// `z1' = x (z1 - z1^2 / a) + eps z2`, `z2' = z1^2 - z2`.
    Nonlinear,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 3] = [BuiltinName::OneWayCoupled, BuiltinName::EpsCoupled, BuiltinName::Nonlinear];

    pub fn as_str(&self) -> &'static str {
        match self {
            BuiltinName::OneWayCoupled => "one_way_coupled",
            BuiltinName::EpsCoupled => "eps_coupled",
            BuiltinName::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_way_coupled" => Ok(BuiltinName::OneWayCoupled),
            "eps_coupled" => Ok(BuiltinName::EpsCoupled),
            "nonlinear" => Ok(BuiltinName::Nonlinear),
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Builtin {
    OneWayCoupled,
    EpsCoupled,
    Nonlinear { a: f64 },
}

impl VectorField for Builtin {
    fn rhs(&self, x: f64, z1: f64, z2: f64, eps: f64) -> (f64, f64) {
        match *self {
            Builtin::OneWayCoupled => (x * z1, x * z1 - z2),
            Builtin::EpsCoupled => (x * z1 - eps * z2, x * z1 - z2),
            Builtin::Nonlinear { a } => (x * (z1 - z1 * z1 / a) + eps * z2, z1 * z1 - z2),
        }
    }

    fn jacobian(&self, x: f64, eps: f64) -> Jacobian {
        match *self {
            Builtin::OneWayCoupled => Jacobian { f1: x, f2: 0.0, g1: x, g2: -1.0 },
            Builtin::EpsCoupled => Jacobian { f1: x, f2: -eps, g1: x, g2: -1.0 },
            Builtin::Nonlinear { .. } => Jacobian { f1: x, f2: eps, g1: 0.0, g2: -1.0 },
        }
    }
}

/// One of the three worked examples. `a` only applies to
/// [`BuiltinName::Nonlinear`] and defaults to 4.
pub fn make_builtin(name: BuiltinName, a: Option<f64>) -> Result<FastSlowSystem> {
    let field = match name {
        BuiltinName::OneWayCoupled => Builtin::OneWayCoupled,
        BuiltinName::EpsCoupled => Builtin::EpsCoupled,
        BuiltinName::Nonlinear => {
            let a = a.unwrap_or(DEFAULT_NONLINEAR_A);
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidInput(format!("nonlinear parameter a must be positive, got {a}")));
            }
            Builtin::Nonlinear { a }
        }
    };
    if a.is_some() && name != BuiltinName::Nonlinear {
        log::warn!("parameter a is ignored for {name}");
    }
    FastSlowSystem::new(name.as_str(), BUILTIN_DOMAIN, Arc::new(field))
}

// ---------------------------------------------------------------------------
// Polynomial systems from config text

/// `c * x^i * eps^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefTerm {
    pub i: u32,
    pub j: u32,
    pub c: f64,
}

/// `c * x^ix * z1^i1 * z2^i2 * eps^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub ix: u32,
    pub i1: u32,
    pub i2: u32,
    pub j: u32,
    pub c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobianConfig {
    #[serde(default)]
    pub f1: Vec<CoefTerm>,
    #[serde(default)]
    pub f2: Vec<CoefTerm>,
    #[serde(default)]
    pub g1: Vec<CoefTerm>,
    #[serde(default)]
    pub g2: Vec<CoefTerm>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    #[serde(default)]
    pub z1: Vec<Monomial>,
    #[serde(default)]
    pub z2: Vec<Monomial>,
}

/// A system that is linear in `z` with polynomial coefficients, plus
/// optional polynomial corrections of `z`-degree at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSystemConfig {
    pub name: String,
    pub domain: [f64; 2],
    pub jacobian: JacobianConfig,
    #[serde(default)]
    pub nonlinear: NonlinearConfig,
}

fn eval_coef(terms: &[CoefTerm], x: f64, eps: f64) -> f64 {
    terms.iter().map(|t| t.c * x.powi(t.i as i32) * eps.powi(t.j as i32)).sum()
}

fn eval_monomials(terms: &[Monomial], x: f64, z1: f64, z2: f64, eps: f64) -> f64 {
    terms
        .iter()
        .map(|m| m.c * x.powi(m.ix as i32) * z1.powi(m.i1 as i32) * z2.powi(m.i2 as i32) * eps.powi(m.j as i32))
        .sum()
}

struct PolynomialField(PolynomialSystemConfig);

impl VectorField for PolynomialField {
    fn rhs(&self, x: f64, z1: f64, z2: f64, eps: f64) -> (f64, f64) {
        let a = self.jacobian(x, eps);
        let nl = &self.0.nonlinear;
        (
            a.f1 * z1 + a.f2 * z2 + eval_monomials(&nl.z1, x, z1, z2, eps),
            a.g1 * z1 + a.g2 * z2 + eval_monomials(&nl.z2, x, z1, z2, eps),
        )
    }

    fn jacobian(&self, x: f64, eps: f64) -> Jacobian {
        let j = &self.0.jacobian;
        Jacobian {
            f1: eval_coef(&j.f1, x, eps),
            f2: eval_coef(&j.f2, x, eps),
            g1: eval_coef(&j.g1, x, eps),
            g2: eval_coef(&j.g2, x, eps),
        }
    }
}

impl PolynomialSystemConfig {
    /// Parses the TOML config format (see the crate README).
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Config { line, message: e.message().to_string() }
        })
    }

    pub fn into_system(self) -> Result<FastSlowSystem> {
        let domain = Domain::new(self.domain[0], self.domain[1])
            .map_err(|e| Error::Config { line: None, message: format!("domain: {e}") })?;
        let all_coefs = [&self.jacobian.f1, &self.jacobian.f2, &self.jacobian.g1, &self.jacobian.g2];
        for (field, terms) in ["f1", "f2", "g1", "g2"].iter().zip(all_coefs) {
            if let Some(t) = terms.iter().find(|t| !t.c.is_finite()) {
                return Err(Error::Config {
                    line: None,
                    message: format!("jacobian.{field}: non-finite coefficient {}", t.c),
                });
            }
        }
        for (field, terms) in [("z1", &self.nonlinear.z1), ("z2", &self.nonlinear.z2)] {
            if let Some(m) = terms.iter().find(|m| !m.c.is_finite()) {
                return Err(Error::Config {
                    line: None,
                    message: format!("nonlinear.{field}: non-finite coefficient {}", m.c),
                });
            }
        }
        let name = self.name.clone();
        let sys = FastSlowSystem { name, domain, field: Arc::new(PolynomialField(self)) };
        // A monomial with no z factor breaks invariance of z = 0; the sampled
        // residual locates a point where it does.
        sys.validate(DEFAULT_EPS_MAX)?;
        Ok(sys)
    }
}

/// Parses a polynomial system config and returns the validated system.
pub fn load_system(text: &str) -> Result<FastSlowSystem> {
    PolynomialSystemConfig::parse(text)?.into_system()
}
