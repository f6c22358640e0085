use thiserror::Error;

use crate::odeint::SimulationTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown builtin system `{0}` (expected one_way_coupled, eps_coupled or nonlinear)")]
    UnknownSystem(String),

    #[error("system config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("critical manifold z1 = z2 = 0 is not invariant: residual {residual:e} at x = {x}, eps = {eps}")]
    ManifoldNotInvariant { x: f64, eps: f64, residual: f64 },

    #[error("supplied Jacobian entry {entry} = {supplied} disagrees with finite difference {differenced} at x = {x}, eps = {eps}")]
    JacobianMismatch { entry: &'static str, x: f64, eps: f64, supplied: f64, differenced: f64 },

    #[error("eigenvalues of A(x; eps) are complex at x = {x}, eps = {eps} (discriminant {discriminant:e})")]
    ComplexEigenvalues { x: f64, eps: f64, discriminant: f64 },

    #[error("no eigenvalue collision found in the domain")]
    NoCollision,

    #[error("eigenvalue collision is not unique; candidates {0:?}")]
    MultipleCollisions(Vec<f64>),

    #[error("eigenvalue curve {curve} has more than one zero in the domain: {roots:?}")]
    NonUniqueZeros { curve: &'static str, roots: Vec<f64> },

    #[error("eigenvalues do not coincide at x = {x} (discriminant {discriminant:e})")]
    NotCoincident { x: f64, discriminant: f64 },

    #[error("branch stability is degenerate at x = {x}: dPhi/dtheta = {slope:e}")]
    DegenerateBranch { x: f64, slope: f64 },

    #[error("beta^2 - gamma*alpha = {0:e} is not positive; the transcritical point is degenerate")]
    DegenerateTranscritical(f64),

    #[error("no exit point in the domain for entry x0 = {x0}")]
    NoExitInDomain { x0: f64 },

    #[error("no switching point in the domain for entry x0 = {x0}")]
    NoSwitchInDomain { x0: f64 },

    #[error("lambda = {lambda} is 1 but neither branch is invariant for eps > 0; the case is not covered")]
    UncoveredCase { lambda: f64 },

    #[error("lambda = 1 and both branches are invariant: transcritical route gives x1 = {trans_x1}, invariant route gives x1 = {invar_x1} (switch at {invar_x_tilde})")]
    AmbiguousCase { trans_x1: f64, invar_x_tilde: f64, invar_x1: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature on [{a}, {b}] did not converge (estimate {estimate}, error {error:e})")]
    Quadrature { a: f64, b: f64, estimate: f64, error: f64 },

    #[error("root not bracketed on [{a}, {b}] (f = {fa}, {fb})")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("root iteration did not converge (best {best}, residual {residual:e})")]
    RootNotConverged { best: f64, residual: f64 },

    #[error("step size underflow at t = {t} (h = {h:e}); the problem looks stiff here, try a smaller eps or a looser tolerance")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trajectory did not exit the cylinder before x = {x_reached}")]
    NoExitObserved { x_reached: f64, trace: Box<SimulationTrace> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that describe the mathematics of the input (no exit, uncovered
    /// case, assumption failures) rather than misuse of the API.
    pub fn is_domain_error(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnknownSystem(_)
                | Error::Config { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
