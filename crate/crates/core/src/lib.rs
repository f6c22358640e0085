//! Entry-exit predictions for fast-slow systems with two fast variables whose
//! linearization has real eigenvalues that cross, checked against direct
//! numerical integration.
//!
//! The pipeline is [`spectral`] (eigenvalue curves, collision point, standing
//! assumptions), [`polar`] (angle dynamics and the coefficients that pick the
//! exit formula), [`entry_exit`] (the exit predictions themselves) and
//! [`odeint`] (simulation with cylinder entry/exit detection). [`harness`]
//! compares the two over sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod entry_exit;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod odeint;
pub mod polar;
pub mod spectral;
pub mod system;

pub use entry_exit::{predict_exit, ExitCase, ExitPrediction};
pub use error::{Error, Result};
pub use odeint::{detect_exit, Tolerances};
pub use polar::{PolarAnalysis, TheoremCoeffs};
pub use spectral::{check_assumptions, SpectralProfile};
pub use system::{load_system, make_builtin, BuiltinName, FastSlowSystem};
