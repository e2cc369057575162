//! Martingale type and cotype, uniform smoothness and convexity, and the
//! associated renorming constructions, on finite-dimensional normed spaces.
//!
//! Vectors are `&[f64]` slices; a normed space is a [`Norm`] from a closed
//! catalog (weighted `ℓ_p`, `ℓ_∞`, polyhedral) and an operator is a
//! [`LinearOperator`] between two of them. Dyadic step functions live in
//! [`dyadic`], difference sequences in [`martingale`], the six inequalities
//! and constant estimates in [`moduli`], the renorming braces in [`renorm`],
//! and the adjoint experiments in [`duality`].

pub mod duality;
pub mod dyadic;
mod engine;
pub mod error;
pub mod martingale;
pub mod moduli;
pub mod numeric;
pub mod renorm;
pub mod search;
pub mod spaces;

/// Version of this library, echoed into experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use dyadic::{DyadicInterval, StepFunction};
pub use error::{Error, Result};
pub use martingale::{DifferenceSequence, MartingalePath, Part};
pub use moduli::{
    best_constant, brute_force_constant, ConstantEstimate, ConstantKind, DefectReport,
    EstimateOptions, Grid, Witness,
};
pub use renorm::{BraceFunctional, BraceValue, Decomposition, Direction};
pub use spaces::{dual_exponent, LinearOperator, Norm, NormKind};
