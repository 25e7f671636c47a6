//! Numerical information projection of drifted Wiener measures onto
//! deterministic (state-independent) shifts.
//!
//! Two independent routes compute the optimal shift:
//!
//! * [`variational`]: shooting on the Euler-Lagrange equation of
//!   `½∫ E[(q̇ − f(t, B + q))²] dt`;
//! * [`stochastic`]: direct Monte-Carlo minimization of the same KL
//!   objective over discretized paths with a frozen Brownian ensemble.
//!
//! [`clark_ocone`] turns costs `∫g(B)dt + G(B(T))` into drift kernels,
//! and [`stochastic::penalty_d`] measures how far a drift is from being
//! state independent.

pub mod audit;
pub mod clark_ocone;
pub mod error;
pub mod functionals;
pub mod gaussian;
pub mod grid;
pub mod polynomial;
pub mod stats;
pub mod stochastic;
pub mod validate;
pub mod variational;

pub use error::{Error, Result};
pub use functionals::{CostFunctional, DriftKernel, KernelForm};
pub use grid::{DiscretePath, TimeGrid};
pub use polynomial::Polynomial;
pub use stats::MeanEstimate;
