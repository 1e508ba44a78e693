//! Simulation and estimation for binary branching populations whose trait
//! follows a scalar diffusion and drives division.
//!
//! Modules, bottom-up: [`sde_flow`] simulates the trait, [`branching_sim`]
//! builds genealogies, [`transition_kernel`] evaluates the tagged-chain
//! transition density, [`ergodicity`] computes drift and minorisation
//! constants, [`nonparam`] holds the kernel estimators and [`mle`] the
//! parametric contrast.

pub mod branching_sim;
pub mod ergodicity;
pub mod error;
pub mod mle;
pub mod nonparam;
pub mod numerics;
pub mod sde_flow;
pub mod seed;
pub mod transition_kernel;

pub use error::{Error, Result};
