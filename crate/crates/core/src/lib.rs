//! Particle simulation of McKean-Vlasov SDEs in kernel form
//!
//! ```text
//! dX_t = ∫ b(X_t, y) μ_t(dy) dt + ∫ σ(X_t, y) μ_t(dy) dW_t,   μ_t = Law(X_t)
//! ```
//!
//! The crate provides the Euler scheme for the `N`-particle approximation,
//! independent particles driven by a prescribed law flow, a Picard solver for
//! the law itself, and the estimators used in convergence studies.
//!
//! All randomness is counter-based: a value depends only on the seed and its
//! `(step, particle, coordinate)` index, and interaction sums run in a
//! canonical sorted order. Results are therefore identical for any thread
//! count and equivariant under relabelling of the particles.

pub mod analysis;
pub mod error;
pub mod kernels;
pub mod measure;
pub mod numeric;
pub mod paths;
pub mod picard;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use kernels::{catalog_kernel, KernelPair, ModulusFn};
pub use measure::EmpiricalMeasure;
pub use paths::{generate_bundle, sample_initial, BrownianBundle, InitialLaw, InitialSample, TimeGrid};
pub use picard::{picard_solve, LawFlow, PicardReport};
pub use simulator::{coupled_chaos_error, euler_interacting, euler_limit_particles, Trajectory};
