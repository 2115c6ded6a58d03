//! Exact analysis of the two-component Gibbs sampler on finite product spaces.
//!
//! The crate decides whether a joint distribution is Gibbs-admissible (the
//! sampler obeys the strong law of large numbers), computes the intersection
//! of the completed coordinate σ-fields and its atoms, certifies ergodicity
//! with Doeblin-type rate bounds, and checks the identity linking powers of
//! the Gibbs kernel to alternating conditional expectations. Every
//! combinatorial verdict ships with a brute-force oracle.
//!
//! Modules, bottom-up:
//!
//! * [`space`]: joints, marginals, densities, regular conditionals.
//! * [`sigma`]: partitions, completion, intersection, admissibility.
//! * [`tip`]: conditioned uniform measures and the TIP calculus.
//! * [`kernel`]: the Gibbs transition matrix and conditional-expectation iterates.
//! * [`ergodic`]: total variation curves, aperiodicity, Doeblin certificates.
//! * [`chain`]: seeded Monte Carlo runs and SLLN diagnostics.
//! * [`kgibbs`]: the k-component generalization.
//! * [`cli`]: the `gibbsgate` command-line front end.

pub mod chain;
pub mod cli;
mod dsu;
pub mod ergodic;
pub mod error;
pub mod kernel;
pub mod kgibbs;
pub mod sigma;
pub mod space;
pub mod tip;

pub use error::{Error, Result};
pub use space::{Conditional, Event, FiniteJoint, JointSpec, Rectangle};
