//! Solver-and-simulator toolkit for mean-field LQG team control where the
//! common-noise volatility is chosen adversarially under a soft constraint.
//!
//! The crate certifies the convexity/concavity hypotheses behind the design,
//! solves the mean-field consistency system to synthesize decentralized
//! strategies, simulates finite populations against the worst-case volatility,
//! and cross-checks everything against an exact small-scale tree solver.

pub mod certify;
pub mod decoupling;
pub mod error;
pub mod fixtures;
pub mod meanfield;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod reporting;
pub mod scenario;
pub mod simulate;

pub use error::{CoreError, Result};
