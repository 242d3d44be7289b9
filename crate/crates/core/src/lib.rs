//! Rank-distribution analysis and inner-code optimization for BATS codes
//! over line networks with independent packet losses.

pub mod analytics;
pub mod bound;
pub mod error;
pub mod experiment;
pub mod gf;
pub mod optimize;
pub mod rng;
pub mod sim;

pub use analytics::{
    average_rank, efficiency, propagate, transition_matrix, PathProfile, Policy, RankDistribution,
    TransitionMatrix,
};
pub use error::{Error, Result};
pub use gf::{Field, FieldSpec, MatrixGF};
