//! Conformal prediction for regression on network-sampled data.
//!
//! The crate covers the full pipeline: random graph models, invariant
//! selection rules (ego networks, snowball waves, k-hop unions) and random
//! walks, permutation-invariant network covariates, split and weighted
//! conformal prediction, spectral mixing diagnostics, and the simulation
//! drivers used to estimate coverage.

pub mod conformal;
pub mod covariates;
pub mod error;
pub mod graph;
pub mod graph_models;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod simulation;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use graph::Graph;
pub use linalg::Mat;
