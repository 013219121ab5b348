//! Feature selection with knockoff filtering and regularization-persistence
//! statistics.
//!
//! The crate builds knockoff copies of a design matrix (Gaussian second-order,
//! Gaussian-copula, or fixed-X), trains a group-regularized MLP whose
//! first-layer column norms gate each feature, aggregates those norms over a
//! sampled surface of regularization regimes into persistence scores, and runs
//! the knockoff filter on the paired score differences to select features with
//! finite-sample FDR control. Baseline statistics (lasso-path entry time,
//! input-gradient sensitivity), synthetic data generators, evaluation metrics,
//! and tabular preprocessing round out the experiment toolkit.
//!
//! All randomized routines take an explicit RNG and are pure functions of
//! their inputs and seed; identical seeds give bit-identical outputs.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod filter;
pub mod grip;
pub mod ingest;
pub mod knockoffs;
pub mod linalg;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
pub use filter::{KnockoffStats, SelectionResult};
pub use grip::{BssConfig, PersistenceScores, RegularizationPrior, Schedule};
pub use knockoffs::{AugmentedDesign, KnockoffModel};
pub use linalg::{CholFactor, SymMatrix};
pub use nn::{LossKind, NetConfig, NetParams};
