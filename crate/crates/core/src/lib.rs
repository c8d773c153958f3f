// SPDX-License-Identifier: MIT OR Apache-2.0

//! # mdprobe
//!
//! Linear truth probers trained on contrast-pair activations.
//!
//! A contrast pair is a yes/no question rendered twice, once with each answer,
//! and fed through a language model. The resulting activation pairs
//! `(phi_plus, phi_minus)` are normalized per set, and a linear prober
//! `p(phi) = sigmoid(theta . phi + b)` is fit with one of several objectives:
//!
//! - **CCS**: negation consistency plus a confidence penalty.
//! - **MD** (midpoint-displacement): trades off the spread of pair
//!   displacements `u = phi_plus - phi_minus` against the spread of pair sums
//!   `v = phi_plus + phi_minus` along a unit direction.
//! - **MA** / **SMR**: mean-absolute and root-mean-square displacement
//!   variants of the same idea.
//! - **Supervised** binary cross-entropy, and PCA of the displacements, as
//!   baselines.
//!
//! The crate also provides the two-round lambda grid search, best-of-k seed
//! selection, and the evaluation metrics (orientation-fitted accuracy, mean
//! absolute cosine to a reference ensemble, random-direction tail
//! probabilities, plot-ready CSV emitters and report tables).

pub mod dataset;
pub mod digest;
pub mod error;
pub mod eval;
pub mod losses;
pub mod prober;
pub mod search;
pub mod trainer;

pub use dataset::{
    container, normalize, split, ContrastActivationSet, NormalizationStats, SplitSpec,
    synthetic::{gen_synthetic, SyntheticConfig, SyntheticSet},
};
pub use error::{ErrorKind, ProbeError, Result};
pub use eval::{
    accuracy, mean_abs_cosine, random_cosine_tail, self_similarity, Orientation, OrientationMode,
};
pub use losses::{LossSpec, LossVariant, Objective, PairStatistics, SignMode};
pub use prober::{Constraint, Direction, Prober, ProberRecord};
pub use search::{grid_search, GridSearchConfig, SearchObjective, SearchTrace};
pub use trainer::{Optimizer, TrainConfig, TrainedProber};
