//! Granular regional house-price indexes from repeat sales, with
//! spatio-temporal graph regularization and PCA trend decomposition.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`ingest`] — validated sales records are paired into repeat-sale
//!    log-return observations on a monthly [`time::TimeGrid`].
//! 2. [`graph`] — spatial and temporal graph Laplacians, combined into a
//!    matrix-free Kronecker-product smoothness penalty.
//! 3. [`solver`] — the penalized repeat-sales regression: one joint fit per
//!    parent region batch, hyperparameter grid search by K-fold
//!    cross-validation, and panel assembly.
//! 4. [`pca`] — eigendecomposition of the index panel into main market
//!    trends, per-region scores, and truncated (smoothed) indexes.
//! 5. [`analysis`] — downstream aggregations: volume-weighted score means,
//!    rank correlations against covariates and listing-text word
//!    frequencies, composite indexes, CPI deflation, and boom overlays.
//! 6. [`synth`] — seeded synthetic markets with known ground truth, used to
//!    verify the whole pipeline end to end.
//!
//! The crate is `no_std`-compatible (requires `alloc`); all file IO, CSV
//! formats, and the command-line interface live in the companion `hpindex`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod pca;
pub mod solver;
pub mod synth;
pub mod time;

#[cfg(feature = "oracle")]
pub mod oracle;

pub use graph::{adjacency_laplacian, kronecker_penalty, path_laplacian, RegionGraph, SpatioTemporalPenalty};
pub use ingest::{pair_repeat_sales, RegionIndex, RepeatSalePair, SalesRecord};
pub use pca::{fit_pca, IndexPanel, PcaDecomposition};
pub use solver::{build_design, grid_search, solve_penalized, DesignSystem, FitResult, PenaltyConfig};
pub use time::{Date, Month, TimeGrid};
