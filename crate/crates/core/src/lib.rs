//! Histogram equalization of rating matrices, SGD matrix factorization and
//! popularity-fairness metrics.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the experiment
//! harness and the command line live in the `histeq-rec` crate.

#![no_std]

extern crate alloc;

pub mod equalize;
pub mod error;
pub mod evaluate;
pub mod factorize;
pub mod ratings;

pub use equalize::{apply, build_equalization_map, build_histogram, EqualizationMap, RatingHistogram, UnseenLevel};
pub use error::{Error, Result};
pub use evaluate::{EvalReport, EvalSpace};
pub use factorize::{init_model, train, FactorModel, Regularizer, TrainConfig, Trained};
pub use ratings::{split, subsample, LevelScale, Observation, RatingsBuilder, SparseRatings, Split};
