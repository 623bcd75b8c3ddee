//! Incremental MLP for tabular data streams.
//!
//! The model ([`model::Imlp`]) extends a small feed-forward network with a
//! windowed dot-product attention over a fixed-size FIFO of detached segment
//! prototypes ([`buffer::FeatureBuffer`]). It is trained segment by segment
//! without revisiting raw rows from earlier segments ([`trainer`]).
//!
//! Around it sits an evaluation toolkit: tabular preprocessing and stream
//! segmentation ([`data`]), balanced accuracy, log loss and the
//! energy-penalized NetScore ([`metrics`]), energy accounting from power
//! traces or FLOP counts ([`energy`]), and Pareto / rank-based statistical
//! comparison of models ([`stats`]).

pub mod buffer;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod energy;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seed;
pub mod stats;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
