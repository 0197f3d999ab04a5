//! Semantic segmentation of multispectral satellite rasters on a CPU.
//!
//! A small autodiff-free layer graph with hand-written backward rules
//! ([`graph`], [`nn`]), U-Net/SegNet/ResUNet builders ([`topology`]), a
//! training loop ([`train`]), confusion-matrix metrics ([`metrics`]),
//! stratified folds ([`split`]), georeferenced rasters ([`geo`]), a
//! chunked array store ([`store`]) and the config-driven pipeline behind
//! the `terraseg` binary ([`pipeline`]).

// NaN must fail range checks, so `!(x > 0.0)` is written on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod dtype;
pub mod error;
pub mod geo;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod split;
pub mod store;
pub mod synthetic;
pub mod tensor;
pub mod topology;
pub mod train;

pub use error::{Error, Result};
