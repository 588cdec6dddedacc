//! Component attention networks for multimodal sequence classification.
//!
//! Each input window is a set of frame-aligned *components* (a joint track,
//! one IMU sensor, an audio-feature vector). CANet runs every component
//! through a shared recurrent encoder and a per-component temporal attention,
//! then weighs the resulting summaries with a component attention map before
//! classifying. GCN-CANet replaces the individual joint components with one
//! graph-convolutional branch over the body skeleton. Predictions from
//! several models can be combined by majority vote.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod fusion;
pub mod gradsuite;
pub mod layers;
pub mod models;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
