//! Hierarchical windowed graph attention network (HWGAT) for isolated sign
//! recognition from 2D skeleton keypoint sequences.
//!
//! The crate is organised bottom-up:
//!
//! - [`schema`]: the 27-keypoint skeleton, its edges and body parts, and the
//!   gather from a full pose-estimator frame.
//! - [`preprocess`]: normalisation, infill and training-time augmentation.
//! - [`windowing`]: spatial windows, temporal shift and block adjacency masks.
//! - [`network`]: the forward pass with hand-written exact gradients.
//! - [`training`]: loss, AdamW, learning-rate schedule, metrics, checkpoints.
//! - [`data_io`]: sequence and manifest formats plus the synthetic generator.
//! - [`verification`]: finite differences, a dense attention reference and the
//!   ablation grid runner.
//! - [`config`]: the flat dotted-key run configuration shared by the CLI.

pub mod config;
pub mod data_io;
pub mod error;
pub mod network;
pub mod preprocess;
pub mod real;
pub mod rng;
pub mod schema;
pub mod training;
pub mod verification;
pub mod windowing;

pub use error::{Error, ErrorCategory, Result};
pub use real::Real;
