//! Spectral regularization of latent geometry for rehearsal-based
//! class-incremental learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: k-NN latent geometry graphs over embeddings and their
//!   normalized Laplacians.
//! - [`spectral`]: a dense symmetric eigensolver, the eigengap loss, its
//!   analytic gradient with respect to the embeddings, and the Monte Carlo
//!   sub-graph estimator used during training.
//! - [`learner`]: a small MLP classifier with hand-written reverse-mode
//!   gradients, cross-entropy and SGD, plus a k-NN classifier over features.
//! - [`replay`]: task streams, the reservoir buffer and the training loop.
//! - [`metrics`]: accuracy/forgetting, label-signal variation, intra-class
//!   variance and k-NN accuracy.
//! - [`fmap`]: functional maps between two latent graphs and their
//!   off-diagonal energy.
//! - [`data`]: synthetic and CSV-backed class-incremental datasets.

pub mod data;
pub mod error;
pub mod fmap;
pub mod gradcheck;
pub mod graph;
pub mod learner;
pub mod metrics;
pub mod replay;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
