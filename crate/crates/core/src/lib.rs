//! Manifold-based test generation for image classifiers.
//!
//! Trains a two-stage conditional variational autoencoder on a labeled image
//! dataset, then samples or search-optimizes in the second-stage latent space
//! to produce realistic inputs on which a dropout-bearing classifier under
//! test disagrees with the conditioning label. Includes a small reverse-mode
//! differentiation core, Monte-Carlo-dropout uncertainty, particle swarm
//! optimization over the latent manifold, and Fréchet-distance realism
//! scoring.

pub mod autodiff;
pub mod cvae;
pub mod datasets;
pub mod error;
pub mod generator;
pub mod harness;
pub mod metrics;
pub mod pgm;
pub mod search;
pub mod seeds;

pub use autodiff::{Real, Tensor};
pub use error::{Error, Result};
