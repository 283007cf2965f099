//! Attention-based variational autoencoder for layout synthesis.
//!
//! The crate covers the full pipeline: dataset ingestion and token
//! encodings ([`layout`], [`dataset`]), a small reverse-mode autodiff
//! substrate ([`tensor`], [`graph`], [`nn`]), transformer blocks
//! ([`attention`]), the VAE with both decoder variants ([`model`]),
//! training ([`train`]), generation and latent-space tooling ([`sample`]),
//! the evaluation-metric suite ([`metrics`]), and SVG rendering ([`svg`]).

pub mod attention;
pub mod config;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod sample;
pub mod svg;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
