//! Hyperbolic graph representation learning for social event detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`manifold`]: Poincaré ball and hyperboloid geometry on plain slices.
//! * [`diffcore`]: dense tensors with reverse-mode gradients and Adam.
//! * [`ingest`]: message records to a homogeneous message graph.
//! * [`encoders`]: hyperbolic MLP / GCN layers and the supervised pipeline.
//! * [`contrastive`]: the unsupervised contrastive pipeline.
//! * [`metrics`]: NMI, AMI, ARI, accuracy and F1 scores.
//! * [`synth`], [`config`], [`cli`]: synthetic benchmarks and the operator surface.

pub mod cli;
pub mod config;
pub mod contrastive;
pub mod diffcore;
pub mod encoders;
pub mod error;
pub mod ingest;
pub mod manifold;
pub mod metrics;
pub mod synth;
mod fmt;

pub use error::{Error, Result};
