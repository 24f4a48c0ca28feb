//! Domain generalization with learned domain embeddings.
//!
//! A task network pools an unlabeled sample of a domain into a fixed-length
//! embedding; a main network classifies each point from its features joined
//! with that embedding. The crate covers the network engine, the rotated
//! half-space benchmark generator, CSV ingestion with leave-one-domain-out
//! splits, training and evaluation, random hyperparameter search, the
//! accuracy sweep, and domain-similarity estimation.

pub mod dataset;
pub mod error;
pub mod model;
pub mod nn;
pub mod rng;
pub mod similarity;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
