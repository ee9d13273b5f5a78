//! Graph-embedding link scheduling for device-to-device wireless networks.
//!
//! The crate covers the whole pipeline: random layouts and channel gains
//! ([`netgen`]), reference schedulers ([`baselines`]), the interference graph
//! ([`graph`]), the structure2vec embedding plus classifier with hand-written
//! gradients ([`embednn`]), and training/evaluation ([`trainer`]).

pub mod baselines;
pub mod embednn;
pub mod error;
pub mod graph;
pub mod netgen;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
