//! Threat detection over fused IDS and UEBA records with a TabNet classifier
//! written from scratch.

mod container;
pub mod decoder;
pub mod diff;
pub mod encoder;
mod error;
pub mod fusion;
pub mod interpret;
pub mod model;
pub mod optim;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
