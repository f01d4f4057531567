//! Hierarchical multi-agent learning for energy-constrained, reconfigurable
//! intelligent surfaces with selectable phase resolution.

pub mod channel;
pub mod env;
pub mod error;
pub mod maq;
pub mod mdp;
pub mod nn;
pub mod policies;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
