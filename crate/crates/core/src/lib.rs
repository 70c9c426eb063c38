pub mod baseline;
pub mod covmodel;
pub mod embed;
pub mod error;
pub mod harness;
pub mod markov;
pub mod matcore;
pub mod project;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
