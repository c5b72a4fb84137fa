pub mod analysis;
pub mod corpus;
pub mod decoder;
pub mod decoding;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod snapshot;
pub mod tracker;
pub mod training;

pub use error::{Error, Result};
