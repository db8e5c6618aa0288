pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub mod corpus;
pub mod featurize;
pub mod tokenizer;
pub mod eval;
pub mod generator;
pub mod theory;
