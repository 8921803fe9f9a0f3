pub mod error;
pub mod evaluator;
pub mod imputer;
pub mod mapper;
pub mod anthropometry;
pub mod mesh;
pub mod regression;
pub mod selector;
pub mod synth;

pub use error::{Error, Result};
