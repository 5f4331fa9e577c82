pub mod assembler;
pub mod callgraph;
pub mod config;
pub mod coverage;
pub mod dataset;
pub mod error;
pub mod frontend;
pub mod labeler;
pub mod lcfg;
pub mod pipeline;
pub mod reasoner;

pub use error::{Error, Result};
