pub mod autodiff;
pub mod cache;
pub mod cli;
pub mod data;
pub mod entity_graph;
pub mod error;
pub mod eval;
pub mod kg;
pub mod linking;
pub mod model;
pub mod pipeline;
pub mod train;
pub mod transe;

pub use error::{Error, Result};
