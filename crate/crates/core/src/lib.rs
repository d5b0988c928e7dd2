pub mod autodiff;
pub mod data;
pub mod error;
pub mod graphs;
pub mod model;
pub mod train;

pub use error::{Error, Result};
