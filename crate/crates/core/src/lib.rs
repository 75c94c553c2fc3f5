pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod models;
pub mod train;

pub use error::{Error, Result};
