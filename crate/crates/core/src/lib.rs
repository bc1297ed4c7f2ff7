pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod ibloss;
pub mod nets;
pub mod par;
pub mod tgraph;
pub mod train;

pub use error::{Error, Result};
