pub mod error;
pub mod eval;
pub mod pipeline;
pub mod recaller;
pub mod scorer;
pub mod segmentation;
pub mod selector;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{CoftError, Result};
