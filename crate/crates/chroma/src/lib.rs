//! File formats, IDX loading, the experiment pipeline and the `chroma`
//! command line on top of `chroma-core`.

pub mod cli;
pub mod container;
mod error;
pub mod idx;
pub mod plan;
pub mod report;
pub mod snapshot;

pub use error::{Error, Result};
