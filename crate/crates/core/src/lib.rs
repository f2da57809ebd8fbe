pub mod error;
pub mod geo;

pub use error::{Error, Result};
pub mod ingest;
pub mod residence;
pub mod clustering;
pub mod costmatrix;
pub mod pmedian;
pub mod evaluate;
pub mod synth;
