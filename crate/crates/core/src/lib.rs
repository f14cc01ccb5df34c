//! Cavity electromagnetically induced transparency and all-optical switching
//! with an atomic ensemble in a linear optical cavity.

pub mod error;
pub mod fitting;
pub mod model;
pub mod oracle;
pub mod spectra;

pub use error::{Error, Result};
