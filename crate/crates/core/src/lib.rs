pub mod aam;
pub mod analysis;
pub mod error;
pub mod figures;
pub mod io;
pub mod nn;
pub mod numerics;
pub mod raster;
pub mod seed;
pub mod vae;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
