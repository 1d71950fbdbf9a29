//! Multifrequency PolSAR land-cover classification.
//!
//! The crate covers the full chain from raw scattering data to a per-pixel
//! class map: polarimetric feature extraction (33 features per frequency
//! band), stacked sparse-autoencoder dimensionality reduction, superpixel
//! generation over the learned representation, robust pixel+superpixel
//! feature construction, and a softmax classifier. A synthetic speckle
//! generator with known per-class coherency truth makes the whole pipeline
//! verifiable end to end without external datasets.

pub mod data;
pub mod decomp;
pub mod eval;
pub mod neural;
pub mod pipeline;
pub mod superpixels;
pub mod error;

pub use error::{Error, Result};
