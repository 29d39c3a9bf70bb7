//! Invertible low-dimensional models of X-ray linear attenuation spectra.
//!
//! Physics data and basis functions live in [`attenuation`], synthetic
//! mixture datasets in [`synth`]. The model families are the SVD subspace
//! ([`linear`]), the FISTA material-basis sparse code ([`sparse`]),
//! denoising autoencoders ([`neural`]) and the SVD + autoencoder residual
//! model ([`hybrid`]). [`eval`] scores reconstructions.

pub mod attenuation;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod linalg;
pub mod linear;
pub mod neural;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
