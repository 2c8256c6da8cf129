//! Camera fingerprint (PRNU) forensics.
//!
//! The crate covers the whole chain used to study how imaging pipelines
//! affect sensor fingerprints:
//!
//! * [`imaging`]: planes, colour images, PGM/PPM I/O, luminance, tiling.
//! * [`denoise`]: the wavelet and Gaussian filters used to form residuals.
//! * [`fingerprint`]: residual extraction, maximum-likelihood estimation,
//!   cleanup and the binary fingerprint file format.
//! * [`matching`]: NCC, FFT cross-correlation, PCE, p-values and alignment.
//! * [`localization`]: sliding-window PCE and tampering-probability maps.
//! * [`ispsim`]: a seeded sensor model and configurable developing pipelines.
//! * [`harness`]: dataset generation, correlation matrices, PCE sweeps,
//!   ROC analysis and report emission.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod denoise;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod harness;
pub mod imaging;
pub mod ispsim;
pub mod localization;
pub mod matching;
mod spectral;

pub use error::{Error, Result};
pub use imaging::{ColorImage, ImagePlane};
