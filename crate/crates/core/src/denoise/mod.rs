//! Denoising filters `D` used to form residuals `R = I - D(I)`.

mod gaussian;
mod wavelet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

pub use gaussian::{gaussian_denoise, gaussian_kernel};
pub use wavelet::{wavelet_denoise, WAVELET_LEVELS, WAVELET_MIN_SIZE};

/// Noise variance of the "sigma = 3 on the 8-bit scale" convention.
pub const DEFAULT_NOISE_VARIANCE: f64 = (3.0 / 255.0) * (3.0 / 255.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    /// Wavelet-domain local Wiener shrinkage; variance in normalized-intensity units.
    Wavelet { noise_variance: f64 },
    /// Separable Gaussian blur; sigma in pixels.
    Gaussian { sigma: f64 },
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        DenoiserSpec::Wavelet {
            noise_variance: DEFAULT_NOISE_VARIANCE,
        }
    }
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            DenoiserSpec::Wavelet { noise_variance } => ("noise_variance", noise_variance),
            DenoiserSpec::Gaussian { sigma } => ("sigma", sigma),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn apply(&self, plane: &ImagePlane) -> Result<ImagePlane> {
        self.validate()?;
        match *self {
            DenoiserSpec::Wavelet { noise_variance } => wavelet_denoise(plane, noise_variance),
            DenoiserSpec::Gaussian { sigma } => gaussian_denoise(plane, sigma),
        }
    }
}

impl fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserSpec::Wavelet { noise_variance } => write!(f, "wavelet:{noise_variance}"),
            DenoiserSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

/// Parses `wavelet`, `wavelet:<variance>`, `gaussian` or `gaussian:<sigma>`.
impl FromStr for DenoiserSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let arg = arg
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad denoiser parameter {a:?}")))
            })
            .transpose()?;
        let spec = match kind.trim() {
            "wavelet" => DenoiserSpec::Wavelet {
                noise_variance: arg.unwrap_or(DEFAULT_NOISE_VARIANCE),
            },
            "gaussian" => DenoiserSpec::Gaussian {
                sigma: arg.unwrap_or(1.0),
            },
            other => return Err(Error::Config(format!("unknown denoiser {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}
