//! Surrogate prior images: ground truth degraded by blur and noise, standing
//! in for a learned artifact-reduction network when none is available.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::image::{Image, Unit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogatePrior {
    /// Gaussian blur standard deviation in pixels.
    pub blur_sigma_px: f64,
    /// Standard deviation of additive white noise in HU.
    pub noise_hu: f64,
}

impl Default for SurrogatePrior {
    fn default() -> Self {
        SurrogatePrior { blur_sigma_px: 5.0, noise_hu: 30.0 }
    }
}

impl SurrogatePrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma_px >= 0.0) || !(self.noise_hu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "surrogate prior needs non-negative blur and noise, got {} px and {} HU",
                self.blur_sigma_px, self.noise_hu
            )));
        }
        Ok(())
    }

    /// Blurs `truth` (HU) and adds seeded Gaussian noise.
    pub fn degrade(&self, truth: &Image, seed: u64) -> Result<Image> {
        self.validate()?;
        truth.expect_unit(Unit::Hu)?;
        let mut values = gaussian_blur(&truth.values, truth.grid.nx, truth.grid.ny, self.blur_sigma_px);
        if self.noise_hu > 0.0 {
            let normal = Normal::new(0.0, self.noise_hu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in &mut values {
                *v += normal.sample(&mut rng);
            }
        }
        Image::new(truth.grid, values, Unit::Hu)
    }
}
