//! Images on an [`ImageGrid`] and the HU/attenuation conversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, Mask};

/// Linear attenuation coefficient of water in 1/mm.
pub const MU_WATER: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "HU")]
    Hu,
    #[serde(rename = "mu_per_mm")]
    MuPerMm,
}

#[inline]
pub fn hu_to_mu_value(hu: f64) -> f64 {
    MU_WATER * (1.0 + hu / 1000.0)
}

#[inline]
pub fn mu_to_hu_value(mu: f64) -> f64 {
    (mu / MU_WATER - 1.0) * 1000.0
}

/// Row-major image, `values[j * nx + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
    pub unit: Unit,
}

impl Image {
    pub fn new(grid: ImageGrid, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a {}x{} grid", values.len(), grid.nx, grid.ny)));
        }
        Ok(Image { grid, values, unit })
    }

    pub fn filled(grid: ImageGrid, value: f64, unit: Unit) -> Self {
        Image { grid, values: vec![value; grid.len()], unit }
    }

    pub fn zeros(grid: ImageGrid, unit: Unit) -> Self {
        Self::filled(grid, 0.0, unit)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn expect_unit(&self, unit: Unit) -> Result<()> {
        if self.unit != unit {
            return Err(Error::WrongUnit { expected: unit, found: self.unit });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.grid.nx != other.grid.nx || self.grid.ny != other.grid.ny {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.grid.nx, self.grid.ny, other.grid.nx, other.grid.ny
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite(format!("{what}: pixel {k} is {}", self.values[k]))),
            None => Ok(()),
        }
    }

    /// Attenuation image from an HU image.
    pub fn hu_to_mu(&self) -> Result<Image> {
        self.expect_unit(Unit::Hu)?;
        Ok(self.map_into(Unit::MuPerMm, hu_to_mu_value))
    }

    /// HU image from an attenuation image.
    pub fn mu_to_hu(&self) -> Result<Image> {
        self.expect_unit(Unit::MuPerMm)?;
        Ok(self.map_into(Unit::Hu, mu_to_hu_value))
    }

    /// Converts to `unit`, cloning when already there.
    pub fn to_unit(&self, unit: Unit) -> Image {
        match (self.unit, unit) {
            (Unit::Hu, Unit::MuPerMm) => self.map_into(unit, hu_to_mu_value),
            (Unit::MuPerMm, Unit::Hu) => self.map_into(unit, mu_to_hu_value),
            _ => self.clone(),
        }
    }

    fn map_into(&self, unit: Unit, f: impl Fn(f64) -> f64) -> Image {
        Image { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), unit }
    }

    /// Pixelwise `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.check_same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Image { grid: self.grid, values, unit: self.unit })
    }

    /// Mean value over the pixels selected by `mask`.
    pub fn masked_mean(&self, mask: &Mask) -> Result<f64> {
        if mask.flags.len() != self.values.len() {
            return Err(Error::ShapeMismatch("mask and image sizes differ".into()));
        }
        let (sum, n) = self
            .values
            .iter()
            .zip(&mask.flags)
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(sum / n as f64)
    }

    /// Isotropic total variation, `sum sqrt(Dx^2 + Dy^2)` with forward differences.
    pub fn total_variation(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut tv = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let gx = if i + 1 < nx { self.values[k + 1] - self.values[k] } else { 0.0 };
                let gy = if j + 1 < ny { self.values[k + nx] - self.values[k] } else { 0.0 };
                tv += gx.hypot(gy);
            }
        }
        tv
    }
}
