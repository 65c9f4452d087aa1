//! Pipeline configuration: a single JSON document with defaults for every
//! acquisition, reconstruction and evaluation parameter.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{FanBeamGeometry, ImageGrid};
use crate::prior::SurrogatePrior;
use crate::projector::Projector;
use crate::recon::ReconConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub sdd: f64,
    pub sid: f64,
    pub n_views: usize,
    pub n_det: usize,
    pub det_spacing: f64,
    pub n_det_virtual: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { sdd: 1200.0, sid: 600.0, n_views: 360, n_det: 600, det_spacing: 1.0, n_det_virtual: 1000 }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<FanBeamGeometry> {
        FanBeamGeometry::new(self.sdd, self.sid, self.n_views, self.n_det, self.det_spacing, self.n_det_virtual)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// Pixel size in mm.
    pub dx: f64,
    pub dy: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 256, ny: 256, dx: 1.25, dy: 1.25 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.nx, self.ny, self.dx, self.dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Unattenuated photons per detector pixel.
    pub i0: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { i0: 1e5 }
    }
}

/// Phantom suite evaluated by the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub n_cases: usize,
    /// Sample phantoms that extend past the scan field of view.
    pub truncating: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { n_cases: 20, truncating: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub noise: NoiseConfig,
    pub recon: ReconConfig,
    pub prior: SurrogatePrior,
    pub suite: SuiteConfig,
    /// Root seed; every phantom, noise and prior seed is derived from it.
    pub seed: u64,
    /// Display window for PNG export, `[low, high]` in HU.
    pub window_hu: [f64; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            noise: NoiseConfig::default(),
            recon: ReconConfig::default(),
            prior: SurrogatePrior::default(),
            suite: SuiteConfig::default(),
            seed: 0,
            window_hu: [-600.0, 500.0],
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key.path=value` overrides. Values are parsed as JSON, falling
    /// back to a plain string; keys must name an existing field.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).map_err(config_err)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            }
            *slot = value;
        }
        let cfg: PipelineConfig = serde_json::from_value(doc).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<FanBeamGeometry> {
        self.geometry.build().map_err(config_err)
    }

    pub fn grid(&self) -> Result<ImageGrid> {
        self.grid.build().map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        let geometry = self.geometry()?;
        let grid = self.grid()?;
        Projector::new(&geometry, &grid).map_err(config_err)?;
        if !(self.noise.i0 > 0.0) || !self.noise.i0.is_finite() {
            return Err(Error::Config(format!("noise.i0 must be positive, got {}", self.noise.i0)));
        }
        self.recon.validate().map_err(config_err)?;
        if self.recon.n_outer == 0 {
            return Err(Error::Config("recon.n_outer must be at least 1".into()));
        }
        self.prior.validate().map_err(config_err)?;
        if self.suite.n_cases == 0 {
            return Err(Error::Config("suite.n_cases must be at least 1".into()));
        }
        let [lo, hi] = self.window_hu;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("window_hu must satisfy low < high, got [{lo}, {hi}]")));
        }
        Ok(())
    }
}
