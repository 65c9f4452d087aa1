//! Data-consistent reconstruction for field-of-view extension in truncated
//! fan-beam CT.
//!
//! A prior image covering the extended field of view is forward projected
//! into the unmeasured detector channels; reweighted-TV regularized SART then
//! reconstructs from the completed sinogram while keeping the measured
//! channels authoritative. FBP, water cylinder extrapolation and plain wTV
//! reconstructions are provided as baselines, with RMSE and SSIM evaluation.

pub mod config;
pub mod error;
pub mod fbp;
pub mod filter;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod prior;
pub mod projector;
pub mod recon;
pub mod simulate;
pub mod sinogram;
pub mod wce;

pub use error::{Error, Result};
pub use geometry::{fov_mask, FanBeamGeometry, ImageGrid, Mask};
pub use image::{Image, Unit, MU_WATER};
pub use sinogram::Sinogram;
