//! Iterative reconstruction: SART data steps, reweighted total variation and
//! the data-consistent reconstruction driver.

mod dcr;
mod sart;
mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dcr::{
    dcr_reconstruct, dcr_reconstruct_traced, merge_sinograms, wtv_reconstruct, wtv_reconstruct_traced, OuterIteration,
    ReconDiagnostics,
};
pub use sart::{data_residual, sart_sweep, view_order, ChannelSet};
pub use tv::{tv_descent, tv_weights, wtv_gradient, wtv_norm, wtv_objective, DescentTrace, GradientField, TVWeights};

/// Hyperparameters of the SART + wTV loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Relative residual tolerance on measured channels.
    pub e1: f64,
    /// Relative residual tolerance on prior-filled channels.
    pub e2: f64,
    /// Weight regularizer in HU.
    pub epsilon_tv: f64,
    pub n_outer: usize,
    pub n_tv_steps: usize,
    pub sart_relaxation: f64,
    /// Initial TV step length as a fraction of the data step's image change.
    pub tv_step_fraction: f64,
    /// TV smoothing `delta` as a fraction of the image dynamic range.
    pub tv_smoothing: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            e1: 0.01,
            e2: 0.5,
            epsilon_tv: 5.0,
            n_outer: 10,
            n_tv_steps: 20,
            sart_relaxation: 0.8,
            tv_step_fraction: 0.2,
            tv_smoothing: 1e-3,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.e1 >= 0.0) || !(self.e2 >= 0.0) {
            return bad(format!("tolerances must be non-negative, got e1={} e2={}", self.e1, self.e2));
        }
        if !(self.epsilon_tv > 0.0) || !self.epsilon_tv.is_finite() {
            return bad(format!("epsilon_tv must be positive, got {}", self.epsilon_tv));
        }
        if !(self.sart_relaxation > 0.0 && self.sart_relaxation < 2.0) {
            return bad(format!("sart_relaxation must lie in (0, 2), got {}", self.sart_relaxation));
        }
        if !(self.tv_step_fraction >= 0.0) || !self.tv_step_fraction.is_finite() {
            return bad(format!("tv_step_fraction must be non-negative, got {}", self.tv_step_fraction));
        }
        if !(self.tv_smoothing > 0.0) || !self.tv_smoothing.is_finite() {
            return bad(format!("tv_smoothing must be positive, got {}", self.tv_smoothing));
        }
        Ok(())
    }
}
