use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;

/// Line integrals on the virtual detector, `values[view * n_channels + channel]`.
///
/// `measured_mask[c]` is `true` where channel `c` carries measured data. A
/// freshly simulated projection is fully measured; truncation clears the
/// channels outside the physical detector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub geometry: FanBeamGeometry,
    pub values: Vec<f64>,
    pub measured_mask: Vec<bool>,
}

impl Sinogram {
    pub fn zeros(geometry: &FanBeamGeometry) -> Self {
        let n = geometry.n_views() * geometry.n_channels();
        Sinogram { geometry: geometry.clone(), values: vec![0.0; n], measured_mask: vec![true; geometry.n_channels()] }
    }

    pub fn new(geometry: FanBeamGeometry, values: Vec<f64>, measured_mask: Vec<bool>) -> Result<Self> {
        let (nv, nc) = (geometry.n_views(), geometry.n_channels());
        if values.len() != nv * nc {
            return Err(Error::ShapeMismatch(format!("{} values for {nv} views x {nc} channels", values.len())));
        }
        if measured_mask.len() != nc {
            return Err(Error::ShapeMismatch(format!("mask of length {} for {nc} channels", measured_mask.len())));
        }
        Ok(Sinogram { geometry, values, measured_mask })
    }

    pub fn n_views(&self) -> usize {
        self.geometry.n_views()
    }

    pub fn n_channels(&self) -> usize {
        self.geometry.n_channels()
    }

    #[inline]
    pub fn at(&self, view: usize, channel: usize) -> f64 {
        self.values[view * self.n_channels() + channel]
    }

    pub fn view(&self, view: usize) -> &[f64] {
        let nc = self.n_channels();
        &self.values[view * nc..(view + 1) * nc]
    }

    pub fn view_mut(&mut self, view: usize) -> &mut [f64] {
        let nc = self.n_channels();
        &mut self.values[view * nc..(view + 1) * nc]
    }

    /// `true` when some channel is unmeasured.
    pub fn is_truncated(&self) -> bool {
        self.measured_mask.iter().any(|&m| !m)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite(format!(
                "sinogram view {}, channel {}",
                k / self.n_channels(),
                k % self.n_channels()
            ))),
            None => Ok(()),
        }
    }

    /// Euclidean norm over the channels where `select` is true.
    pub fn masked_norm(&self, select: &[bool]) -> f64 {
        let nc = self.n_channels();
        self.values.iter().enumerate().filter(|(k, _)| select[k % nc]).map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}
