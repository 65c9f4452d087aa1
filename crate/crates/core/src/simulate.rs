//! Measurement simulation: detector truncation and transmission noise.
//!
//! Noise draws use ChaCha8 with one stream per view (`set_stream(view)`) and
//! the Poisson sampler from `rand_distr`, so a realization depends only on the
//! seed and the view index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

/// Tolerance below zero accepted as rounding in analytic line integrals.
const NEGATIVE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Unattenuated photons per detector pixel.
    pub i0: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn new(i0: f64, rng_seed: u64) -> Result<Self> {
        if !(i0 > 0.0) || !i0.is_finite() {
            return Err(Error::InvalidParameter(format!("i0 must be positive, got {i0}")));
        }
        Ok(NoiseModel { i0, rng_seed })
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { i0: 1e5, rng_seed: 0 }
    }
}

/// Zeroes every channel outside the physical detector and marks it unmeasured.
pub fn truncate(sinogram: &Sinogram) -> Sinogram {
    let physical = sinogram.geometry.physical_mask();
    let mask: Vec<bool> = sinogram.measured_mask.iter().zip(&physical).map(|(&m, &p)| m && p).collect();
    let nc = sinogram.n_channels();
    let values = sinogram.values.iter().enumerate().map(|(k, &v)| if mask[k % nc] { v } else { 0.0 }).collect();
    Sinogram { geometry: sinogram.geometry.clone(), values, measured_mask: mask }
}

/// Replaces every measured line integral `p` by `-ln(max(N, 1) / i0)` with
/// `N ~ Poisson(i0 exp(-p))`.
pub fn add_poisson_noise(sinogram: &Sinogram, model: &NoiseModel) -> Result<Sinogram> {
    if !(model.i0 > 0.0) {
        return Err(Error::InvalidParameter(format!("i0 must be positive, got {}", model.i0)));
    }
    let nc = sinogram.n_channels();
    for (k, &p) in sinogram.values.iter().enumerate() {
        if sinogram.measured_mask[k % nc] && p < -NEGATIVE_SLACK {
            return Err(Error::NegativeLineIntegral { view: k / nc, channel: k % nc, value: p });
        }
    }
    let mut out = sinogram.clone();
    let mask = &sinogram.measured_mask;
    // One stream per detector pixel: the realization of a pixel does not
    // depend on which other pixels are measured.
    let base = ChaCha8Rng::seed_from_u64(model.rng_seed);
    out.values.par_chunks_mut(nc).enumerate().try_for_each(|(v, row)| -> Result<()> {
        for (c, p) in row.iter_mut().enumerate() {
            if !mask[c] {
                continue;
            }
            let mut rng = base.clone();
            rng.set_stream((v * nc + c) as u64);
            let mean = model.i0 * (-p.max(0.0)).exp();
            let counts = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::InvalidParameter(format!("poisson mean {mean}: {e}")))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            *p = -(counts.max(1.0) / model.i0).ln();
        }
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FanBeamGeometry;

    fn ramp(geometry: &FanBeamGeometry) -> Sinogram {
        let mut s = Sinogram::zeros(geometry);
        for (k, v) in s.values.iter_mut().enumerate() {
            *v = (k % 13) as f64 * 0.25;
        }
        s
    }

    #[test]
    fn no_virtual_channels_means_identity() {
        let g = FanBeamGeometry::new(1200.0, 600.0, 4, 50, 1.0, 50).unwrap();
        let s = ramp(&g);
        assert_eq!(truncate(&s), s);
    }

    #[test]
    fn reference_detector_drops_400_channels() {
        let g = FanBeamGeometry::table1();
        let s = ramp(&g);
        let t = truncate(&s);
        for v in 0..g.n_views() {
            let row = t.view(v);
            let zeroed = (0..1000).filter(|&c| !t.measured_mask[c]).count();
            assert_eq!(zeroed, 400);
            for c in 0..1000 {
                if t.measured_mask[c] {
                    assert_eq!(row[c].to_bits(), s.at(v, c).to_bits());
                } else {
                    assert_eq!(row[c], 0.0);
                }
            }
        }
        assert_eq!(truncate(&t), t);
    }

    #[test]
    fn noise_is_seeded_and_leaves_unmeasured_channels() {
        let g = FanBeamGeometry::new(1200.0, 600.0, 6, 20, 1.0, 30).unwrap();
        let s = truncate(&ramp(&g));
        let m = NoiseModel::new(1e5, 9).unwrap();
        let a = add_poisson_noise(&s, &m).unwrap();
        let b = add_poisson_noise(&s, &m).unwrap();
        assert_eq!(a, b);
        let c = add_poisson_noise(&s, &NoiseModel::new(1e5, 10).unwrap()).unwrap();
        assert_ne!(a, c);
        for (k, (&x, &y)) in s.values.iter().zip(&a.values).enumerate() {
            if !s.measured_mask[k % 30] {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn huge_exposure_approaches_noiseless() {
        let g = FanBeamGeometry::new(1200.0, 600.0, 6, 20, 1.0, 20).unwrap();
        let s = ramp(&g);
        let a = add_poisson_noise(&s, &NoiseModel::new(1e14, 1).unwrap()).unwrap();
        for (x, y) in s.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn negative_line_integral_rejected() {
        let g = FanBeamGeometry::new(1200.0, 600.0, 2, 4, 1.0, 4).unwrap();
        let mut s = Sinogram::zeros(&g);
        s.values[5] = -0.1;
        assert!(matches!(
            add_poisson_noise(&s, &NoiseModel::default()),
            Err(Error::NegativeLineIntegral { view: 1, channel: 1, .. })
        ));
        assert!(NoiseModel::new(0.0, 1).is_err());
    }

    #[test]
    fn zero_count_clamp_keeps_values_finite() {
        let g = FanBeamGeometry::new(1200.0, 600.0, 2, 4, 1.0, 4).unwrap();
        let mut s = Sinogram::zeros(&g);
        s.values.iter_mut().for_each(|v| *v = 40.0);
        let a = add_poisson_noise(&s, &NoiseModel::new(10.0, 3).unwrap()).unwrap();
        assert!(a.values.iter().all(|v| v.is_finite() && (v - 10f64.ln()).abs() < 1e-12));
    }
}
