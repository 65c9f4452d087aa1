//! Filtered back-projection for a flat-detector fan beam over a full turn.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::image::{Image, Unit};
use crate::projector::Projector;
use crate::sinogram::Sinogram;

/// Spatial Ram-Lak filter taps for lags `-(n-1)..=n-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RampKernel {
    pub taps: Vec<f64>,
    pub det_spacing: f64,
}

impl RampKernel {
    /// Tap at integer lag `k`.
    #[inline]
    pub fn at(&self, k: isize) -> f64 {
        let center = (self.taps.len() / 2) as isize;
        self.taps[(center + k) as usize]
    }

    pub fn half_len(&self) -> usize {
        self.taps.len() / 2 + 1
    }
}

pub fn ramp_kernel(n: usize, ds: f64) -> Result<RampKernel> {
    if n == 0 {
        return Err(Error::InvalidParameter("ramp kernel needs n > 0".into()));
    }
    if !(ds > 0.0) {
        return Err(Error::InvalidParameter(format!("ramp kernel spacing {ds}")));
    }
    let n = n as isize;
    let taps = (-(n - 1)..n)
        .map(|k| {
            if k == 0 {
                1.0 / (4.0 * ds * ds)
            } else if k % 2 == 0 {
                0.0
            } else {
                let d = std::f64::consts::PI * k as f64 * ds;
                -1.0 / (d * d)
            }
        })
        .collect();
    Ok(RampKernel { taps, det_spacing: ds })
}

/// Cosine-weighted, ramp-filtered projections, scaled to the isocenter plane.
pub fn filter_projections(sinogram: &Sinogram) -> Result<Vec<f64>> {
    let g = &sinogram.geometry;
    let nc = g.n_channels();
    // detector coordinates rescaled to the isocenter
    let spacing = g.det_spacing * g.sid / g.sdd;
    let kernel = ramp_kernel(nc, spacing)?;
    let cosine: Vec<f64> = (0..nc)
        .map(|c| {
            let u = g.channel_u(c);
            g.sdd / (g.sdd * g.sdd + u * u).sqrt()
        })
        .collect();
    let mut out = vec![0.0; sinogram.values.len()];
    out.par_chunks_mut(nc).enumerate().for_each(|(v, dst)| {
        let src = sinogram.view(v);
        let weighted: Vec<(usize, f64)> = src
            .iter()
            .zip(&cosine)
            .enumerate()
            .filter(|(_, (&p, _))| p != 0.0)
            .map(|(k, (&p, &w))| (k, p * w))
            .collect();
        for (n, q) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(k, p) in &weighted {
                acc += p * kernel.at(n as isize - k as isize);
            }
            *q = spacing * acc;
        }
    });
    Ok(out)
}

/// FBP in attenuation units (1/mm).
pub fn fbp_reconstruct_mu(sinogram: &Sinogram, grid: &ImageGrid) -> Result<Image> {
    sinogram.check_finite()?;
    let g = &sinogram.geometry;
    // validates that the grid fits inside the source orbit
    Projector::new(g, grid)?;
    let filtered = filter_projections(sinogram)?;
    let nc = g.n_channels();
    let nv = g.n_views();
    let axes: Vec<_> = (0..nv).map(|v| g.axes(v)).collect();
    // half weight for the two-fold redundancy of a full turn
    let scale = 0.5 * g.angle_step();
    let values = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            let filtered = &filtered;
            let axes = &axes;
            (0..grid.nx).map(move |i| {
                let (x, y) = grid.world(i, j);
                let mut acc = 0.0;
                for (v, &((cx, cy), (ex, ey))) in axes.iter().enumerate() {
                    let depth = g.sid - (x * cx + y * cy);
                    let lateral = x * ex + y * ey;
                    let u = g.sdd * lateral / depth;
                    let fc = g.u_to_channel(u);
                    if fc < 0.0 || fc > (nc - 1) as f64 {
                        continue;
                    }
                    let k = fc.floor() as usize;
                    let t = fc - k as f64;
                    let row = &filtered[v * nc..(v + 1) * nc];
                    let q = if k + 1 < nc { row[k] * (1.0 - t) + row[k + 1] * t } else { row[k] };
                    let w = g.sid / depth;
                    acc += w * w * q;
                }
                scale * acc
            })
        })
        .collect();
    Image::new(*grid, values, Unit::MuPerMm)
}

/// FBP converted to HU. Unmeasured channels are used as given.
pub fn fbp_reconstruct(sinogram: &Sinogram, grid: &ImageGrid) -> Result<Image> {
    fbp_reconstruct_mu(sinogram, grid)?.mu_to_hu()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FanBeamGeometry;

    #[test]
    fn ram_lak_taps() {
        let k = ramp_kernel(8, 1.0).unwrap();
        assert_eq!(k.taps.len(), 15);
        assert!((k.at(0) - 0.25).abs() < 1e-15);
        assert!((k.at(1) + 0.101321183642338).abs() < 1e-12);
        assert!((k.at(-1) - k.at(1)).abs() == 0.0);
        assert_eq!(k.at(2), 0.0);
        assert_eq!(k.at(-4), 0.0);
        let dc: f64 = k.taps.iter().sum();
        assert!(dc >= 0.0 && dc < 0.1 * k.at(0));
        assert!(ramp_kernel(0, 1.0).is_err());
    }

    #[test]
    fn zero_sinogram_is_air() {
        let g = FanBeamGeometry::new(400.0, 200.0, 36, 60, 1.0, 80).unwrap();
        let grid = ImageGrid::new(16, 16, 2.0, 2.0).unwrap();
        let img = fbp_reconstruct(&Sinogram::zeros(&g), &grid).unwrap();
        assert!(img.values.iter().all(|&v| v == -1000.0));
    }

    #[test]
    fn grid_outside_orbit_rejected() {
        let g = FanBeamGeometry::new(400.0, 200.0, 36, 60, 1.0, 80).unwrap();
        let grid = ImageGrid::new(512, 512, 1.0, 1.0).unwrap();
        assert!(fbp_reconstruct(&Sinogram::zeros(&g), &grid).is_err());
    }
}
