//! Ray-driven forward projection (Joseph's method) and its exact transpose.
//!
//! Every ray is traced along its dominant axis; at each column (or row) the
//! ray crosses, the two nearest pixels along the minor axis share the step
//! length by linear interpolation. The back projector visits exactly the
//! same `(pixel, weight)` pairs, so `<A x, y> = <x, A^T y>` holds to
//! rounding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{FanBeamGeometry, ImageGrid};
use crate::image::{Image, Unit};
use crate::sinogram::Sinogram;

/// Views accumulated into one partial image during back projection.
const BACKPROJECT_BLOCK: usize = 8;

/// Explicit row of the system matrix for one ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayPath {
    /// `(pixel index, weight in mm)` pairs in traversal order.
    pub entries: Vec<(usize, f64)>,
}

impl RayPath {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }
}

/// System matrix `A` for one geometry and grid, evaluated on the fly.
#[derive(Clone, Debug)]
pub struct Projector {
    geometry: FanBeamGeometry,
    grid: ImageGrid,
    sources: Vec<(f64, f64)>,
}

impl Projector {
    pub fn new(geometry: &FanBeamGeometry, grid: &ImageGrid) -> Result<Self> {
        geometry.validate()?;
        grid.validate()?;
        let reach = grid.half_diagonal();
        if geometry.sid <= reach {
            return Err(Error::InvalidGeometry(format!(
                "source orbit radius {} mm lies inside the grid (half-diagonal {reach:.1} mm)",
                geometry.sid
            )));
        }
        if geometry.sdd - geometry.sid <= reach {
            return Err(Error::InvalidGeometry(format!(
                "detector at {} mm from isocenter lies inside the grid (half-diagonal {reach:.1} mm)",
                geometry.sdd - geometry.sid
            )));
        }
        let sources = (0..geometry.n_views()).map(|v| geometry.source(v)).collect();
        Ok(Projector { geometry: geometry.clone(), grid: *grid, sources })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    /// Visits every `(pixel, weight)` pair on the ray of `(view, channel)`.
    #[inline]
    pub fn trace<F: FnMut(usize, f64)>(&self, view: usize, channel: usize, mut visit: F) {
        let g = &self.grid;
        let (sx, sy) = self.sources[view];
        let (px, py) = self.geometry.detector_point(view, channel);
        let (dx, dy) = (px - sx, py - sy);
        let len = dx.hypot(dy);
        let (x0, y0) = (g.x0(), g.y0());

        if dx.abs() / g.dx >= dy.abs() / g.dy {
            // march over columns; interpolate between rows
            let step = g.dx * len / dx.abs();
            // fj(i) = a + b * i
            let b = dy / dx * g.dx / g.dy;
            let a = ((sy + (x0 - sx) * dy / dx) - y0) / g.dy;
            let (lo, hi) = index_window(a, b, g.ny, g.nx);
            for i in lo..hi {
                let fj = a + b * i as f64;
                if fj <= -1.0 || fj >= g.ny as f64 {
                    continue;
                }
                let k = fj.floor();
                let frac = fj - k;
                let k = k as isize;
                if k >= 0 && frac < 1.0 {
                    visit(k as usize * g.nx + i, step * (1.0 - frac));
                }
                if k + 1 < g.ny as isize && frac > 0.0 {
                    visit((k + 1) as usize * g.nx + i, step * frac);
                }
            }
        } else {
            // march over rows; interpolate between columns
            let step = g.dy * len / dy.abs();
            let b = dx / dy * g.dy / g.dx;
            let a = ((sx + (y0 - sy) * dx / dy) - x0) / g.dx;
            let (lo, hi) = index_window(a, b, g.nx, g.ny);
            for j in lo..hi {
                let fi = a + b * j as f64;
                if fi <= -1.0 || fi >= g.nx as f64 {
                    continue;
                }
                let k = fi.floor();
                let frac = fi - k;
                let k = k as isize;
                let row = j * g.nx;
                if k >= 0 && frac < 1.0 {
                    visit(row + k as usize, step * (1.0 - frac));
                }
                if k + 1 < g.nx as isize && frac > 0.0 {
                    visit(row + (k + 1) as usize, step * frac);
                }
            }
        }
    }

    pub fn ray_path(&self, view: usize, channel: usize) -> RayPath {
        let mut entries = Vec::new();
        self.trace(view, channel, |k, w| entries.push((k, w)));
        RayPath { entries }
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.grid.nx != self.grid.nx || image.grid.ny != self.grid.ny {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} does not match projector grid {}x{}",
                image.grid.nx, image.grid.ny, self.grid.nx, self.grid.ny
            )));
        }
        Ok(())
    }

    fn check_channel_mask(&self, mask: Option<&[bool]>) -> Result<()> {
        if let Some(m) = mask {
            if m.len() != self.geometry.n_channels() {
                return Err(Error::ShapeMismatch(format!(
                    "channel mask of length {} for {} channels",
                    m.len(),
                    self.geometry.n_channels()
                )));
            }
        }
        Ok(())
    }

    /// `A f` on every virtual channel; unmasked channels are left at zero
    /// when `channels` is given.
    pub fn forward_values(&self, values: &[f64], channels: Option<&[bool]>) -> Vec<f64> {
        let nc = self.geometry.n_channels();
        let mut out = vec![0.0; self.geometry.n_views() * nc];
        out.par_chunks_mut(nc).enumerate().for_each(|(v, row)| {
            for (c, slot) in row.iter_mut().enumerate() {
                if channels.is_some_and(|m| !m[c]) {
                    continue;
                }
                let mut acc = 0.0;
                self.trace(v, c, |k, w| acc += w * values[k]);
                *slot = acc;
            }
        });
        out
    }

    /// `A^T p`, restricted to the selected channels.
    pub fn back_values(&self, sino: &[f64], channels: Option<&[bool]>) -> Vec<f64> {
        let nc = self.geometry.n_channels();
        let nv = self.geometry.n_views();
        let n = self.grid.len();
        let partials: Vec<Vec<f64>> = (0..nv.div_ceil(BACKPROJECT_BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; n];
                for v in b * BACKPROJECT_BLOCK..((b + 1) * BACKPROJECT_BLOCK).min(nv) {
                    for c in 0..nc {
                        if channels.is_some_and(|m| !m[c]) {
                            continue;
                        }
                        let p = sino[v * nc + c];
                        if p != 0.0 {
                            self.trace(v, c, |k, w| acc[k] += w * p);
                        }
                    }
                }
                acc
            })
            .collect();
        // fixed block order keeps the sum bitwise reproducible
        let mut out = vec![0.0; n];
        for part in &partials {
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    }

    pub fn forward(&self, image: &Image) -> Result<Sinogram> {
        image.expect_unit(Unit::MuPerMm)?;
        self.check_image(image)?;
        let values = self.forward_values(&image.values, None);
        Sinogram::new(self.geometry.clone(), values, vec![true; self.geometry.n_channels()])
    }

    pub fn back(&self, sinogram: &Sinogram, channels: Option<&[bool]>) -> Result<Image> {
        self.check_channel_mask(channels)?;
        if sinogram.values.len() != self.geometry.n_views() * self.geometry.n_channels() {
            return Err(Error::ShapeMismatch("sinogram does not match projector geometry".into()));
        }
        let values = self.back_values(&sinogram.values, channels);
        Image::new(self.grid, values, Unit::MuPerMm)
    }

    /// `A 1`: the weight sum of every ray (zero on unselected channels).
    pub fn row_sums(&self, channels: Option<&[bool]>) -> Result<Sinogram> {
        self.check_channel_mask(channels)?;
        let ones = vec![1.0; self.grid.len()];
        let values = self.forward_values(&ones, channels);
        Sinogram::new(self.geometry.clone(), values, vec![true; self.geometry.n_channels()])
    }

    /// `A^T 1` over the selected channels.
    pub fn col_sums(&self, channels: Option<&[bool]>) -> Result<Image> {
        self.check_channel_mask(channels)?;
        let ones = vec![1.0; self.geometry.n_views() * self.geometry.n_channels()];
        let values = self.back_values(&ones, channels);
        Image::new(self.grid, values, Unit::MuPerMm)
    }

    /// Projections of one view and their row sums, over the selected channels.
    pub(crate) fn forward_view(
        &self,
        values: &[f64],
        view: usize,
        channels: &[bool],
        proj: &mut [f64],
        rows: &mut [f64],
    ) {
        proj.par_iter_mut().zip(rows.par_iter_mut()).enumerate().for_each(|(c, (p, r))| {
            if !channels[c] {
                *p = 0.0;
                *r = 0.0;
                return;
            }
            let (mut acc, mut wsum) = (0.0, 0.0);
            self.trace(view, c, |k, w| {
                acc += w * values[k];
                wsum += w;
            });
            *p = acc;
            *r = wsum;
        });
    }

    /// Accumulates `A_v^T resid` into `num` and `A_v^T 1` into `den` for one view.
    pub(crate) fn back_view(&self, view: usize, channels: &[bool], resid: &[f64], num: &mut [f64], den: &mut [f64]) {
        for (c, &r) in resid.iter().enumerate() {
            if !channels[c] {
                continue;
            }
            self.trace(view, c, |k, w| {
                num[k] += w * r;
                den[k] += w;
            });
        }
    }
}

/// Range of march indices `0..n_major` for which `a + b * i` can fall in
/// `(-1, n_minor)`.
fn index_window(a: f64, b: f64, n_minor: usize, n_major: usize) -> (usize, usize) {
    if b == 0.0 {
        return if a > -1.0 && a < n_minor as f64 { (0, n_major) } else { (0, 0) };
    }
    let t0 = (-1.0 - a) / b;
    let t1 = (n_minor as f64 - a) / b;
    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
    let lo = lo.floor().max(0.0);
    let hi = (hi.ceil() + 1.0).min(n_major as f64);
    if hi <= lo {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

/// Line integrals of an attenuation image over the full virtual detector.
pub fn forward_project(image: &Image, geometry: &FanBeamGeometry) -> Result<Sinogram> {
    Projector::new(geometry, &image.grid)?.forward(image)
}

/// Transpose of [`forward_project`] onto `grid`, optionally restricted to a
/// subset of channels.
pub fn back_project(sinogram: &Sinogram, grid: &ImageGrid, channel_mask: Option<&[bool]>) -> Result<Image> {
    Projector::new(&sinogram.geometry, grid)?.back(sinogram, channel_mask)
}

pub fn row_sums(geometry: &FanBeamGeometry, grid: &ImageGrid, channel_mask: Option<&[bool]>) -> Result<Sinogram> {
    Projector::new(geometry, grid)?.row_sums(channel_mask)
}

pub fn col_sums(geometry: &FanBeamGeometry, grid: &ImageGrid, channel_mask: Option<&[bool]>) -> Result<Image> {
    Projector::new(geometry, grid)?.col_sums(channel_mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (FanBeamGeometry, ImageGrid) {
        let geometry = FanBeamGeometry::new(200.0, 100.0, 24, 40, 1.5, 60).unwrap();
        let grid = ImageGrid::new(32, 32, 1.0, 1.0).unwrap();
        (geometry, grid)
    }

    #[test]
    fn zero_in_zero_out() {
        let (geometry, grid) = small();
        let p = forward_project(&Image::zeros(grid, Unit::MuPerMm), &geometry).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        let b = back_project(&Sinogram::zeros(&geometry), &grid, None).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_is_linear() {
        let (geometry, grid) = small();
        let values: Vec<f64> = (0..grid.len()).map(|k| ((k * 37) % 11) as f64 * 0.01).collect();
        let img = Image::new(grid, values.clone(), Unit::MuPerMm).unwrap();
        let scaled = Image::new(grid, values.iter().map(|v| 3.0 * v).collect(), Unit::MuPerMm).unwrap();
        let p = forward_project(&img, &geometry).unwrap();
        let q = forward_project(&scaled, &geometry).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_source_inside_grid() {
        let geometry = FanBeamGeometry::new(200.0, 100.0, 8, 10, 1.0, 10).unwrap();
        let grid = ImageGrid::new(256, 256, 1.0, 1.0).unwrap();
        assert!(matches!(Projector::new(&geometry, &grid), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn rejects_hu_input_and_bad_mask() {
        let (geometry, grid) = small();
        assert!(forward_project(&Image::zeros(grid, Unit::Hu), &geometry).is_err());
        let s = Sinogram::zeros(&geometry);
        assert!(matches!(back_project(&s, &grid, Some(&[true; 3])), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn full_mask_matches_unmasked() {
        let (geometry, grid) = small();
        let mut s = Sinogram::zeros(&geometry);
        for (k, v) in s.values.iter_mut().enumerate() {
            *v = (k % 7) as f64;
        }
        let all = vec![true; geometry.n_channels()];
        let a = back_project(&s, &grid, None).unwrap();
        let b = back_project(&s, &grid, Some(&all)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn ray_weights_follow_chord_through_grid() {
        let (geometry, grid) = small();
        let proj = Projector::new(&geometry, &grid).unwrap();
        // central ray of view 0 runs along x through the whole grid
        let path = proj.ray_path(0, 29);
        assert!(path.entries.iter().all(|&(_, w)| w >= 0.0));
        let total = path.total_weight();
        assert!((total - 32.0).abs() / 32.0 < 0.02, "{total}");
    }

    #[test]
    fn uncovered_pixels_have_zero_column_sum() {
        // only the central channel is used, so off-axis corners see nothing
        let (geometry, grid) = small();
        let mut mask = vec![false; geometry.n_channels()];
        mask[30] = true;
        let cs = col_sums(&geometry, &grid, Some(&mask)).unwrap();
        assert!(cs.values.iter().any(|&v| v == 0.0));
        assert!(cs.values.iter().any(|&v| v > 0.0));
        let rs = row_sums(&geometry, &grid, Some(&vec![false; geometry.n_channels()])).unwrap();
        assert!(rs.values.iter().all(|&v| v == 0.0));
    }
}
