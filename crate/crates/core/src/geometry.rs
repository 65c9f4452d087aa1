//! Reconstruction grid, fan-beam acquisition geometry and field-of-view masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular 2-D pixel lattice. Pixel `(i, j)` sits at column `i`, row `j`;
/// world `y` grows with the row index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel spacing along x in mm.
    pub dx: f64,
    /// Pixel spacing along y in mm.
    pub dy: f64,
    /// World position of the grid center in mm.
    pub center: (f64, f64),
}

impl ImageGrid {
    /// Square grid centered on the isocenter.
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::with_center(nx, ny, dx, dy, (0.0, 0.0))
    }

    pub fn with_center(nx: usize, ny: usize, dx: f64, dy: f64, center: (f64, f64)) -> Result<Self> {
        let grid = ImageGrid { nx, ny, dx, dy, center };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidGrid(format!("empty grid {}x{}", self.nx, self.ny)));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) || !self.dx.is_finite() || !self.dy.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing ({}, {}) must be positive", self.dx, self.dy)));
        }
        if !self.center.0.is_finite() || !self.center.1.is_finite() {
            return Err(Error::InvalidGrid("non-finite center".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// World x of the first pixel column center.
    #[inline]
    pub fn x0(&self) -> f64 {
        self.center.0 - 0.5 * (self.nx as f64 - 1.0) * self.dx
    }

    /// World y of the first pixel row center.
    #[inline]
    pub fn y0(&self) -> f64 {
        self.center.1 - 0.5 * (self.ny as f64 - 1.0) * self.dy
    }

    /// World coordinates (mm) of the center of pixel `(i, j)`.
    #[inline]
    pub fn world(&self, i: usize, j: usize) -> (f64, f64) {
        self.world_f(i as f64, j as f64)
    }

    #[inline]
    pub fn world_f(&self, fi: f64, fj: f64) -> (f64, f64) {
        (self.x0() + fi * self.dx, self.y0() + fj * self.dy)
    }

    /// Fractional pixel index of a world position; inverse of [`ImageGrid::world_f`].
    #[inline]
    pub fn to_index(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0()) / self.dx, (y - self.y0()) / self.dy)
    }

    /// Radius of the circle circumscribing the grid's outer pixel edges.
    pub fn half_diagonal(&self) -> f64 {
        let hx = 0.5 * self.nx as f64 * self.dx;
        let hy = 0.5 * self.ny as f64 * self.dy;
        let cx = self.center.0.abs() + hx;
        let cy = self.center.1.abs() + hy;
        cx.hypot(cy)
    }
}

/// Circular fan-beam trajectory with a flat, equispaced detector.
///
/// Sinograms always live on the virtual detector (`n_det_virtual` channels);
/// the physical detector is its central `n_det` channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanBeamGeometry {
    /// Source-to-detector distance in mm.
    pub sdd: f64,
    /// Source-to-isocenter distance in mm.
    pub sid: f64,
    /// View angles in radians, uniform over a full turn.
    pub angles: Vec<f64>,
    pub n_det: usize,
    /// Channel pitch in mm.
    pub det_spacing: f64,
    pub n_det_virtual: usize,
}

impl FanBeamGeometry {
    pub fn new(
        sdd: f64,
        sid: f64,
        n_views: usize,
        n_det: usize,
        det_spacing: f64,
        n_det_virtual: usize,
    ) -> Result<Self> {
        let step = std::f64::consts::TAU / n_views.max(1) as f64;
        let angles = (0..n_views).map(|v| v as f64 * step).collect();
        let g = FanBeamGeometry { sdd, sid, angles, n_det, det_spacing, n_det_virtual };
        g.validate()?;
        Ok(g)
    }

    /// In-plane system of the reference cone-beam scanner: 360 views at 1°,
    /// SDD 1200 mm, SID 600 mm, 600 physical channels of 1 mm, 1000 virtual.
    pub fn table1() -> Self {
        Self::new(1200.0, 600.0, 360, 600, 1.0, 1000).expect("reference geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sid > 0.0 && self.sdd > self.sid) || !self.sdd.is_finite() {
            return Err(Error::InvalidGeometry(format!("need sdd > sid > 0, got sdd={} sid={}", self.sdd, self.sid)));
        }
        if self.angles.is_empty() {
            return Err(Error::InvalidGeometry("no views".into()));
        }
        if self.n_det == 0 || self.n_det_virtual < self.n_det {
            return Err(Error::InvalidGeometry(format!(
                "need 0 < n_det <= n_det_virtual, got {} and {}",
                self.n_det, self.n_det_virtual
            )));
        }
        if !(self.det_spacing > 0.0) || !self.det_spacing.is_finite() {
            return Err(Error::InvalidGeometry("detector spacing must be positive".into()));
        }
        if self.angles.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGeometry("view angles must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.angles.len()
    }

    /// Number of sinogram channels (the virtual detector).
    pub fn n_channels(&self) -> usize {
        self.n_det_virtual
    }

    /// Angular increment between views in radians.
    pub fn angle_step(&self) -> f64 {
        std::f64::consts::TAU / self.n_views() as f64
    }

    /// Detector coordinate (mm) of the center of virtual channel `c`.
    #[inline]
    pub fn channel_u(&self, c: usize) -> f64 {
        (c as f64 - 0.5 * (self.n_det_virtual as f64 - 1.0)) * self.det_spacing
    }

    /// Fractional channel index of detector coordinate `u`.
    #[inline]
    pub fn u_to_channel(&self, u: f64) -> f64 {
        u / self.det_spacing + 0.5 * (self.n_det_virtual as f64 - 1.0)
    }

    /// First virtual channel of the physical detector.
    pub fn first_physical(&self) -> usize {
        (self.n_det_virtual - self.n_det) / 2
    }

    /// `true` for channels that belong to the physical detector.
    pub fn physical_mask(&self) -> Vec<bool> {
        let lo = self.first_physical();
        (0..self.n_det_virtual).map(|c| c >= lo && c < lo + self.n_det).collect()
    }

    /// Radius of the circle seen by every view, for the physical or the
    /// virtual detector.
    pub fn fov_radius(&self, virtual_detector: bool) -> f64 {
        let n = if virtual_detector { self.n_det_virtual } else { self.n_det };
        let half_width = 0.5 * n as f64 * self.det_spacing;
        self.sid * (half_width / self.sdd).atan().sin()
    }

    /// Source position for view `v`.
    #[inline]
    pub fn source(&self, v: usize) -> (f64, f64) {
        let (s, c) = self.angles[v].sin_cos();
        (self.sid * c, self.sid * s)
    }

    /// Unit vector from the isocenter towards the source, and the detector axis.
    #[inline]
    pub fn axes(&self, v: usize) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.angles[v].sin_cos();
        ((c, s), (-s, c))
    }

    /// World position of the center of channel `c` in view `v`.
    #[inline]
    pub fn detector_point(&self, v: usize, c: usize) -> (f64, f64) {
        let ((cx, cy), (ex, ey)) = self.axes(v);
        let back = self.sdd - self.sid;
        let u = self.channel_u(c);
        (-back * cx + u * ex, -back * cy + u * ey)
    }
}

/// Boolean pixel mask on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub grid: ImageGrid,
    pub flags: Vec<bool>,
}

impl Mask {
    pub fn new(grid: ImageGrid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} flags for a {}x{} grid",
                flags.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(Mask { grid, flags })
    }

    pub fn from_fn(grid: ImageGrid, f: impl Fn(f64, f64) -> bool) -> Self {
        let mut flags = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.world(i, j);
                flags.push(f(x, y));
            }
        }
        Mask { grid, flags }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.flags.len() == other.flags.len() && self.flags.iter().zip(&other.flags).all(|(&a, &b)| !a || b)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.flags.len() != other.flags.len() {
            return Err(Error::ShapeMismatch("mask sizes differ".into()));
        }
        let flags = self.flags.iter().zip(&other.flags).map(|(&a, &b)| a && b).collect();
        Ok(Mask { grid: self.grid, flags })
    }
}

/// Pixels whose centers lie inside the field of view of the physical
/// (`virtual_detector = false`) or virtual detector.
pub fn fov_mask(geometry: &FanBeamGeometry, grid: &ImageGrid, virtual_detector: bool) -> Mask {
    let r = geometry.fov_radius(virtual_detector);
    Mask::from_fn(*grid, |x, y| x.hypot(y) <= r)
}

/// Pixels whose centers fall in the annulus `inner < |x| <= outer`.
pub fn ring_mask(grid: &ImageGrid, inner: f64, outer: f64) -> Mask {
    Mask::from_fn(*grid, |x, y| {
        let r = x.hypot(y);
        r > inner && r <= outer
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_fov_radii() {
        let g = FanBeamGeometry::table1();
        assert!((g.fov_radius(false) - 600.0 / 17f64.sqrt()).abs() < 1e-9);
        assert!((g.fov_radius(false) - 145.521).abs() < 1e-3);
        assert!((g.fov_radius(true) - 600.0 * 5.0 / 13.0).abs() < 1e-9);
        assert!((g.fov_radius(true) - 230.769).abs() < 1e-3);
    }

    #[test]
    fn small_grid_is_fully_inside_fov() {
        let g = FanBeamGeometry::table1();
        let grid = ImageGrid::new(64, 64, 1.0, 1.0).unwrap();
        assert_eq!(fov_mask(&g, &grid, false).count(), grid.len());
    }

    #[test]
    fn physical_fov_inside_virtual_fov() {
        let g = FanBeamGeometry::table1();
        let grid = ImageGrid::new(256, 256, 1.25, 1.25).unwrap();
        let inner = fov_mask(&g, &grid, false);
        let outer = fov_mask(&g, &grid, true);
        assert!(inner.is_subset_of(&outer));
        assert!(inner.count() < outer.count());
    }

    #[test]
    fn world_index_round_trip() {
        let grid = ImageGrid::with_center(37, 53, 1.25, 0.7, (3.5, -11.0)).unwrap();
        for &(fi, fj) in &[(0.0, 0.0), (36.0, 52.0), (12.25, 7.5)] {
            let (x, y) = grid.world_f(fi, fj);
            let (bi, bj) = grid.to_index(x, y);
            let (x2, y2) = grid.world_f(bi, bj);
            assert!((x - x2).abs() < 1e-12 && (y - y2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(FanBeamGeometry::new(500.0, 600.0, 10, 10, 1.0, 10).is_err());
        assert!(FanBeamGeometry::new(1200.0, 600.0, 10, 20, 1.0, 10).is_err());
        assert!(ImageGrid::new(0, 4, 1.0, 1.0).is_err());
        assert!(ImageGrid::new(4, 4, -1.0, 1.0).is_err());
    }

    #[test]
    fn physical_channels_are_centered() {
        let g = FanBeamGeometry::table1();
        let m = g.physical_mask();
        assert_eq!(m.iter().filter(|&&b| b).count(), 600);
        assert!(m[200] && m[799] && !m[199] && !m[800]);
        assert!((g.channel_u(0) + g.channel_u(999)).abs() < 1e-12);
    }
}
