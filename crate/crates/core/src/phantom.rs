//! Analytic ellipse phantoms: rasterization, closed-form projections and
//! randomized anatomy for simulation studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{FanBeamGeometry, ImageGrid};
use crate::image::{Image, Unit, MU_WATER};
use crate::sinogram::Sinogram;

pub const BACKGROUND_HU: f64 = -1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Center in mm.
    pub center: (f64, f64),
    /// Semi-axes `(a, b)` in mm, `a` along the rotated x axis.
    pub semi_axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    /// Additive HU contribution inside the ellipse.
    pub delta_hu: f64,
}

impl Ellipse {
    pub fn circle(center: (f64, f64), radius: f64, delta_hu: f64) -> Self {
        Ellipse { center, semi_axes: (radius, radius), rotation: 0.0, delta_hu }
    }

    /// Attenuation added inside the ellipse, in 1/mm.
    pub fn mu(&self) -> f64 {
        MU_WATER * self.delta_hu / 1000.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.to_unit_frame(x, y);
        u * u + v * v <= 1.0
    }

    #[inline]
    fn to_unit_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        ((c * dx + s * dy) / self.semi_axes.0, (-s * dx + c * dy) / self.semi_axes.1)
    }

    #[inline]
    fn dir_to_unit_frame(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        ((c * dx + s * dy) / self.semi_axes.0, (-s * dx + c * dy) / self.semi_axes.1)
    }

    /// Parameters `t0 <= t1` where the line `origin + t * dir` crosses the boundary.
    pub fn intersect(&self, origin: (f64, f64), dir: (f64, f64)) -> Option<(f64, f64)> {
        let (px, py) = self.to_unit_frame(origin.0, origin.1);
        let (qx, qy) = self.dir_to_unit_frame(dir.0, dir.1);
        let a = qx * qx + qy * qy;
        let b = px * qx + py * qy;
        let c = px * px + py * py - 1.0;
        let disc = b * b - a * c;
        if disc <= 0.0 || a == 0.0 {
            return None;
        }
        let root = disc.sqrt();
        Some(((-b - root) / a, (-b + root) / a))
    }

    /// Length of the chord cut by the line through `origin` along `dir`.
    pub fn chord(&self, origin: (f64, f64), dir: (f64, f64)) -> f64 {
        match self.intersect(origin, dir) {
            Some((t0, t1)) => (t1 - t0) * dir.0.hypot(dir.1),
            None => 0.0,
        }
    }

    /// Farthest distance of any boundary point from the isocenter (upper bound).
    pub fn reach(&self) -> f64 {
        self.center.0.hypot(self.center.1) + self.semi_axes.0.max(self.semi_axes.1)
    }

    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (a, b) = self.semi_axes;
        ((a * a * c * c + b * b * s * s).sqrt(), (a * a * s * s + b * b * c * c).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsePhantom {
    pub ellipses: Vec<Ellipse>,
    #[serde(default = "default_background")]
    pub background_hu: f64,
}

fn default_background() -> f64 {
    BACKGROUND_HU
}

impl Default for EllipsePhantom {
    fn default() -> Self {
        EllipsePhantom { ellipses: Vec::new(), background_hu: BACKGROUND_HU }
    }
}

impl EllipsePhantom {
    pub fn new(ellipses: Vec<Ellipse>) -> Self {
        EllipsePhantom { ellipses, background_hu: BACKGROUND_HU }
    }

    /// Analytic HU value at a point.
    pub fn hu_at(&self, x: f64, y: f64) -> f64 {
        self.ellipses.iter().filter(|e| e.contains(x, y)).fold(self.background_hu, |acc, e| acc + e.delta_hu)
    }

    /// Largest distance from the isocenter reached by any ellipse.
    pub fn reach(&self) -> f64 {
        self.ellipses.iter().map(Ellipse::reach).fold(0.0, f64::max)
    }

    /// Line integral of attenuation along `origin + t * dir`.
    pub fn line_integral(&self, origin: (f64, f64), dir: (f64, f64)) -> f64 {
        self.ellipses.iter().map(|e| e.mu() * e.chord(origin, dir)).sum()
    }

    /// Copy of the phantom translated by `(dx, dy)` mm.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.ellipses {
            e.center.0 += dx;
            e.center.1 += dy;
        }
        out
    }
}

/// Point-sampled HU image of the phantom.
pub fn rasterize(phantom: &EllipsePhantom, grid: &ImageGrid) -> Image {
    let values = (0..grid.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..grid.nx).map(move |i| {
                let (x, y) = grid.world(i, j);
                phantom.hu_at(x, y)
            })
        })
        .collect();
    Image { grid: *grid, values, unit: Unit::Hu }
}

/// Closed-form fan-beam projections on the full virtual detector.
pub fn analytic_sinogram(phantom: &EllipsePhantom, geometry: &FanBeamGeometry) -> Sinogram {
    let nc = geometry.n_channels();
    let values = (0..geometry.n_views())
        .into_par_iter()
        .flat_map_iter(|v| {
            let src = geometry.source(v);
            (0..nc).map(move |c| {
                let det = geometry.detector_point(v, c);
                phantom.line_integral(src, (det.0 - src.0, det.1 - src.1))
            })
        })
        .collect();
    Sinogram { geometry: geometry.clone(), values, measured_mask: vec![true; nc] }
}

/// Extents that random phantoms must respect.
#[derive(Clone, Copy, Debug)]
pub struct PhantomBounds {
    /// Radius of the physical field of view in mm.
    pub r_fov: f64,
    /// Radius of the extended (virtual detector) field of view in mm.
    pub r_ext: f64,
    /// Half side length of the square reconstruction grid in mm.
    pub half_extent: f64,
}

impl Default for PhantomBounds {
    /// Reference geometry with a 256 x 256 grid of 1.25 mm pixels.
    fn default() -> Self {
        let g = FanBeamGeometry::table1();
        PhantomBounds { r_fov: g.fov_radius(false), r_ext: g.fov_radius(true), half_extent: 0.5 * 256.0 * 1.25 }
    }
}

impl PhantomBounds {
    pub fn for_setup(geometry: &FanBeamGeometry, grid: &ImageGrid) -> Self {
        PhantomBounds {
            r_fov: geometry.fov_radius(false),
            r_ext: geometry.fov_radius(true),
            half_extent: 0.5 * (grid.nx as f64 * grid.dx).min(grid.ny as f64 * grid.dy),
        }
    }
}

/// Random body phantom with the reference bounds.
pub fn sample_phantom(seed: u64, truncating: bool) -> EllipsePhantom {
    sample_phantom_in(seed, truncating, &PhantomBounds::default())
}

/// Random water-like body with 3 to 8 interior features. When `truncating`,
/// the body reaches past the physical field of view and two arms are attached
/// to its sides; otherwise everything stays inside the field of view.
pub fn sample_phantom_in(seed: u64, truncating: bool, bounds: &PhantomBounds) -> EllipsePhantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep a margin to the grid edge so rasterization sees the whole object
    let limit = (bounds.half_extent - 6.0).min(bounds.r_ext / std::f64::consts::SQRT_2);
    let r_fov = bounds.r_fov;

    let body = if truncating {
        let rotation = rng.random_range(-0.15..0.15);
        let center = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let a = rng.random_range(1.0 * r_fov..1.06 * r_fov);
        let b = rng.random_range(0.98 * r_fov..1.04 * r_fov);
        let mut e = Ellipse { center, semi_axes: (a, b), rotation, delta_hu: 1000.0 };
        shrink_to_fit(&mut e, limit);
        e
    } else {
        let rotation = rng.random_range(-0.5..0.5);
        let a = rng.random_range(0.75 * r_fov..0.9 * r_fov);
        let b = rng.random_range(0.55 * r_fov..0.75 * r_fov);
        let center = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let mut e = Ellipse { center, semi_axes: (a, b), rotation, delta_hu: 1000.0 };
        let excess = e.reach() - 0.95 * r_fov;
        if excess > 0.0 {
            e.semi_axes.0 -= excess;
            e.semi_axes.1 = e.semi_axes.1.min(e.semi_axes.0);
        }
        e
    };

    let mut ellipses = vec![body.clone()];
    let n_features = rng.random_range(3..=8);
    let inner = body.semi_axes.0.min(body.semi_axes.1);
    for _ in 0..n_features {
        let kind: f64 = rng.random();
        let delta_hu: f64 = if kind < 0.3 {
            rng.random_range(-850.0..-700.0)
        } else if kind < 0.7 {
            rng.random_range(-100.0..100.0)
        } else {
            rng.random_range(400.0..1200.0)
        };
        let sa = rng.random_range(8.0..(0.25 * inner).max(9.0));
        let sb = rng.random_range(8.0..(0.25 * inner).max(9.0));
        let rho = rng.random_range(0.0..(0.9 - sa.max(sb) / inner).max(0.0));
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        // place in the body's normalized frame so the feature stays inside it
        let (u, v) = (rho * phi.cos() * body.semi_axes.0, rho * phi.sin() * body.semi_axes.1);
        let (s, c) = body.rotation.sin_cos();
        let center = (body.center.0 + c * u - s * v, body.center.1 + s * u + c * v);
        ellipses.push(Ellipse {
            center,
            semi_axes: (sa, sb),
            rotation: rng.random_range(0.0..std::f64::consts::PI),
            delta_hu: delta_hu.round(),
        });
    }

    if truncating {
        // arms sit on the diagonals, where the square grid reaches furthest
        for side in [-1.0f64, 1.0] {
            let radial = rng.random_range(12.0..18.0);
            let tangential = rng.random_range(20.0..32.0);
            let elevation: f64 = rng.random_range(30f64.to_radians()..60f64.to_radians());
            let phi = if side > 0.0 { -elevation } else { std::f64::consts::PI + elevation };
            let dir = (phi.cos(), phi.sin());
            let edge = body.intersect(body.center, dir).map(|(_, t1)| t1).unwrap_or(r_fov);
            // overlap the body so arm and trunk form one connected region
            let mut dist = edge + 0.6 * radial;
            let mut arm = Ellipse {
                center: (0.0, 0.0),
                semi_axes: (radial, tangential),
                rotation: phi,
                delta_hu: rng.random_range(1000.0..1060.0f64).round(),
            };
            loop {
                arm.center = (body.center.0 + dist * dir.0, body.center.1 + dist * dir.1);
                let (hx, hy) = arm.half_extents();
                if (arm.center.0.abs() + hx <= limit && arm.center.1.abs() + hy <= limit) || dist <= edge {
                    break;
                }
                dist -= 0.5;
            }
            ellipses.push(arm);
        }
    }
    EllipsePhantom::new(ellipses)
}

fn shrink_to_fit(e: &mut Ellipse, limit: f64) {
    for _ in 0..64 {
        let (hx, hy) = e.half_extents();
        if e.center.0.abs() + hx <= limit && e.center.1.abs() + hy <= limit {
            return;
        }
        e.semi_axes.0 *= 0.99;
        e.semi_axes.1 = e.semi_axes.1.min(e.semi_axes.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_phantom_is_air() {
        let grid = ImageGrid::new(8, 8, 1.0, 1.0).unwrap();
        let img = rasterize(&EllipsePhantom::default(), &grid);
        assert!(img.values.iter().all(|&v| v == -1000.0));
    }

    #[test]
    fn water_circle_and_nesting() {
        let grid = ImageGrid::new(9, 9, 1.0, 1.0).unwrap();
        let ph = EllipsePhantom::new(vec![
            Ellipse::circle((0.0, 0.0), 3.0, 1000.0),
            Ellipse::circle((0.0, 0.0), 1.0, 250.0),
        ]);
        let img = rasterize(&ph, &grid);
        assert_eq!(img.at(4, 4), 250.0);
        assert_eq!(img.at(6, 4), 0.0);
        assert_eq!(img.at(0, 0), -1000.0);
    }

    #[test]
    fn chord_lengths() {
        let e = Ellipse::circle((0.0, 0.0), 50.0, 1000.0);
        let ph = EllipsePhantom::new(vec![e]);
        assert!((ph.line_integral((-600.0, 0.0), (1.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!((ph.line_integral((-600.0, 30.0), (2.0, 0.0)) - 1.6).abs() < 1e-12);
        assert_eq!(ph.line_integral((-600.0, 60.0), (1.0, 0.0)), 0.0);
    }

    #[test]
    fn rotated_ellipse_chord() {
        // a 2:1 ellipse rotated by 90 degrees presents its long axis along y
        let e = Ellipse {
            center: (5.0, -3.0),
            semi_axes: (40.0, 20.0),
            rotation: std::f64::consts::FRAC_PI_2,
            delta_hu: 1000.0,
        };
        assert!((e.chord((5.0, -300.0), (0.0, 1.0)) - 80.0).abs() < 1e-9);
        assert!((e.chord((-300.0, -3.0), (1.0, 0.0)) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_phantom(17, true), sample_phantom(17, true));
        assert_ne!(sample_phantom(17, true), sample_phantom(18, true));
    }

    #[test]
    fn truncating_phantoms_leave_the_fov() {
        let b = PhantomBounds::default();
        for seed in 0..50 {
            let ph = sample_phantom(seed, true);
            assert!(ph.ellipses.iter().any(|e| e.reach() > b.r_fov), "seed {seed}");
            assert!(ph.reach() < b.r_ext, "seed {seed}");
            assert!((6..=11).contains(&ph.ellipses.len()));
            for e in &ph.ellipses {
                let (hx, hy) = e.half_extents();
                assert!(e.center.0.abs() + hx <= b.half_extent && e.center.1.abs() + hy <= b.half_extent);
            }
        }
    }

    #[test]
    fn untruncated_phantoms_stay_inside_fov() {
        let b = PhantomBounds::default();
        for seed in 0..50 {
            let ph = sample_phantom(seed, false);
            assert!(ph.ellipses.iter().all(|e| e.reach() <= b.r_fov), "seed {seed}");
        }
    }

    #[test]
    fn json_round_trip() {
        let ph = sample_phantom(3, true);
        let text = serde_json::to_string(&ph).unwrap();
        let back: EllipsePhantom = serde_json::from_str(&text).unwrap();
        assert_eq!(ph, back);
    }
}
