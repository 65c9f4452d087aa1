#![allow(dead_code)]

use dcr::projector::forward_project;
use dcr::{FanBeamGeometry, Image, ImageGrid, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32×32 grid with a 24-view fan whose virtual detector covers the grid.
pub fn small_setup() -> (FanBeamGeometry, ImageGrid) {
    let geometry = FanBeamGeometry::new(200.0, 100.0, 24, 40, 1.5, 60).unwrap();
    let grid = ImageGrid::new(32, 32, 1.0, 1.0).unwrap();
    (geometry, grid)
}

/// Reference geometry scaled down to a 128² grid and 180 views.
pub fn medium_setup() -> (FanBeamGeometry, ImageGrid) {
    let geometry = FanBeamGeometry::new(1200.0, 600.0, 180, 300, 2.0, 500).unwrap();
    let grid = ImageGrid::new(128, 128, 2.5, 2.5).unwrap();
    (geometry, grid)
}

/// Dense system matrix, one column per pixel, built by projecting unit images.
/// Row-major `[n_rays][n_pixels]`.
pub fn dense_matrix(geometry: &FanBeamGeometry, grid: &ImageGrid) -> Vec<Vec<f64>> {
    let n_rays = geometry.n_views() * geometry.n_channels();
    let mut a = vec![vec![0.0; grid.len()]; n_rays];
    for k in 0..grid.len() {
        let mut e = Image::zeros(*grid, Unit::MuPerMm);
        e.values[k] = 1.0;
        let col = forward_project(&e, geometry).unwrap();
        for (r, &v) in col.values.iter().enumerate() {
            a[r][k] = v;
        }
    }
    a
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
