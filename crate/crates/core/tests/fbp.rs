mod common;

use common::*;
use dcr::fbp::{fbp_reconstruct, fbp_reconstruct_mu};
use dcr::geometry::ring_mask;
use dcr::metrics::rmse;
use dcr::phantom::{analytic_sinogram, rasterize, sample_phantom_in, Ellipse, EllipsePhantom, PhantomBounds};
use dcr::simulate::truncate;
use dcr::{fov_mask, FanBeamGeometry, Image, ImageGrid, Mask, Sinogram};

#[test]
fn water_cylinder_reconstructs_within_25_hu() {
    let geometry = FanBeamGeometry::table1();
    let grid = ImageGrid::new(256, 256, 1.25, 1.25).unwrap();
    let phantom = EllipsePhantom::new(vec![Ellipse::circle((0.0, 0.0), 130.0, 1000.0)]);
    let truth = rasterize(&phantom, &grid);
    let sino = analytic_sinogram(&phantom, &geometry);
    assert!(!truncate(&sino).values.iter().zip(&sino.values).any(|(a, b)| a != b), "phantom must not be truncated");
    let img = fbp_reconstruct(&sino, &grid).unwrap();
    let inner = Mask::from_fn(grid, |x, y| x.hypot(y) <= 0.8 * geometry.fov_radius(false));
    let err = rmse(&img, &truth, &inner).unwrap();
    assert!(err < 25.0, "{err}");
}

#[test]
fn reconstruction_is_linear() {
    let (geometry, grid) = small_setup();
    let n = geometry.n_views() * geometry.n_channels();
    let (p1, p2) = (random_vec(n, 1), random_vec(n, 2));
    let (alpha, beta) = (1.7, -0.4);
    let sino = |v: Vec<f64>| {
        let mut s = Sinogram::zeros(&geometry);
        s.values = v;
        s
    };
    let combo: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| alpha * a + beta * b).collect();
    let f1 = fbp_reconstruct_mu(&sino(p1), &grid).unwrap();
    let f2 = fbp_reconstruct_mu(&sino(p2), &grid).unwrap();
    let f = fbp_reconstruct_mu(&sino(combo), &grid).unwrap();
    let expect: Vec<f64> = f1.values.iter().zip(&f2.values).map(|(a, b)| alpha * a + beta * b).collect();
    assert!(rel_diff(&f.values, &expect) < 1e-10);
}

/// Integer shift `(di, dj)` maximizing the cross-correlation of `b` against `a`.
fn correlation_peak(a: &Image, b: &Image, max_shift: isize) -> (isize, isize) {
    let (nx, ny) = (a.grid.nx as isize, a.grid.ny as isize);
    let mean = |img: &Image| img.values.iter().sum::<f64>() / img.values.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for dj in -max_shift..=max_shift {
        for di in -max_shift..=max_shift {
            let mut s = 0.0;
            for j in 0..ny {
                for i in 0..nx {
                    let (i2, j2) = (i + di, j + dj);
                    if (0..nx).contains(&i2) && (0..ny).contains(&j2) {
                        s += (a.at(i as usize, j as usize) - ma) * (b.at(i2 as usize, j2 as usize) - mb);
                    }
                }
            }
            if s > best.0 {
                best = (s, (di, dj));
            }
        }
    }
    best.1
}

#[test]
fn shifted_object_reconstructs_shifted() {
    let (geometry, grid) = medium_setup();
    let bounds = PhantomBounds::for_setup(&geometry, &grid);
    let phantom = sample_phantom_in(11, false, &bounds);
    let (si, sj) = (3, -2);
    let shifted = phantom.shifted(si as f64 * grid.dx, sj as f64 * grid.dy);
    let a = fbp_reconstruct(&analytic_sinogram(&phantom, &geometry), &grid).unwrap();
    let b = fbp_reconstruct(&analytic_sinogram(&shifted, &geometry), &grid).unwrap();
    assert_eq!(correlation_peak(&a, &b, 6), (si, sj));
}

#[test]
fn truncation_causes_cupping_near_the_fov_edge() {
    let geometry = FanBeamGeometry::table1();
    let grid = ImageGrid::new(256, 256, 1.25, 1.25).unwrap();
    let phantom = sample_phantom_in(2, true, &PhantomBounds::default());
    let truth = rasterize(&phantom, &grid);
    let img = fbp_reconstruct(&truncate(&analytic_sinogram(&phantom, &geometry)), &grid).unwrap();
    let r = geometry.fov_radius(false);
    let ring = ring_mask(&grid, 0.9 * r, r);
    let excess = img.masked_mean(&ring).unwrap() - truth.masked_mean(&ring).unwrap();
    assert!(excess > 100.0, "{excess}");
    // Away from the edge the error is much smaller than at it.
    let fov = fov_mask(&geometry, &grid, false);
    assert!(rmse(&img, &truth, &fov).unwrap() > 0.0);
}
