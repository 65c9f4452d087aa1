mod common;

use common::*;
use dcr::fbp::fbp_reconstruct;
use dcr::metrics::rmse;
use dcr::phantom::{analytic_sinogram, rasterize, sample_phantom_in, PhantomBounds};
use dcr::prior::SurrogatePrior;
use dcr::projector::{forward_project, Projector};
use dcr::recon::{
    data_residual, dcr_reconstruct_traced, merge_sinograms, sart_sweep, tv_weights, wtv_gradient, wtv_objective,
    wtv_reconstruct, wtv_reconstruct_traced, ChannelSet, ReconConfig, TVWeights,
};
use dcr::simulate::{add_poisson_noise, truncate, NoiseModel};
use dcr::{fov_mask, FanBeamGeometry, Image, ImageGrid, Unit};
use proptest::prelude::*;

#[test]
fn sart_residual_decreases_every_sweep() {
    let geometry = FanBeamGeometry::new(200.0, 100.0, 24, 40, 1.5, 60).unwrap();
    let grid = ImageGrid::new(16, 16, 1.0, 1.0).unwrap();
    let a = dense_matrix(&geometry, &grid);
    let truth: Vec<f64> = random_vec(grid.len(), 21).iter().map(|v| 0.02 * (1.0 + v)).collect();
    let p: Vec<f64> = a.iter().map(|row| dot(row, &truth)).collect();
    let mut sino = forward_project(&Image::new(grid, truth, Unit::MuPerMm).unwrap(), &geometry).unwrap();
    sino.values.copy_from_slice(&p);
    let residual = |f: &Image| a.iter().zip(&p).map(|(row, pr)| (dot(row, &f.values) - pr).powi(2)).sum::<f64>().sqrt();
    let mut f = Image::zeros(grid, Unit::MuPerMm);
    let mut last = residual(&f);
    for sweep in 0..5 {
        f = sart_sweep(&f, &sino, ChannelSet::All, 0.8).unwrap();
        let r = residual(&f);
        assert!(r < last, "sweep {sweep}: {r} !< {last}");
        last = r;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]
    #[test]
    fn wtv_gradient_matches_finite_differences(seed in any::<u64>()) {
        let grid = ImageGrid::new(8, 8, 1.0, 1.0).unwrap();
        let f = Image::new(grid, random_vec(64, seed).iter().map(|v| 800.0 * v).collect(), Unit::Hu).unwrap();
        let w = TVWeights { grid, values: random_vec(64, seed ^ 1).iter().map(|v| 0.1 + 0.1 * v.abs()).collect() };
        let delta = 1e-3 * f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = wtv_gradient(&f, &w, delta).unwrap();
        let dir = random_vec(64, seed ^ 2);
        let h = 1e-4;
        let shifted = |s: f64| -> Vec<f64> { f.values.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
        let fd = (wtv_objective(&shifted(h), &grid, &w, delta) - wtv_objective(&shifted(-h), &grid, &w, delta)) / (2.0 * h);
        let an = dot(&g.values, &dir);
        prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(fd.abs()), "fd {} vs analytic {}", fd, an);
    }
}

#[test]
fn hand_built_weights() {
    let grid = ImageGrid::new(4, 3, 1.0, 1.0).unwrap();
    // Columns 0-1 at 0 HU, columns 2-3 at 100 HU; the edge pixel is column 1.
    let img = Image::new(grid, (0..12).map(|k| if k % 4 >= 2 { 100.0 } else { 0.0 }).collect(), Unit::Hu).unwrap();
    let w = tv_weights(&img, 5.0).unwrap();
    for j in 0..3 {
        assert_eq!(w.values[j * 4 + 1], 1.0 / 105.0);
        assert_eq!(w.values[j * 4], 0.2);
        assert_eq!(w.values[j * 4 + 3], 0.2);
    }
}

fn noisy_case(seed: u64, truncating: bool) -> (FanBeamGeometry, ImageGrid, Image, dcr::Sinogram) {
    let (geometry, grid) = medium_setup();
    let phantom = sample_phantom_in(seed, truncating, &PhantomBounds::for_setup(&geometry, &grid));
    let truth = rasterize(&phantom, &grid);
    let full = analytic_sinogram(&phantom, &geometry);
    let sino = if truncating { truncate(&full) } else { full };
    let measured = add_poisson_noise(&sino, &NoiseModel::new(1e5, seed).unwrap()).unwrap();
    (geometry, grid, truth, measured)
}

#[test]
fn merge_follows_prior_projection_exactly() {
    let (geometry, grid, truth, measured) = noisy_case(3, true);
    let prior = SurrogatePrior::default().degrade(&truth, 3).unwrap();
    let merged = merge_sinograms(&measured, &prior).unwrap();
    let projected = forward_project(&prior.hu_to_mu().unwrap(), &geometry).unwrap();
    let nc = geometry.n_channels();
    for k in 0..merged.values.len() {
        if measured.measured_mask[k % nc] {
            assert_eq!(merged.values[k].to_bits(), measured.values[k].to_bits());
        } else {
            assert_eq!(merged.values[k], projected.values[k]);
        }
    }
    assert_eq!(merged.measured_mask, measured.measured_mask);

    let air = merge_sinograms(&measured, &Image::filled(grid, -1000.0, Unit::Hu)).unwrap();
    assert!((0..air.values.len()).filter(|k| !measured.measured_mask[k % nc]).all(|k| air.values[k] == 0.0));
}

#[test]
fn merge_with_true_prior_recovers_full_sinogram() {
    let (geometry, grid) = medium_setup();
    let phantom = sample_phantom_in(5, true, &PhantomBounds::for_setup(&geometry, &grid));
    let full = analytic_sinogram(&phantom, &geometry);
    let merged = merge_sinograms(&truncate(&full), &rasterize(&phantom, &grid)).unwrap();
    assert!(rel_diff(&merged.values, &full.values) < 0.01);
}

#[test]
fn dcr_is_stable_with_a_perfect_prior() {
    let (geometry, grid) = medium_setup();
    let phantom = sample_phantom_in(8, true, &PhantomBounds::for_setup(&geometry, &grid));
    let truth = rasterize(&phantom, &grid);
    let measured = truncate(&analytic_sinogram(&phantom, &geometry));
    let (out, diag) = dcr_reconstruct_traced(&measured, &truth, &ReconConfig::default()).unwrap();
    let all = dcr::Mask::new(grid, vec![true; grid.len()]).unwrap();
    let err = rmse(&out, &truth, &all).unwrap();
    assert!(err <= 5.0, "{err}");
    assert!(diag.tv_monotone());
}

#[test]
fn dcr_improves_data_consistency_of_an_imperfect_prior() {
    let (_, _, truth, measured) = noisy_case(9, true);
    let prior = SurrogatePrior::default().degrade(&truth, 9).unwrap();
    let (out, diag) = dcr_reconstruct_traced(&measured, &prior, &ReconConfig::default()).unwrap();
    let before = data_residual(&prior, &measured, ChannelSet::Measured).unwrap();
    let after = data_residual(&out, &measured, ChannelSet::Measured).unwrap();
    assert!(after < before, "{after} !< {before}");
    assert_eq!(diag.iterations.len(), 10);
    assert!(diag.tv_monotone());
}

#[test]
fn wtv_without_iterations_is_empty() {
    let (_, grid, _, measured) = noisy_case(1, false);
    let out = wtv_reconstruct(&measured, &grid, &ReconConfig { n_outer: 0, ..ReconConfig::default() }).unwrap();
    assert!(out.to_unit(Unit::MuPerMm).values.iter().all(|&v| v == 0.0));
}

#[test]
fn wtv_beats_fbp_on_noiseless_complete_data() {
    let (geometry, grid) = medium_setup();
    let phantom = sample_phantom_in(12, false, &PhantomBounds::for_setup(&geometry, &grid));
    let truth = rasterize(&phantom, &grid);
    let sino = analytic_sinogram(&phantom, &geometry);
    let fov = fov_mask(&geometry, &grid, false);
    let fbp = rmse(&fbp_reconstruct(&sino, &grid).unwrap(), &truth, &fov).unwrap();
    let wtv = rmse(&wtv_reconstruct(&sino, &grid, &ReconConfig::default()).unwrap(), &truth, &fov).unwrap();
    assert!(wtv < fbp, "wtv {wtv} vs fbp {fbp}");
}

#[test]
fn wtv_reduces_noise() {
    let (_, grid, _, measured) = noisy_case(2, false);
    let fbp = fbp_reconstruct(&measured, &grid).unwrap();
    let (wtv, diag) = wtv_reconstruct_traced(&measured, &grid, &ReconConfig::default()).unwrap();
    assert!(wtv.total_variation() < fbp.total_variation());
    assert!(diag.tv_monotone());
}

#[test]
fn reconstruction_is_bitwise_deterministic() {
    let (_, _, truth, measured) = noisy_case(4, true);
    let prior = SurrogatePrior::default().degrade(&truth, 4).unwrap();
    let cfg = ReconConfig { n_outer: 3, ..ReconConfig::default() };
    let (a, _) = dcr_reconstruct_traced(&measured, &prior, &cfg).unwrap();
    let (b, _) = dcr_reconstruct_traced(&measured, &prior, &cfg).unwrap();
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn projector_rejects_mismatched_prior_grid() {
    let (_, _, _, measured) = noisy_case(1, true);
    let huge = ImageGrid::new(1024, 1024, 1.25, 1.25).unwrap();
    assert!(merge_sinograms(&measured, &Image::zeros(huge, Unit::Hu)).is_err());
    assert!(Projector::new(&measured.geometry, &huge).is_err());
}

/// Same comparison with data generated from the pixel model itself and no
/// noise tolerance on the measured residual, as befits noiseless data.
#[test]
fn wtv_beats_fbp_on_pixel_consistent_data() {
    let (geometry, grid) = medium_setup();
    let phantom = sample_phantom_in(12, false, &PhantomBounds::for_setup(&geometry, &grid));
    let truth = rasterize(&phantom, &grid);
    let sino = forward_project(&truth.to_unit(Unit::MuPerMm), &geometry).unwrap();
    let fov = fov_mask(&geometry, &grid, false);
    let cfg = ReconConfig { e1: 0.0, ..ReconConfig::default() };
    let fbp = rmse(&fbp_reconstruct(&sino, &grid).unwrap(), &truth, &fov).unwrap();
    let wtv = rmse(&wtv_reconstruct(&sino, &grid, &cfg).unwrap(), &truth, &fov).unwrap();
    assert!(wtv < 0.5 * fbp, "wtv {wtv} vs fbp {fbp}");
}
