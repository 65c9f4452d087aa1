//! Prior-based sinogram completion and the tolerance-gated SART + wTV loop.

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::image::{hu_to_mu_value, mu_to_hu_value, Image, Unit};
use crate::projector::Projector;
use crate::sinogram::Sinogram;

use super::sart::{relative_residual, sart_pass, ChannelSet};
use super::tv::{tv_descent, weights_from_values, DescentTrace};
use super::ReconConfig;

/// Measured channels kept as-is; unmeasured channels replaced by the forward
/// projection of `prior`.
pub fn merge_sinograms(measured: &Sinogram, prior: &Image) -> Result<Sinogram> {
    let proj = Projector::new(&measured.geometry, &prior.grid)?;
    let mu = prior.to_unit(Unit::MuPerMm);
    let truncated = ChannelSet::Truncated.select(measured);
    let mut out = measured.clone();
    if !truncated.iter().any(|&t| t) {
        return Ok(out);
    }
    let estimate = proj.forward_values(&mu.values, Some(&truncated));
    let nc = measured.n_channels();
    for (k, (o, e)) in out.values.iter_mut().zip(estimate).enumerate() {
        if truncated[k % nc] {
            *o = e;
        }
    }
    Ok(out)
}

/// What happened in one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterIteration {
    /// Relative measured-channel residual before the data step.
    pub measured_residual: f64,
    /// Relative residual on prior-filled channels, when they are used.
    pub truncated_residual: Option<f64>,
    pub measured_sweep: bool,
    pub truncated_sweep: bool,
    /// Frozen-weight objective through the TV descent.
    pub tv: DescentTrace,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconDiagnostics {
    pub iterations: Vec<OuterIteration>,
}

impl ReconDiagnostics {
    /// `true` if every TV descent kept its objective non-increasing.
    pub fn tv_monotone(&self) -> bool {
        self.iterations.iter().all(|it| it.tv.is_non_increasing())
    }
}

/// Data-consistent reconstruction seeded by `prior` (HU).
pub fn dcr_reconstruct(measured: &Sinogram, prior: &Image, cfg: &ReconConfig) -> Result<Image> {
    dcr_reconstruct_traced(measured, prior, cfg).map(|(img, _)| img)
}

pub fn dcr_reconstruct_traced(
    measured: &Sinogram,
    prior: &Image,
    cfg: &ReconConfig,
) -> Result<(Image, ReconDiagnostics)> {
    cfg.validate()?;
    prior.check_finite("prior image")?;
    measured.check_finite()?;
    let merged = merge_sinograms(measured, prior)?;
    let start = prior.to_unit(Unit::Hu);
    run(&merged, start, true, cfg)
}

/// Reweighted-TV reconstruction from measured channels only, starting from
/// an empty (air) image.
pub fn wtv_reconstruct(measured: &Sinogram, grid: &ImageGrid, cfg: &ReconConfig) -> Result<Image> {
    wtv_reconstruct_traced(measured, grid, cfg).map(|(img, _)| img)
}

pub fn wtv_reconstruct_traced(
    measured: &Sinogram,
    grid: &ImageGrid,
    cfg: &ReconConfig,
) -> Result<(Image, ReconDiagnostics)> {
    cfg.validate()?;
    measured.check_finite()?;
    let start = Image::zeros(*grid, Unit::MuPerMm).to_unit(Unit::Hu);
    run(measured, start, false, cfg)
}

fn run(sinogram: &Sinogram, start: Image, use_truncated: bool, cfg: &ReconConfig) -> Result<(Image, ReconDiagnostics)> {
    let grid = start.grid;
    let proj = Projector::new(&sinogram.geometry, &grid)?;
    let measured = ChannelSet::Measured.select(sinogram);
    if !measured.iter().any(|&m| m) {
        return Err(Error::EmptyChannelSet);
    }
    let truncated = ChannelSet::Truncated.select(sinogram);
    let use_truncated = use_truncated && truncated.iter().any(|&t| t);

    let mut hu = start.values;
    let mut mu = vec![0.0; hu.len()];
    let mut before = vec![0.0; hu.len()];
    let mut diagnostics = ReconDiagnostics::default();
    let mut tv_step = 0.0;

    for n in 0..cfg.n_outer {
        let weights = weights_from_values(&hu, &grid, cfg.epsilon_tv);
        before.copy_from_slice(&hu);
        to_mu(&hu, &mut mu);

        let measured_residual = relative_residual(&proj, &mu, sinogram, &measured);
        let measured_sweep = measured_residual > cfg.e1;
        if measured_sweep {
            sart_pass(&proj, &mut mu, sinogram, &measured, cfg.sart_relaxation);
        }
        let mut truncated_residual = None;
        let mut truncated_sweep = false;
        if use_truncated {
            let r = relative_residual(&proj, &mu, sinogram, &truncated);
            truncated_residual = Some(r);
            truncated_sweep = r > cfg.e2;
            if truncated_sweep {
                sart_pass(&proj, &mut mu, sinogram, &truncated, cfg.sart_relaxation);
            }
        }
        if measured_sweep || truncated_sweep {
            to_hu(&mu, &mut hu);
        }

        let change = hu.iter().zip(&before).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if change > 0.0 {
            tv_step = cfg.tv_step_fraction * change;
        }
        let delta = cfg.tv_smoothing * dynamic_range(&hu).max(1.0);
        let tv = tv_descent(&mut hu, &grid, &weights, delta, cfg.n_tv_steps, tv_step);

        if let Some(k) = hu.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "outer iteration {n}: pixel {k} became non-finite (measured residual {measured_residual:.3e})"
            )));
        }
        log::debug!(
            "outer {n}: measured residual {measured_residual:.4e}, truncated {truncated_residual:?}, sart ({measured_sweep}, {truncated_sweep}), tv {} -> {}",
            tv.objective.first().copied().unwrap_or(0.0),
            tv.objective.last().copied().unwrap_or(0.0)
        );
        diagnostics.iterations.push(OuterIteration {
            measured_residual,
            truncated_residual,
            measured_sweep,
            truncated_sweep,
            tv,
        });
    }
    Ok((Image::new(grid, hu, Unit::Hu)?, diagnostics))
}

fn to_mu(hu: &[f64], mu: &mut [f64]) {
    for (m, &h) in mu.iter_mut().zip(hu) {
        *m = hu_to_mu_value(h);
    }
}

fn to_hu(mu: &[f64], hu: &mut [f64]) {
    for (h, &m) in hu.iter_mut().zip(mu) {
        *h = mu_to_hu_value(m);
    }
}

fn dynamic_range(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}
