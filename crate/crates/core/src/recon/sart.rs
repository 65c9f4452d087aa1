use crate::error::{Error, Result};
use crate::image::{Image, Unit};
use crate::projector::Projector;
use crate::sinogram::Sinogram;

/// Rays whose weight sum falls below this (mm) are treated as missing the grid.
const MIN_RAY_LENGTH: f64 = 1e-9;

/// Which sinogram channels a data-fidelity step acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelSet {
    /// Channels flagged as measured.
    Measured,
    /// Channels filled from an estimate (unmeasured).
    Truncated,
    All,
}

impl ChannelSet {
    pub fn select(self, sinogram: &Sinogram) -> Vec<bool> {
        sinogram
            .measured_mask
            .iter()
            .map(|&m| match self {
                ChannelSet::Measured => m,
                ChannelSet::Truncated => !m,
                ChannelSet::All => true,
            })
            .collect()
    }
}

/// Fixed view visiting order: a stride near `n / golden ratio²`, coprime to
/// `n`, so consecutive updates come from nearly uncorrelated directions.
pub fn view_order(n: usize) -> Vec<usize> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let target = (n as f64 * 0.381_966_011_250_105).round() as usize;
    let stride =
        (0..n).flat_map(|d| [target + d, target.saturating_sub(d)]).find(|&s| s > 0 && gcd(s, n) == 1).unwrap_or(1);
    (0..n).map(|t| (t * stride) % n).collect()
}

/// One view-sequential SART pass over `sinogram` restricted to `channels`,
/// updating attenuation values in place.
pub(crate) fn sart_pass(proj: &Projector, values: &mut [f64], sinogram: &Sinogram, channels: &[bool], relaxation: f64) {
    let nc = sinogram.n_channels();
    let n = values.len();
    let mut forward = vec![0.0; nc];
    let mut rows = vec![0.0; nc];
    let mut resid = vec![0.0; nc];
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for v in view_order(sinogram.n_views()) {
        proj.forward_view(values, v, channels, &mut forward, &mut rows);
        let measured = sinogram.view(v);
        for c in 0..nc {
            resid[c] = if channels[c] && rows[c] > MIN_RAY_LENGTH { (measured[c] - forward[c]) / rows[c] } else { 0.0 };
        }
        num.iter_mut().for_each(|x| *x = 0.0);
        den.iter_mut().for_each(|x| *x = 0.0);
        proj.back_view(v, channels, &resid, &mut num, &mut den);
        for ((f, &a), &b) in values.iter_mut().zip(&num).zip(&den) {
            if b > 0.0 {
                *f += relaxation * a / b;
            }
        }
    }
}

/// One SART sweep over all views, in [`view_order`], on the chosen channel family.
pub fn sart_sweep(f: &Image, sinogram: &Sinogram, channel_set: ChannelSet, relaxation: f64) -> Result<Image> {
    f.expect_unit(Unit::MuPerMm)?;
    if !(relaxation > 0.0 && relaxation < 2.0) {
        return Err(Error::InvalidParameter(format!("SART relaxation must lie in (0, 2), got {relaxation}")));
    }
    let channels = channel_set.select(sinogram);
    if !channels.iter().any(|&c| c) {
        return Err(Error::EmptyChannelSet);
    }
    let proj = Projector::new(&sinogram.geometry, &f.grid)?;
    let mut values = f.values.clone();
    sart_pass(&proj, &mut values, sinogram, &channels, relaxation);
    Image::new(f.grid, values, Unit::MuPerMm)
}

/// `|A_S f - p_S| / |p_S|` over the channel subset `S`.
pub(crate) fn relative_residual(proj: &Projector, values: &[f64], sinogram: &Sinogram, channels: &[bool]) -> f64 {
    let ax = proj.forward_values(values, Some(channels));
    let nc = sinogram.n_channels();
    let (mut r2, mut p2) = (0.0, 0.0);
    for (k, (&a, &p)) in ax.iter().zip(&sinogram.values).enumerate() {
        if channels[k % nc] {
            r2 += (a - p) * (a - p);
            p2 += p * p;
        }
    }
    if p2 > 0.0 {
        (r2 / p2).sqrt()
    } else if r2 > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Relative data residual of an attenuation image on a channel family.
pub fn data_residual(f: &Image, sinogram: &Sinogram, channel_set: ChannelSet) -> Result<f64> {
    let mu = f.to_unit(Unit::MuPerMm);
    let proj = Projector::new(&sinogram.geometry, &f.grid)?;
    Ok(relative_residual(&proj, &mu.values, sinogram, &channel_set.select(sinogram)))
}
