//! Water cylinder extrapolation of laterally truncated projections.
//!
//! At each truncation edge the projection of a water cylinder,
//! `p(t) = 2 mu_w sqrt(R^2 - (t - t0)^2)`, is matched to the measured edge
//! value and slope. `t` is the outward distance from the edge, measured in the
//! isocenter plane so that `R` is a physical radius.

use rayon::prelude::*;

use crate::error::Result;
use crate::fbp::fbp_reconstruct;
use crate::geometry::ImageGrid;
use crate::image::{Image, MU_WATER};
use crate::sinogram::Sinogram;

/// Channels used for the least-squares edge slope.
const SLOPE_FIT_CHANNELS: usize = 5;
/// Width of the cosine roll-off at the virtual detector edge.
const TAPER_CHANNELS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderFit {
    /// Cylinder radius in mm.
    pub radius: f64,
    /// Outward offset of the cylinder axis from the edge, mm (negative: inside).
    pub offset: f64,
    pub side: Side,
}

impl CylinderFit {
    /// Matches value `edge_value` and outward slope `edge_slope` (per mm) at `t = 0`.
    pub fn fit(edge_value: f64, edge_slope: f64, side: Side) -> Option<Self> {
        if !(edge_value > 0.0) || !edge_slope.is_finite() {
            return None;
        }
        let offset = edge_slope * edge_value / (4.0 * MU_WATER * MU_WATER);
        let half = edge_value / (2.0 * MU_WATER);
        Some(CylinderFit { radius: half.hypot(offset), offset, side })
    }

    /// Cylinder projection at outward distance `t`, zero beyond its shadow.
    pub fn value(&self, t: f64) -> f64 {
        let d = t - self.offset;
        let arg = self.radius * self.radius - d * d;
        if arg > 0.0 {
            2.0 * MU_WATER * arg.sqrt()
        } else {
            0.0
        }
    }

    /// Outward distance at which the profile reaches zero.
    pub fn extent(&self) -> f64 {
        self.offset + self.radius
    }
}

/// Least-squares slope of `values` against `positions`.
fn ls_slope(positions: &[f64], values: &[f64]) -> f64 {
    let n = positions.len() as f64;
    let mx = positions.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in positions.iter().zip(values) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Edge fit for one side of one view. `inward` lists measured channels
/// starting at the edge and moving into the detector.
fn fit_edge(row: &[f64], inward: &[usize], pitch: f64, side: Side) -> Option<CylinderFit> {
    let edge_value = row[inward[0]];
    let positions: Vec<f64> = (0..inward.len()).map(|k| -(k as f64) * pitch).collect();
    let values: Vec<f64> = inward.iter().map(|&c| row[c]).collect();
    let slope = if inward.len() >= 2 { ls_slope(&positions, &values) } else { 0.0 };
    CylinderFit::fit(edge_value, slope, side)
}

/// Fills every unmeasured channel with a water-cylinder continuation of the
/// adjacent measured edge. Measured channels and the mask are unchanged.
pub fn wce_extrapolate(sinogram: &Sinogram) -> Sinogram {
    let mut out = sinogram.clone();
    let mask = &sinogram.measured_mask;
    let (Some(first), Some(last)) = (mask.iter().position(|&m| m), mask.iter().rposition(|&m| m)) else {
        return out;
    };
    if !sinogram.is_truncated() {
        return out;
    }
    let g = &sinogram.geometry;
    let nc = g.n_channels();
    let pitch = g.det_spacing * g.sid / g.sdd;
    let fit_len = SLOPE_FIT_CHANNELS.min(last - first + 1);
    let left_in: Vec<usize> = (first..first + fit_len).collect();
    let right_in: Vec<usize> = (0..fit_len).map(|k| last - k).collect();

    out.values.par_chunks_mut(nc).for_each(|row| {
        if first > 0 {
            let fit = fit_edge(row, &left_in, pitch, Side::Left);
            fill_side(row, (0..first).rev(), fit, pitch, first);
        }
        if last + 1 < nc {
            let fit = fit_edge(row, &right_in, pitch, Side::Right);
            fill_side(row, last + 1..nc, fit, pitch, nc - 1 - last);
        }
    });
    out
}

/// Writes the cylinder profile outward over `channels` (ordered away from the
/// edge); `span` is the number of unmeasured channels on this side.
fn fill_side(
    row: &mut [f64],
    channels: impl Iterator<Item = usize>,
    fit: Option<CylinderFit>,
    pitch: f64,
    span: usize,
) {
    let Some(fit) = fit else {
        for c in channels {
            row[c] = 0.0;
        }
        return;
    };
    let taper = fit.extent() > span as f64 * pitch;
    let taper_len = TAPER_CHANNELS.min(span);
    for (step, c) in channels.enumerate() {
        let t = (step + 1) as f64 * pitch;
        let mut value = fit.value(t);
        if taper {
            // steps counted from the virtual detector edge
            let from_end = span - 1 - step;
            if from_end < taper_len {
                let phase = (taper_len - from_end) as f64 / taper_len as f64;
                value *= 0.5 * (1.0 + (std::f64::consts::PI * phase).cos());
            }
        }
        row[c] = value;
    }
}

/// FBP of the water-cylinder extrapolated sinogram.
pub fn reconstruct_wce(sinogram: &Sinogram, grid: &ImageGrid) -> Result<Image> {
    fbp_reconstruct(&wce_extrapolate(sinogram), grid)
}
