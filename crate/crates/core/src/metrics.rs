//! Image-quality metrics: masked RMSE, whole-body masks and SSIM, plus the
//! method-comparison report.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{gaussian_taps, separable_filter};
use crate::geometry::Mask;
use crate::image::Image;

/// Dynamic range used by SSIM, in HU.
pub const SSIM_RANGE_HU: f64 = 2000.0;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_RADIUS: usize = 5;

/// Tissue threshold for the body mask in HU.
pub const BODY_THRESHOLD_HU: f64 = -500.0;

pub fn rmse(a: &Image, b: &Image, mask: &Mask) -> Result<f64> {
    a.check_same_shape(b)?;
    if mask.flags.len() != a.values.len() {
        return Err(Error::ShapeMismatch("mask and image sizes differ".into()));
    }
    let (sum, n) = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&mask.flags)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((x, y), _)| (s + (x - y) * (x - y), n + 1));
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / n as f64).sqrt())
}

/// Largest 4-connected region above [`BODY_THRESHOLD_HU`], with interior
/// holes filled.
pub fn body_mask(reference: &Image) -> Result<Mask> {
    let (nx, ny) = (reference.grid.nx, reference.grid.ny);
    let tissue: Vec<bool> = reference.values.iter().map(|&v| v > BODY_THRESHOLD_HU).collect();

    let mut label = vec![usize::MAX; tissue.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut next = 0;
    for start in 0..tissue.len() {
        if !tissue[start] || label[start] != usize::MAX {
            continue;
        }
        let size = flood(start, nx, ny, |k| {
            let open = tissue[k] && label[k] == usize::MAX;
            if open {
                label[k] = next;
            }
            open
        });
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
        next += 1;
    }
    let Some((body, _)) = best else {
        return Err(Error::EmptyMask);
    };
    let mut flags: Vec<bool> = label.iter().map(|&l| l == body).collect();

    // background reachable from the border; everything else is body or hole
    let mut outside = vec![false; flags.len()];
    for k in 0..flags.len() {
        let (i, j) = (k % nx, k / nx);
        let border = i == 0 || j == 0 || i + 1 == nx || j + 1 == ny;
        if border && !flags[k] && !outside[k] {
            flood(k, nx, ny, |q| {
                let open = !flags[q] && !outside[q];
                if open {
                    outside[q] = true;
                }
                open
            });
        }
    }
    for (f, o) in flags.iter_mut().zip(&outside) {
        *f = !*o;
    }
    Mask::new(reference.grid, flags)
}

/// Breadth-first 4-connected fill from `start`. `claim(q)` returns whether
/// `q` joins the region and marks it when it does.
fn flood(start: usize, nx: usize, ny: usize, mut claim: impl FnMut(usize) -> bool) -> usize {
    if !claim(start) {
        return 0;
    }
    let mut queue = VecDeque::from([start]);
    let mut size = 0;
    while let Some(k) = queue.pop_front() {
        size += 1;
        let (i, j) = (k % nx, k / nx);
        let mut push = |q: usize| {
            if claim(q) {
                queue.push_back(q);
            }
        };
        if i > 0 {
            push(k - 1);
        }
        if i + 1 < nx {
            push(k + 1);
        }
        if j > 0 {
            push(k - nx);
        }
        if j + 1 < ny {
            push(k + nx);
        }
    }
    size
}

/// Local SSIM at every pixel (11x11 Gaussian window, sigma 1.5).
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>> {
    a.check_same_shape(b)?;
    let (nx, ny) = (a.grid.nx, a.grid.ny);
    let taps = gaussian_taps(SSIM_SIGMA, SSIM_RADIUS);
    let blur = |v: &[f64]| separable_filter(v, nx, ny, &taps);
    let aa: Vec<f64> = a.values.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.values.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    let (mu_a, mu_b) = (blur(&a.values), blur(&b.values));
    let (e_aa, e_bb, e_ab) = (blur(&aa), blur(&bb), blur(&ab));
    let c1 = (SSIM_K1 * SSIM_RANGE_HU).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE_HU).powi(2);
    Ok((0..a.values.len())
        .map(|k| {
            let (ma, mb) = (mu_a[k], mu_b[k]);
            let va = e_aa[k] - ma * ma;
            let vb = e_bb[k] - mb * mb;
            let cov = e_ab[k] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect())
}

/// Mean local SSIM, over `mask` when given.
pub fn ssim(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<f64> {
    let map = ssim_map(a, b)?;
    let (sum, n) = match mask {
        Some(m) => {
            if m.flags.len() != map.len() {
                return Err(Error::ShapeMismatch("mask and image sizes differ".into()));
            }
            map.iter().zip(&m.flags).filter(|(_, &f)| f).fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1))
        }
        None => (map.iter().sum(), map.len()),
    };
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Scores of one method on one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    pub case: String,
    pub rmse_fov: f64,
    pub rmse_body: f64,
    pub ssim: f64,
    /// Relative residual on the measured channels.
    pub data_residual: f64,
}

/// Scores of one method, averaged over cases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    pub rmse_fov: f64,
    pub rmse_body: f64,
    pub ssim: f64,
    pub data_residual: f64,
    pub per_case: Vec<CaseScores>,
}

impl MethodScores {
    pub fn from_cases(method: &str, per_case: Vec<CaseScores>) -> Self {
        let n = per_case.len().max(1) as f64;
        let mean = |f: fn(&CaseScores) -> f64| per_case.iter().map(f).sum::<f64>() / n;
        MethodScores {
            method: method.to_string(),
            rmse_fov: mean(|c| c.rmse_fov),
            rmse_body: mean(|c| c.rmse_body),
            ssim: mean(|c| c.ssim),
            data_residual: mean(|c| c.data_residual),
            per_case,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Origin of prior images, when a prior-based method was run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_source: Option<String>,
    pub methods: Vec<MethodScores>,
}

impl EvalReport {
    pub fn get(&self, method: &str) -> Option<&MethodScores> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Methods as columns, metrics as rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self.methods.iter().map(|m| m.method.len()).max().unwrap_or(0).max(9);
        let _ = write!(out, "{:<12}", "Method");
        for m in &self.methods {
            let _ = write!(out, " | {:>width$}", m.method);
        }
        out.push('\n');
        let rows: [(&str, fn(&MethodScores) -> String); 3] = [
            ("RMSE in FOV", |m| format!("{:.1} HU", m.rmse_fov)),
            ("RMSE", |m| format!("{:.1} HU", m.rmse_body)),
            ("SSIM", |m| format!("{:.4}", m.ssim)),
        ];
        for (name, cell) in rows {
            let _ = write!(out, "{name:<12}");
            for m in &self.methods {
                let _ = write!(out, " | {:>width$}", cell(m));
            }
            out.push('\n');
        }
        out
    }
}
