//! Reweighted total variation: weights, norm, smoothed objective and descent.

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::image::Image;

/// Forward differences of an image (HU per pixel), zero on the last column
/// (`dx`) and last row (`dy`).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl GradientField {
    pub fn of(values: &[f64], grid: &ImageGrid) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut dx = vec![0.0; values.len()];
        let mut dy = vec![0.0; values.len()];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i + 1 < nx {
                    dx[k] = values[k + 1] - values[k];
                }
                if j + 1 < ny {
                    dy[k] = values[k + nx] - values[k];
                }
            }
        }
        GradientField { dx, dy }
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> impl Iterator<Item = f64> + '_ {
        self.dx.iter().zip(&self.dy).map(|(a, b)| a.hypot(*b))
    }
}

/// Per-pixel weights of the reweighted TV norm.
#[derive(Clone, Debug, PartialEq)]
pub struct TVWeights {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

impl TVWeights {
    pub fn uniform(grid: ImageGrid, w: f64) -> Self {
        TVWeights { grid, values: vec![w; grid.len()] }
    }

    fn check(&self, values: &[f64]) -> Result<()> {
        if self.values.len() != values.len() {
            return Err(Error::ShapeMismatch(format!("{} weights for {} pixels", self.values.len(), values.len())));
        }
        Ok(())
    }
}

/// `w = 1 / (|D f_prev| + epsilon)` with `epsilon` in HU.
pub fn tv_weights(prev: &Image, epsilon_tv: f64) -> Result<TVWeights> {
    if !(epsilon_tv > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon_tv must be positive, got {epsilon_tv}")));
    }
    Ok(weights_from_values(&prev.values, &prev.grid, epsilon_tv))
}

pub(crate) fn weights_from_values(values: &[f64], grid: &ImageGrid, epsilon_tv: f64) -> TVWeights {
    let grad = GradientField::of(values, grid);
    TVWeights { grid: *grid, values: grad.magnitude().map(|m| 1.0 / (m + epsilon_tv)).collect() }
}

/// `sum w |D f|`.
pub fn wtv_norm(f: &Image, w: &TVWeights) -> Result<f64> {
    w.check(&f.values)?;
    let grad = GradientField::of(&f.values, &f.grid);
    Ok(grad.magnitude().zip(&w.values).map(|(m, w)| w * m).sum())
}

/// Smoothed objective `sum w sqrt(|D f|^2 + delta^2)`.
pub fn wtv_objective(values: &[f64], grid: &ImageGrid, w: &TVWeights, delta: f64) -> f64 {
    let grad = GradientField::of(values, grid);
    let d2 = delta * delta;
    grad.dx.iter().zip(&grad.dy).zip(&w.values).map(|((a, b), w)| w * (a * a + b * b + d2).sqrt()).sum()
}

fn objective_gradient(values: &[f64], grid: &ImageGrid, w: &TVWeights, delta: f64) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let grad = GradientField::of(values, grid);
    let d2 = delta * delta;
    let mut out = vec![0.0; values.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let (gx, gy) = (grad.dx[k], grad.dy[k]);
            if w.values[k] == 0.0 || (gx == 0.0 && gy == 0.0) {
                continue;
            }
            let c = w.values[k] / (gx * gx + gy * gy + d2).sqrt();
            if i + 1 < nx {
                out[k + 1] += c * gx;
                out[k] -= c * gx;
            }
            if j + 1 < ny {
                out[k + nx] += c * gy;
                out[k] -= c * gy;
            }
        }
    }
    out
}

/// Gradient of the smoothed weighted TV objective with respect to `f`.
pub fn wtv_gradient(f: &Image, w: &TVWeights, smoothing_delta: f64) -> Result<Image> {
    if !(smoothing_delta > 0.0) {
        return Err(Error::InvalidParameter(format!("smoothing delta must be positive, got {smoothing_delta}")));
    }
    w.check(&f.values)?;
    let values = objective_gradient(&f.values, &f.grid, w, smoothing_delta);
    Image::new(f.grid, values, f.unit)
}

/// Objective values seen by one run of [`tv_descent`]; entry 0 is the start.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DescentTrace {
    pub objective: Vec<f64>,
}

impl DescentTrace {
    pub fn is_non_increasing(&self) -> bool {
        self.objective.windows(2).all(|p| p[1] <= p[0])
    }
}

/// Normalized steepest descent on the smoothed objective with frozen
/// weights. Each step starts at length `step` and halves until the objective
/// does not increase; a step that never succeeds ends the descent.
pub fn tv_descent(
    values: &mut [f64],
    grid: &ImageGrid,
    w: &TVWeights,
    delta: f64,
    steps: usize,
    step: f64,
) -> DescentTrace {
    let mut current = wtv_objective(values, grid, w, delta);
    let mut trace = DescentTrace { objective: vec![current] };
    if !(step > 0.0) {
        return trace;
    }
    let mut candidate = vec![0.0; values.len()];
    for _ in 0..steps {
        let g = objective_gradient(values, grid, w, delta);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..30 {
            let scale = t / norm;
            for ((c, v), gv) in candidate.iter_mut().zip(values.iter()).zip(&g) {
                *c = v - scale * gv;
            }
            let value = wtv_objective(&candidate, grid, w, delta);
            if value <= current {
                values.copy_from_slice(&candidate);
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        assert!(trace.objective.last().is_none_or(|&prev| current <= prev), "wTV objective increased during descent");
        trace.objective.push(current);
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> ImageGrid {
        ImageGrid::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn constant_image_weights() {
        let img = Image::filled(grid(6), 40.0, Unit::Hu);
        let w = tv_weights(&img, 5.0).unwrap();
        assert!(w.values.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let far = tv_weights(&img, 1e300).unwrap();
        assert!(far.values.iter().all(|&v| v < 1e-299));
        assert!(tv_weights(&img, 0.0).is_err());
    }

    #[test]
    fn step_edge_weight() {
        let g = grid(6);
        let values = (0..36).map(|k| if k % 6 >= 3 { 100.0 } else { 0.0 }).collect();
        let img = Image::new(g, values, Unit::Hu).unwrap();
        let w = tv_weights(&img, 5.0).unwrap();
        // pixel (2, j) sees the jump to column 3
        for j in 0..6 {
            assert!((w.values[j * 6 + 2] - 1.0 / 105.0).abs() < 1e-15);
            assert!((w.values[j * 6] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_of_vertical_step() {
        let (n, h) = (7usize, 35.0);
        let g = ImageGrid::new(5, n, 1.0, 1.0).unwrap();
        let values = (0..5 * n).map(|k| if k % 5 >= 2 { h } else { 0.0 }).collect();
        let img = Image::new(g, values, Unit::Hu).unwrap();
        let w = TVWeights::uniform(g, 1.0);
        assert!((wtv_norm(&img, &w).unwrap() - n as f64 * h).abs() < 1e-12);
        let flat = Image::filled(g, 3.0, Unit::Hu);
        assert_eq!(wtv_norm(&flat, &w).unwrap(), 0.0);
        let doubled = Image::new(g, img.values.iter().map(|v| 2.0 * v).collect(), Unit::Hu).unwrap();
        assert!((wtv_norm(&doubled, &w).unwrap() - 2.0 * n as f64 * h).abs() < 1e-12);
    }

    #[test]
    fn gradient_zero_cases() {
        let g = grid(5);
        let flat = Image::filled(g, -200.0, Unit::Hu);
        let w = TVWeights::uniform(g, 0.3);
        assert!(wtv_gradient(&flat, &w, 0.1).unwrap().values.iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rough = Image::new(g, (0..25).map(|_| rng.random_range(-50.0..50.0)).collect(), Unit::Hu).unwrap();
        let zero = TVWeights::uniform(g, 0.0);
        assert!(wtv_gradient(&rough, &zero, 0.1).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(wtv_gradient(&rough, &w, 0.0).is_err());
    }

    #[test]
    fn descent_never_increases() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut values: Vec<f64> = (0..256).map(|_| rng.random_range(-100.0..100.0)).collect();
        let w = weights_from_values(&values, &g, 5.0);
        let trace = tv_descent(&mut values, &g, &w, 0.2, 20, 50.0);
        assert!(trace.objective.len() > 1);
        assert!(trace.is_non_increasing());
        assert!(trace.objective.last().unwrap() < &trace.objective[0]);
    }
}
