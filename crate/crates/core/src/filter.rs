//! Separable Gaussian smoothing on row-major images.

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Convolution with a separable kernel. Near the border the kernel is cut
/// at the image edge and renormalized.
pub fn separable_filter(values: &[f64], nx: usize, ny: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (t, &w) in taps.iter().enumerate() {
                    let d = t as isize - r;
                    let (ii, jj) = if along_x { (i + d, j) } else { (i, j + d) };
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        continue;
                    }
                    acc += w * src[jj as usize * nx + ii as usize];
                    wsum += w;
                }
                out[j as usize * nx + i as usize] = acc / wsum;
            }
        }
        out
    };
    let tmp = pass(values, true);
    pass(&tmp, false)
}

pub fn gaussian_blur(values: &[f64], nx: usize, ny: usize, sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    separable_filter(values, nx, ny, &gaussian_taps(sigma, radius))
}
