//! Separable Gaussian filtering with reflective (edge-duplicating) boundaries.

use crate::image::ImageGrid;

/// Number of standard deviations at which kernels are truncated.
pub const TRUNCATE: f64 = 4.0;

/// Sampled, unit-mass Gaussian kernel of radius `ceil(4σ)` (σ in pixels).
pub fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    if sigma_px <= 0.0 {
        return vec![1.0];
    }
    let radius = (TRUNCATE * sigma_px).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_px * sigma_px)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Maps an out-of-range index into `[0, n)` by symmetric reflection
/// (`... b a | a b c ... y z | z y ...`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Convolves each row of a row-major buffer with `kernel` (odd length).
fn convolve_rows(src: &[f64], width: usize, height: usize, kernel: &[f64], dst: &mut [f64]) {
    let radius = kernel.len() / 2;
    let mut padded = vec![0.0; width + 2 * radius];
    for row in 0..height {
        let line = &src[row * width..(row + 1) * width];
        for (j, p) in padded.iter_mut().enumerate() {
            *p = line[reflect_index(j as isize - radius as isize, width)];
        }
        let out = &mut dst[row * width..(row + 1) * width];
        out.fill(0.0);
        for (t, &k) in kernel.iter().enumerate() {
            let window = &padded[t..t + width];
            for (o, &p) in out.iter_mut().zip(window) {
                *o += k * p;
            }
        }
    }
}

/// Convolves each column; rows are accumulated whole so the inner loop is
/// contiguous.
fn convolve_cols(src: &[f64], width: usize, height: usize, kernel: &[f64], dst: &mut [f64]) {
    let radius = kernel.len() as isize / 2;
    for row in 0..height {
        let out = &mut dst[row * width..(row + 1) * width];
        out.fill(0.0);
        for (t, &k) in kernel.iter().enumerate() {
            let src_row = reflect_index(row as isize + t as isize - radius, height);
            let line = &src[src_row * width..(src_row + 1) * width];
            for (o, &p) in out.iter_mut().zip(line) {
                *o += k * p;
            }
        }
    }
}

/// Separable 2-D Gaussian blur of a raw buffer, σ in pixels.
pub fn gaussian_blur_buffer(values: &mut [f64], width: usize, height: usize, sigma_px: f64) {
    if sigma_px <= 0.0 {
        return;
    }
    let kernel = gaussian_kernel(sigma_px);
    let mut tmp = vec![0.0; values.len()];
    convolve_rows(values, width, height, &kernel, &mut tmp);
    convolve_cols(&tmp, width, height, &kernel, values);
}

/// Separable 2-D Gaussian blur, σ in pixels.
pub fn gaussian_blur(img: &ImageGrid, sigma_px: f64) -> ImageGrid {
    let mut out = img.clone();
    let (w, h) = (img.width(), img.height());
    gaussian_blur_buffer(out.values_mut(), w, h, sigma_px);
    out
}

/// 1-D convolution of a signal with reflective ends; `kernel` need not be
/// symmetric and is applied as correlation-flipped convolution.
pub fn convolve_1d(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let radius = kernel.len() as isize / 2;
    (0..n as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(t, &k)| k * signal[reflect_index(i + radius - t as isize, n)])
                .sum()
        })
        .collect()
}
