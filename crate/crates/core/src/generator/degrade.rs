//! CT acquisition model: down-sampling, PSF blur, correlated noise, cropping.

use rand::Rng;

use super::render::correlated_field;
use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::image::ImageGrid;

/// Side of the final patch in pixels.
pub const PATCH_SIZE: usize = 32;

/// Block-averages by `factor` in both directions.
pub fn downsample(img: &ImageGrid, factor: usize) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(Error::invalid(format!(
            "{w}x{h} grid is not divisible by {factor}"
        )));
    }
    let (ow, oh) = (w / factor, h / factor);
    let mut out = vec![0.0; ow * oh];
    for row in 0..h {
        let line = img.row(row);
        let orow = &mut out[(row / factor) * ow..(row / factor + 1) * ow];
        for (o, block) in orow.iter_mut().zip(line.chunks_exact(factor)) {
            *o += block.iter().sum::<f64>();
        }
    }
    let norm = (factor * factor) as f64;
    out.iter_mut().for_each(|v| *v /= norm);
    ImageGrid::new(ow, oh, img.spacing() * factor as f64, out)
}

/// Spatially invariant Gaussian PSF; `psf_sigma` in mm.
pub fn apply_psf(img: &ImageGrid, psf_sigma: f64) -> ImageGrid {
    if psf_sigma <= 0.0 {
        return img.clone();
    }
    gaussian_blur(img, psf_sigma / img.spacing())
}

/// Adds smoothed Gaussian noise whose delivered standard deviation is exactly
/// `noise_sigma` HU (the field is rescaled after smoothing).
pub fn add_noise(img: &ImageGrid, noise_sigma: f64, smooth_sigma_px: f64, rng: &mut impl Rng) -> ImageGrid {
    if noise_sigma <= 0.0 {
        return img.clone();
    }
    let field = correlated_field(
        img.width(),
        img.height(),
        img.spacing(),
        0.0,
        noise_sigma,
        smooth_sigma_px,
        rng,
    );
    let mut out = img.clone();
    for (v, n) in out.values_mut().iter_mut().zip(field.values()) {
        *v += n;
    }
    out
}

/// Central `size`x`size` window, offset `((h - size)/2, (w - size)/2)`.
pub fn crop_center(img: &ImageGrid, size: usize) -> Result<ImageGrid> {
    let (w, h) = (img.width(), img.height());
    if w < size || h < size {
        return Err(Error::invalid(format!("cannot crop {size}x{size} from {w}x{h}")));
    }
    let (r0, c0) = ((h - size) / 2, (w - size) / 2);
    Ok(ImageGrid::from_fn(size, size, img.spacing(), |r, c| img.get(r0 + r, c0 + c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};

    #[test]
    fn downsample_constant_and_mean() {
        let c = ImageGrid::filled(640, 640, 0.05, -712.5);
        let d = downsample(&c, 10).unwrap();
        assert_eq!((d.width(), d.height()), (64, 64));
        assert!((d.spacing() - 0.5).abs() < 1e-15);
        assert!(d.values().iter().all(|v| (v + 712.5).abs() < 1e-12));

        let mut rng = stream(1, 0, 0, Stage::Texture);
        let r = correlated_field(640, 640, 0.05, -500.0, 300.0, 1.0, &mut rng);
        let d = downsample(&r, 10).unwrap();
        assert!((d.mean() - r.mean()).abs() < 1e-9);
    }

    #[test]
    fn downsample_alternating_block() {
        let img = ImageGrid::from_fn(10, 10, 0.05, |r, c| if (r + c) % 2 == 0 { 0.0 } else { -1000.0 });
        let d = downsample(&img, 10).unwrap();
        assert_eq!(d.values(), &[-500.0]);
    }

    #[test]
    fn downsample_rejects_indivisible() {
        let img = ImageGrid::filled(64, 60, 0.05, 0.0);
        assert!(downsample(&img, 7).is_err());
    }

    #[test]
    fn psf_zero_is_identity_and_constant_is_preserved() {
        let img = ImageGrid::from_fn(64, 64, 0.5, |r, c| (r * 64 + c) as f64);
        assert_eq!(apply_psf(&img, 0.0), img);
        let c = ImageGrid::filled(64, 64, 0.5, -321.0);
        let b = apply_psf(&c, 0.9);
        assert!(b.values().iter().all(|v| (v + 321.0).abs() < 1e-9));
    }

    #[test]
    fn psf_impulse_matches_closed_form_gaussian() {
        let mut img = ImageGrid::filled(64, 64, 0.5, 0.0);
        img.set(32, 32, 1.0);
        let out = apply_psf(&img, 0.5);
        // sigma = 1 px, support radius 4 px, normalised over the support
        let g = |d: i32| (-(d * d) as f64 / 2.0).exp();
        let norm: f64 = (-4..=4).map(g).sum();
        let mut worst = 0.0f64;
        for r in 0..64i32 {
            for c in 0..64i32 {
                let (dr, dc) = (r - 32, c - 32);
                let want = if dr.abs() <= 4 && dc.abs() <= 4 {
                    g(dr) * g(dc) / (norm * norm)
                } else {
                    0.0
                };
                worst = worst.max((out.get(r as usize, c as usize) - want).abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn noise_examples() {
        let zero = ImageGrid::filled(64, 64, 0.5, 0.0);
        let mut rng = stream(3, 1, 2, Stage::Noise);
        assert_eq!(add_noise(&zero, 0.0, 2.0, &mut rng), zero);
        let a = add_noise(&zero, 25.0, 2.0, &mut stream(3, 1, 2, Stage::Noise));
        let b = add_noise(&zero, 25.0, 2.0, &mut stream(3, 1, 2, Stage::Noise));
        assert!((a.std() - 25.0).abs() < 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn crop_examples() {
        let ramp = ImageGrid::from_fn(64, 64, 0.5, |r, c| (r * 64 + c) as f64);
        let crop = crop_center(&ramp, 32).unwrap();
        assert_eq!(crop.get(0, 0), ramp.get(16, 16));
        assert_eq!(crop.get(31, 31), ramp.get(47, 47));
        assert_eq!(crop.get(16, 16), ramp.get(32, 32));
        assert_eq!(crop_center(&crop, 32).unwrap(), crop);
        assert!(crop_center(&ImageGrid::filled(31, 40, 0.5, 0.0), 32).is_err());
    }
}
