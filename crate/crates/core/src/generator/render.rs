//! High-resolution rasterisation of a [`StructureModel`].

use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{EllipseSpec, StructureModel};
use crate::filter::gaussian_blur_buffer;
use crate::image::{ImageGrid, HIGH_RES_SPACING};

/// Side of the high-resolution grid in pixels.
pub const HIGH_RES_SIZE: usize = 640;

/// Sub-samples per axis for pixels straddling a boundary. Odd, so coverage
/// is never exactly one half.
const SUPERSAMPLE: usize = 5;

/// Correlated lung-parenchyma background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parenchyma {
    pub mean: f64,
    /// Target standard deviation in HU; 0 gives a flat background at `mean`.
    pub sigma: f64,
    /// Smoothing of the white-noise field, in high-res pixels.
    pub smooth_sigma_px: f64,
}

impl Default for Parenchyma {
    fn default() -> Self {
        Self {
            mean: -900.0,
            sigma: 150.0,
            smooth_sigma_px: 5.0,
        }
    }
}

impl Parenchyma {
    pub fn flat(mean: f64) -> Self {
        Self {
            mean,
            sigma: 0.0,
            smooth_sigma_px: 0.0,
        }
    }
}

/// Gaussian white noise smoothed by `smooth_sigma_px` and affinely remapped to
/// the exact empirical `mean` and `sigma`.
pub fn correlated_field(
    width: usize,
    height: usize,
    spacing: f64,
    mean: f64,
    sigma: f64,
    smooth_sigma_px: f64,
    rng: &mut impl Rng,
) -> ImageGrid {
    let mut values: Vec<f64> = (0..width * height)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    gaussian_blur_buffer(&mut values, width, height, smooth_sigma_px);
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let s = (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let scale = if s > 0.0 { sigma / s } else { 0.0 };
    values.iter_mut().for_each(|v| *v = mean + (*v - m) * scale);
    ImageGrid::new(width, height, spacing, values).expect("shape is consistent")
}

/// Fractional coverage of each pixel by an ellipse, given in model space.
///
/// Image positions map to model space by `x_model = x_image * x_scale`, which
/// is how the skew stretch is applied. Pixels whose whole footprint lies on
/// one side of the boundary are classified from their centre; the remainder
/// are super-sampled.
pub fn paint_coverage(
    (w, h, sp): (usize, usize, f64),
    e: &EllipseSpec,
    x_scale: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let psi = e.rotation.to_radians();
    let (sn, cs) = psi.sin_cos();
    let (a, b) = (e.semi_major, e.semi_minor);
    let ex = (a * a * cs * cs + b * b * sn * sn).sqrt();
    let ey = (a * a * sn * sn + b * b * cs * cs).sqrt();
    let x_lo = (e.center.0 - ex) / x_scale;
    let x_hi = (e.center.0 + ex) / x_scale;
    let (y_lo, y_hi) = (e.center.1 - ey, e.center.1 + ey);
    let to_col = |x: f64| x / sp + w as f64 / 2.0 - 0.5;
    let to_row = |y: f64| y / sp + h as f64 / 2.0 - 0.5;
    let c0 = (to_col(x_lo).floor() - 1.0).max(0.0) as usize;
    let c1 = (to_col(x_hi).ceil() + 1.0).min(w as f64 - 1.0);
    let r0 = (to_row(y_lo).floor() - 1.0).max(0.0) as usize;
    let r1 = (to_row(y_hi).ceil() + 1.0).min(h as f64 - 1.0);
    if c1 < 0.0 || r1 < 0.0 {
        return;
    }
    let (c1, r1) = (c1 as usize, r1 as usize);

    let inside = |x: f64, y: f64| -> f64 {
        let dx = x * x_scale - e.center.0;
        let dy = y - e.center.1;
        let u = (dx * cs + dy * sn) / a;
        let v = (-dx * sn + dy * cs) / b;
        (u * u + v * v).sqrt()
    };
    // |grad s| <= 1/b in model space; the footprint radius never grows under x_scale <= 1.
    let band = sp * std::f64::consts::FRAC_1_SQRT_2 / b;
    let sub = sp / SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;

    for row in r0..=r1 {
        for col in c0..=c1 {
            let x = (col as f64 + 0.5 - w as f64 / 2.0) * sp;
            let y = (row as f64 + 0.5 - h as f64 / 2.0) * sp;
            let s = inside(x, y);
            let cov = if s <= 1.0 - band {
                1.0
            } else if s >= 1.0 + band {
                0.0
            } else {
                let mut hits = 0usize;
                for i in 0..SUPERSAMPLE {
                    let yy = y - sp / 2.0 + (i as f64 + 0.5) * sub;
                    for j in 0..SUPERSAMPLE {
                        let xx = x - sp / 2.0 + (j as f64 + 0.5) * sub;
                        if inside(xx, yy) <= 1.0 {
                            hits += 1;
                        }
                    }
                }
                hits as f64 / total
            };
            if cov > 0.0 {
                visit(row * w + col, cov);
            }
        }
    }
}

/// Alpha-composites an ellipse of uniform intensity onto `img`.
pub fn paint_ellipse(img: &mut ImageGrid, e: &EllipseSpec, x_scale: f64) {
    let dims = (img.width(), img.height(), img.spacing());
    let intensity = e.intensity;
    let values = img.values_mut();
    paint_coverage(dims, e, x_scale, |idx, cov| {
        let v = &mut values[idx];
        if cov >= 1.0 {
            *v = intensity;
        } else {
            *v += cov * (intensity - *v);
        }
    });
}

/// Coverage map (0..1 per pixel) of one ellipse on a `width`x`height` grid.
pub fn coverage_map(width: usize, height: usize, spacing: f64, e: &EllipseSpec, x_scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    paint_coverage((width, height, spacing), e, x_scale, |idx, cov| out[idx] = cov);
    out
}

/// Stretch factor applied to image x before evaluating model geometry.
pub fn skew_scale(skew_deg: f64) -> f64 {
    skew_deg.to_radians().cos()
}

/// Renders the model on the 640x640, 0.05 mm/px grid centred on the
/// structure. Draw order: chest wall, neighbours, central wall, central lumen.
pub fn render_high_res(model: &StructureModel, background: &Parenchyma, rng: &mut impl Rng) -> ImageGrid {
    let n = HIGH_RES_SIZE;
    let mut img = if background.sigma > 0.0 {
        correlated_field(
            n,
            n,
            HIGH_RES_SPACING,
            background.mean,
            background.sigma,
            background.smooth_sigma_px,
            rng,
        )
    } else {
        ImageGrid::filled(n, n, HIGH_RES_SPACING, background.mean)
    };

    for region in &model.chest_wall_regions {
        let disk = EllipseSpec::circle(region.center, region.radius, region.intensity);
        paint_ellipse(&mut img, &disk, 1.0);
    }

    let xs = skew_scale(model.skew);
    for nb in &model.neighbors {
        if let Some(outer) = &nb.outer {
            paint_ellipse(&mut img, outer, xs);
        }
        paint_ellipse(&mut img, &nb.inner, xs);
    }
    if let Some(outer) = model.central_outer() {
        paint_ellipse(&mut img, &outer, xs);
    }
    paint_ellipse(&mut img, &model.central_inner(), xs);
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::model::{Kind, StructureModel};
    use crate::rng::{stream, Stage};
    use std::f64::consts::PI;

    fn bare(kind: Kind, lr: f64, wt: Option<f64>) -> StructureModel {
        StructureModel {
            kind,
            lumen_radius: lr,
            wall_thickness: wt,
            axis_ratio: 1.0,
            rotation: 0.0,
            skew: 0.0,
            lumen_intensity: -1100.0,
            wall_intensity: -100.0,
            vessel_intensity: 20.0,
            neighbors: Vec::new(),
            chest_wall_regions: Vec::new(),
        }
    }

    #[test]
    fn vessel_disk_pixel_count_matches_area() {
        let m = bare(Kind::Vessel, 2.0, None);
        let mut rng = stream(0, 0, 0, Stage::Texture);
        let img = render_high_res(&m, &Parenchyma::flat(-900.0), &mut rng);
        let count = img.values().iter().filter(|&&v| v > -400.0).count() as f64;
        let expected = PI * (2.0f64 / 0.05).powi(2);
        assert!((count - expected).abs() / expected < 0.01, "{count} vs {expected}");
    }

    #[test]
    fn airway_annulus_coverage_matches_area() {
        let m = bare(Kind::Airway, 2.0, Some(1.0));
        let inner = coverage_map(640, 640, 0.05, &m.central_inner(), 1.0);
        let outer = coverage_map(640, 640, 0.05, &m.central_outer().unwrap(), 1.0);
        let annulus: f64 = outer.iter().sum::<f64>() - inner.iter().sum::<f64>();
        let expected = PI * (60.0f64.powi(2) - 40.0f64.powi(2));
        assert!((annulus - expected).abs() / expected < 0.01, "{annulus} vs {expected}");
    }

    #[test]
    fn centre_pixel_is_the_central_intensity() {
        let mut rng = stream(9, 0, 0, Stage::Model);
        for kind in [Kind::Airway, Kind::Vessel] {
            for _ in 0..5 {
                let m = crate::generator::model::sample_model(kind, &mut rng);
                let img = render_high_res(&m, &Parenchyma::default(), &mut rng);
                let want = match kind {
                    Kind::Airway => m.lumen_intensity,
                    Kind::Vessel => m.vessel_intensity,
                };
                assert_eq!(img.get(320, 320), want);
            }
        }
    }

    #[test]
    fn skew_stretches_area_by_inverse_cosine() {
        let mut m = bare(Kind::Vessel, 2.0, None);
        m.skew = 25.0;
        let cov = coverage_map(640, 640, 0.05, &m.central_inner(), skew_scale(m.skew));
        let area: f64 = cov.iter().sum();
        let expected = PI * 40.0 * 40.0 / 25f64.to_radians().cos();
        assert!((area - expected).abs() / expected < 0.01);
    }

    #[test]
    fn texture_has_target_moments() {
        let mut rng = stream(4, 0, 0, Stage::Texture);
        let f = correlated_field(128, 128, 0.05, -900.0, 150.0, 5.0, &mut rng);
        assert!((f.mean() + 900.0).abs() < 1e-9);
        assert!((f.std() - 150.0).abs() < 1e-9);
    }
}
