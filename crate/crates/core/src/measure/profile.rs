use crate::image::{bilinear, ImageGrid};

/// Intensity samples along a ray cast from the patch centre.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    /// Ray direction in degrees; 0 points along +column, 90 along +row.
    pub angle: f64,
    /// Sample spacing in mm.
    pub step: f64,
    pub samples: Vec<f64>,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Covered distance from the centre in mm.
    pub fn extent(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 * self.step
    }
}

/// Samples `patch` at `centre + k·step·(cos θ, sin θ)`, k = 0, 1, ..., by
/// bilinear interpolation. The profile ends at the first out-of-bounds sample.
pub fn radial_profile(patch: &ImageGrid, angle: f64, step: f64) -> RadialProfile {
    assert!(step > 0.0, "profile step must be positive");
    let (w, h) = (patch.width(), patch.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = angle.to_radians();
    let (dy, dx) = theta.sin_cos();
    let px_step = step / patch.spacing();
    let mut samples = Vec::new();
    for k in 0.. {
        let r = k as f64 * px_step;
        match bilinear(patch.values(), w, h, cx + r * dx, cy + r * dy) {
            Some(v) => samples.push(v),
            None => break,
        }
    }
    RadialProfile { angle, step, samples }
}
