use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::reflect_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_noise: f64,
    /// Range of the additive white-noise standard deviation (HU).
    pub noise_min: f64,
    pub noise_max: f64,
    pub p_invert: f64,
    pub p_shift: f64,
    /// Probability of each of the horizontal and vertical flips.
    pub p_flip: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_noise: 0.5,
            noise_min: 1.0,
            noise_max: 20.0,
            p_invert: 0.2,
            p_shift: 0.5,
            p_flip: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            p_noise: 0.0,
            p_invert: 0.0,
            p_shift: 0.0,
            p_flip: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p_noise, self.p_invert, self.p_shift, self.p_flip] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("augmentation probability {p} outside [0, 1]")));
            }
        }
        if !(self.noise_min >= 0.0 && self.noise_max >= self.noise_min) {
            return Err(Error::config("augmentation noise range must satisfy 0 <= min <= max"));
        }
        Ok(())
    }
}

pub fn flip_horizontal(v: &mut [f32], w: usize) {
    for row in v.chunks_exact_mut(w) {
        row.reverse();
    }
}

pub fn flip_vertical(v: &mut [f32], w: usize) {
    let h = v.len() / w;
    for y in 0..h / 2 {
        let (top, bottom) = v.split_at_mut((h - 1 - y) * w);
        top[y * w..(y + 1) * w].swap_with_slice(&mut bottom[..w]);
    }
}

/// Reflects every value about the patch mean (`2·mean − v`).
pub fn invert(v: &mut [f32]) {
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    for x in v {
        *x = (2.0 * mean - *x as f64) as f32;
    }
}

/// Moves content by `(dx, dy)` pixels, filling exposed borders by symmetric
/// reflection.
pub fn shift(v: &[f32], w: usize, dx: isize, dy: isize) -> Vec<f32> {
    let h = v.len() / w;
    let mut out = vec![0.0; v.len()];
    for y in 0..h {
        let sy = reflect_index(y as isize - dy, h);
        for x in 0..w {
            let sx = reflect_index(x as isize - dx, w);
            out[y * w + x] = v[sy * w + sx];
        }
    }
    out
}

/// Randomly perturbs a square HU patch in place. Labels are unaffected.
pub fn augment<R: Rng>(patch: &mut Vec<f32>, cfg: &AugmentConfig, rng: &mut R) {
    let w = (patch.len() as f64).sqrt() as usize;
    debug_assert_eq!(w * w, patch.len());
    if rng.random_bool(cfg.p_shift) {
        let dx = rng.random_range(-1i32..=1) as isize;
        let dy = rng.random_range(-1i32..=1) as isize;
        *patch = shift(patch, w, dx, dy);
    }
    if rng.random_bool(cfg.p_flip) {
        flip_horizontal(patch, w);
    }
    if rng.random_bool(cfg.p_flip) {
        flip_vertical(patch, w);
    }
    if rng.random_bool(cfg.p_invert) {
        invert(patch);
    }
    if rng.random_bool(cfg.p_noise) {
        let sigma = rng.random_range(cfg.noise_min..=cfg.noise_max);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for x in patch.iter_mut() {
            *x += normal.sample(rng) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};

    fn ramp() -> Vec<f32> {
        (0..32 * 32).map(|i| ((i * 7919) % 613) as f32 - 900.0).collect()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let mut rng = stream(1, 0, 0, Stage::Augment);
        let mut p = ramp();
        augment(&mut p, &AugmentConfig::none(), &mut rng);
        assert_eq!(p, ramp());
    }

    #[test]
    fn flips_are_involutions() {
        let mut p = ramp();
        flip_horizontal(&mut p, 32);
        assert_ne!(p, ramp());
        flip_horizontal(&mut p, 32);
        assert_eq!(p, ramp());
        flip_vertical(&mut p, 32);
        assert_eq!(p[0], ramp()[31 * 32]);
        flip_vertical(&mut p, 32);
        assert_eq!(p, ramp());
    }

    #[test]
    fn shift_moves_content() {
        let p = ramp();
        let s = shift(&p, 32, 1, 0);
        assert_eq!(s[5 * 32 + 10], p[5 * 32 + 9]);
        assert_eq!(s[5 * 32], p[5 * 32]);
        let s = shift(&p, 32, 0, -1);
        assert_eq!(s[5 * 32 + 10], p[6 * 32 + 10]);
        assert_eq!(shift(&p, 32, 0, 0), p);
    }

    #[test]
    fn always_on_changes_and_keeps_length() {
        let cfg = AugmentConfig {
            p_noise: 1.0,
            p_invert: 1.0,
            p_shift: 1.0,
            p_flip: 1.0,
            ..AugmentConfig::default()
        };
        cfg.validate().unwrap();
        let mut rng = stream(2, 0, 0, Stage::Augment);
        let mut p = ramp();
        augment(&mut p, &cfg, &mut rng);
        assert_eq!(p.len(), 1024);
        assert_ne!(p, ramp());
    }
}
