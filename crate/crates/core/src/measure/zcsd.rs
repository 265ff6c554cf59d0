//! Zero crossings of the second derivative: an edge sits at the inflection
//! point of the smoothed profile nearest the strongest gradient.

use super::{aggregate, first_local_max, first_significant_peak, levels, per_ray};
use super::{MeasureConfig, MeasurementResult, RayEdges};
use crate::filter::convolve_1d;
use crate::image::ImageGrid;

/// Gaussian, first- and second-derivative kernels for σ in samples, truncated
/// at 4σ. Normalised so a constant, a unit ramp and `x²/2` respond with 1.
pub fn gaussian_derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let radius = (4.0 * sigma).ceil() as i64;
    let xs: Vec<f64> = (-radius..=radius).map(|i| i as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let gs: f64 = g.iter().sum();
    let g0: Vec<f64> = g.iter().map(|v| v / gs).collect();

    let mut g1: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| -x * v).collect();
    let m1: f64 = -xs.iter().zip(&g1).map(|(x, v)| x * v).sum::<f64>();
    g1.iter_mut().for_each(|v| *v /= m1);

    let mut g2: Vec<f64> = xs
        .iter()
        .zip(&g)
        .map(|(x, v)| (x * x / (sigma * sigma) - 1.0) * v)
        .collect();
    let mean2 = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|v| *v -= mean2);
    let m2: f64 = xs.iter().zip(&g2).map(|(x, v)| x * x * v).sum::<f64>() / 2.0;
    g2.iter_mut().for_each(|v| *v /= m2);
    (g0, g1, g2)
}

struct Smoothed {
    value: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn smooth(p: &[f64], cfg: &MeasureConfig) -> Smoothed {
    let (g0, g1, g2) = gaussian_derivative_kernels(cfg.zcsd_sigma_mm / cfg.step);
    Smoothed {
        value: convolve_1d(p, &g0),
        d1: convolve_1d(p, &g1),
        d2: convolve_1d(p, &g2),
    }
}

/// Sign change of `d2` in `[lo, hi]` nearest to index `at`, as a sub-sample
/// position by linear root interpolation.
fn nearest_zero_crossing(d2: &[f64], at: usize, lo: usize, hi: usize) -> Option<f64> {
    let hi = hi.min(d2.len() - 1);
    let root = |k: usize| -> Option<f64> {
        if k + 1 > hi || k < lo {
            return None;
        }
        let (a, b) = (d2[k], d2[k + 1]);
        if a == 0.0 {
            Some(k as f64)
        } else if a * b < 0.0 {
            Some(k as f64 + a / (a - b))
        } else {
            None
        }
    };
    (0..=hi.saturating_sub(lo)).find_map(|off| {
        let right = root(at + off);
        let left = at.checked_sub(off + 1).and_then(root);
        match (left, right) {
            (Some(l), Some(r)) => Some(if (at as f64 - l) < (r - at as f64) { l } else { r }),
            (l, r) => l.or(r),
        }
    })
}

fn argmax_by(values: &[f64], lo: usize, hi: usize, key: impl Fn(f64) -> f64) -> usize {
    (lo..hi.min(values.len()))
        .max_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])).then(b.cmp(&a)))
        .unwrap_or(lo)
}

pub fn zcsd_vessel_ray(p: &[f64], cfg: &MeasureConfig) -> Option<RayEdges> {
    let s = smooth(p, cfg);
    let peak = first_local_max(&s.value);
    let lv = levels(&s.value, peak, cfg);
    if lv.center - lv.background < cfg.min_contrast {
        return None;
    }
    let fall = argmax_by(&s.d1, peak, p.len(), |v| -v);
    if s.d1[fall] >= 0.0 {
        return None;
    }
    let edge = nearest_zero_crossing(&s.d2, fall, peak, p.len() - 1)?;
    Some(RayEdges { inner: edge, outer: None })
}

pub fn zcsd_airway_ray(p: &[f64], cfg: &MeasureConfig) -> Option<RayEdges> {
    let s = smooth(p, cfg);
    let peak = first_significant_peak(&s.value, cfg.min_contrast)?;
    let lv = levels(&s.value, peak, cfg);
    let top = s.value[peak];
    if top - lv.center < cfg.min_contrast || top - lv.background < cfg.min_contrast {
        return None;
    }
    if s.value[0] >= 0.5 * (lv.center + top) {
        return None;
    }
    let rise = argmax_by(&s.d1, 0, peak + 1, |v| v);
    let fall = argmax_by(&s.d1, peak, p.len(), |v| -v);
    if s.d1[rise] <= 0.0 || s.d1[fall] >= 0.0 {
        return None;
    }
    let inner = nearest_zero_crossing(&s.d2, rise, 0, peak)?;
    let outer = nearest_zero_crossing(&s.d2, fall, peak, p.len() - 1)?;
    if outer <= inner {
        return None;
    }
    Some(RayEdges {
        inner,
        outer: Some(outer),
    })
}

pub fn zcsd_vessel(patch: &ImageGrid, cfg: &MeasureConfig) -> MeasurementResult {
    aggregate(per_ray(patch, cfg, zcsd_vessel_ray), cfg)
}

pub fn zcsd_airway(patch: &ImageGrid, cfg: &MeasureConfig) -> MeasurementResult {
    aggregate(per_ray(patch, cfg, zcsd_airway_ray), cfg)
}
