//! Full width at half maximum: an edge sits where the profile crosses the
//! midpoint between the levels on either side of it.

use super::{aggregate, crossing, first_local_max, first_significant_peak, levels, per_ray};
use super::{MeasureConfig, MeasurementResult, RayEdges};
use crate::image::ImageGrid;

/// Bright structure on a darker background. Returns the edge in samples.
pub fn fwhm_vessel_ray(p: &[f64], cfg: &MeasureConfig) -> Option<RayEdges> {
    let peak = first_local_max(p);
    let lv = levels(p, peak, cfg);
    if lv.center - lv.background < cfg.min_contrast {
        return None;
    }
    let half = 0.5 * (lv.center + lv.background);
    if p[peak] < half {
        return None;
    }
    let k = (peak..p.len() - 1).find(|&k| p[k] >= half && p[k + 1] < half)?;
    Some(RayEdges {
        inner: crossing(p, k, half),
        outer: None,
    })
}

/// Dark lumen, bright wall, then parenchyma. Returns both edges in samples.
pub fn fwhm_airway_ray(p: &[f64], cfg: &MeasureConfig) -> Option<RayEdges> {
    let peak = first_significant_peak(p, cfg.min_contrast)?;
    let lv = levels(p, peak, cfg);
    let top = p[peak];
    if top - lv.center < cfg.min_contrast || top - lv.background < cfg.min_contrast {
        return None;
    }
    let rise_half = 0.5 * (lv.center + top);
    // the centre must sit on the dark side of the rise
    if p[0] >= rise_half {
        return None;
    }
    let k_in = (0..peak).rev().find(|&k| p[k] < rise_half && p[k + 1] >= rise_half)?;
    let fall_half = 0.5 * (top + lv.background);
    let k_out = (peak..p.len() - 1).find(|&k| p[k] >= fall_half && p[k + 1] < fall_half)?;
    Some(RayEdges {
        inner: crossing(p, k_in, rise_half),
        outer: Some(crossing(p, k_out, fall_half)),
    })
}

pub fn fwhm_vessel(patch: &ImageGrid, cfg: &MeasureConfig) -> MeasurementResult {
    aggregate(per_ray(patch, cfg, fwhm_vessel_ray), cfg)
}

pub fn fwhm_airway(patch: &ImageGrid, cfg: &MeasureConfig) -> MeasurementResult {
    aggregate(per_ray(patch, cfg, fwhm_airway_ray), cfg)
}
