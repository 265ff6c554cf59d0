//! Classical edge-based measurers operating on radial intensity profiles.

mod fwhm;
mod profile;
mod zcsd;

pub use fwhm::{fwhm_airway, fwhm_airway_ray, fwhm_vessel, fwhm_vessel_ray};
pub use profile::{radial_profile, RadialProfile};
pub use zcsd::{gaussian_derivative_kernels, zcsd_airway, zcsd_airway_ray, zcsd_vessel, zcsd_vessel_ray};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Kind;
use crate::image::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureConfig {
    pub n_rays: usize,
    /// Profile sample spacing in mm.
    pub step: f64,
    /// Minimum number of valid rays for a measurement.
    pub quorum: usize,
    /// Fraction trimmed from each end before averaging per-ray edges.
    pub trim: f64,
    /// Plateau window as a fraction of the first-peak distance.
    pub plateau_fraction: f64,
    /// Length of the profile tail used for the background level, in mm.
    pub background_mm: f64,
    /// Minimum level difference (HU) for an edge to count.
    pub min_contrast: f64,
    /// Scale of the Gaussian-derivative kernels used by ZCSD, in mm.
    pub zcsd_sigma_mm: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            n_rays: 64,
            step: 0.1,
            quorum: 32,
            trim: 0.2,
            plateau_fraction: 0.4,
            background_mm: 1.0,
            min_contrast: 50.0,
            zcsd_sigma_mm: 0.3,
        }
    }
}

impl MeasureConfig {
    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rays).map(move |i| 360.0 * i as f64 / self.n_rays as f64)
    }
}

/// Edge distances (mm from the centre) found on one ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayEdges {
    pub inner: f64,
    /// Outer wall edge; absent for vessels.
    pub outer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayDiagnostic {
    pub angle: f64,
    pub edges: Option<RayEdges>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub lumen_radius: Option<f64>,
    pub wall_thickness: Option<f64>,
    pub n_valid_rays: usize,
    pub per_ray: Vec<RayDiagnostic>,
}

impl MeasurementResult {
    pub fn is_measured(&self) -> bool {
        self.lumen_radius.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fwhm,
    Zcsd,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwhm" => Ok(Method::Fwhm),
            "zcsd" => Ok(Method::Zcsd),
            other => Err(Error::invalid(format!("unknown method `{other}` (fwhm|zcsd)"))),
        }
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fwhm => "fwhm",
            Method::Zcsd => "zcsd",
        }
    }
}

/// Dispatches to the measurer for `method` and structure `kind`.
pub fn measure(patch: &ImageGrid, kind: Kind, method: Method, cfg: &MeasureConfig) -> MeasurementResult {
    match (method, kind) {
        (Method::Fwhm, Kind::Vessel) => fwhm_vessel(patch, cfg),
        (Method::Fwhm, Kind::Airway) => fwhm_airway(patch, cfg),
        (Method::Zcsd, Kind::Vessel) => zcsd_vessel(patch, cfg),
        (Method::Zcsd, Kind::Airway) => zcsd_airway(patch, cfg),
    }
}

/// Mean after dropping `floor(trim·n)` values from each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = ((trim * v.len() as f64).floor() as usize).min((v.len() - 1) / 2);
    let kept = &v[cut..v.len() - cut];
    Some(kept.iter().sum::<f64>() / kept.len() as f64)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Levels shared by every ray analysis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Levels {
    /// Robust level at the centre (lumen or vessel plateau).
    pub center: f64,
    /// Robust level of the profile tail.
    pub background: f64,
}

/// Index of the first local maximum going outward (0 if the profile starts by
/// falling).
pub(crate) fn first_local_max(p: &[f64]) -> usize {
    (0..p.len().saturating_sub(1))
        .find(|&k| p[k] >= p[k + 1])
        .unwrap_or(p.len().saturating_sub(1))
}

/// First local maximum that rises at least `contrast` above the running
/// minimum before it.
pub(crate) fn first_significant_peak(p: &[f64], contrast: f64) -> Option<usize> {
    let mut low = f64::INFINITY;
    for k in 0..p.len().saturating_sub(1) {
        low = low.min(p[k]);
        let rising_in = k == 0 || p[k] >= p[k - 1];
        if rising_in && p[k] >= p[k + 1] && p[k] - low >= contrast {
            return Some(k);
        }
    }
    None
}

pub(crate) fn levels(p: &[f64], peak: usize, cfg: &MeasureConfig) -> Levels {
    let window = ((cfg.plateau_fraction * peak as f64).floor() as usize).min(p.len() - 1);
    let center = median(&p[..=window]);
    let tail = ((cfg.background_mm / cfg.step).round() as usize).clamp(1, p.len());
    let background = median(&p[p.len() - tail..]);
    Levels { center, background }
}

/// Sub-sample position (in samples) where `p` crosses `level` between `k` and `k+1`.
#[inline]
pub(crate) fn crossing(p: &[f64], k: usize, level: f64) -> f64 {
    let (a, b) = (p[k], p[k + 1]);
    if a == b {
        k as f64
    } else {
        k as f64 + (a - level) / (a - b)
    }
}

/// Reduces per-ray edges to a measurement using the trimmed mean.
pub(crate) fn aggregate(per_ray: Vec<RayDiagnostic>, cfg: &MeasureConfig) -> MeasurementResult {
    let valid: Vec<RayEdges> = per_ray.iter().filter_map(|r| r.edges).collect();
    let n_valid_rays = valid.len();
    if n_valid_rays < cfg.quorum || n_valid_rays == 0 {
        return MeasurementResult {
            lumen_radius: None,
            wall_thickness: None,
            n_valid_rays,
            per_ray,
        };
    }
    let inner: Vec<f64> = valid.iter().map(|e| e.inner).collect();
    let walls: Vec<f64> = valid
        .iter()
        .filter_map(|e| e.outer.map(|o| o - e.inner))
        .collect();
    MeasurementResult {
        lumen_radius: trimmed_mean(&inner, cfg.trim).map(|v| v.max(0.0)),
        wall_thickness: if walls.is_empty() {
            None
        } else {
            trimmed_mean(&walls, cfg.trim).map(|v| v.max(0.0))
        },
        n_valid_rays,
        per_ray,
    }
}

/// Casts the configured rays and applies `analyse` to each profile.
pub(crate) fn per_ray(
    patch: &ImageGrid,
    cfg: &MeasureConfig,
    analyse: impl Fn(&[f64], &MeasureConfig) -> Option<RayEdges>,
) -> Vec<RayDiagnostic> {
    cfg.angles()
        .map(|angle| {
            let prof = radial_profile(patch, angle, cfg.step);
            let edges = if prof.len() < 3 {
                None
            } else {
                analyse(&prof.samples, cfg).map(|e| RayEdges {
                    inner: e.inner * cfg.step,
                    outer: e.outer.map(|o| o * cfg.step),
                })
            };
            RayDiagnostic { angle, edges }
        })
        .collect()
}
