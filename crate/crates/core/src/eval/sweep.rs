use rayon::prelude::*;
use serde::Serialize;

use super::compare::{estimate, target_name, Measurer};
use super::{relative_error, ErrorStats};
use crate::error::{Error, Result};
use crate::generator::{sample_model_with_size, simulate, DegradationParams, Kind, LabeledPatch};
use crate::rng::{stream, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Delivered noise standard deviation (HU).
    Noise,
    /// PSF standard deviation (mm).
    Psf,
    /// Lumen radius (mm); vessels: radius.
    Size,
    /// Airway wall thickness (mm).
    Wall,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(Self::Noise),
            "psf" => Ok(Self::Psf),
            "size" => Ok(Self::Size),
            "wall" => Ok(Self::Wall),
            other => Err(Error::invalid(format!("unknown sweep variable `{other}` (noise|psf|size|wall)"))),
        }
    }
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Psf => "psf",
            Self::Size => "size",
            Self::Wall => "wall",
        }
    }
}

/// Inclusive, evenly spaced levels from `start` to `stop`.
pub fn levels(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(Error::invalid("levels need step > 0 and stop >= start"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: Kind,
    pub variable: SweepVariable,
    pub levels: Vec<f64>,
    pub reps: usize,
    pub lumen_radius: f64,
    pub wall_thickness: Option<f64>,
    pub psf_sigma: f64,
    pub noise_sigma: f64,
    pub texture: bool,
    pub seed: u64,
}

impl SweepConfig {
    /// Sweep of `variable` around a fixed structure with the acquisition
    /// defaults (PSF 1.3 mm for noise sweeps, 0.7 mm otherwise; 25 HU noise).
    pub fn new(kind: Kind, variable: SweepVariable, levels: Vec<f64>) -> Self {
        let (lumen_radius, wall_thickness) = match kind {
            Kind::Vessel => (2.0, None),
            Kind::Airway => (2.5, Some(1.2)),
        };
        Self {
            kind,
            variable,
            levels,
            reps: 100,
            lumen_radius,
            wall_thickness,
            psf_sigma: if variable == SweepVariable::Noise { 1.3 } else { 0.7 },
            noise_sigma: 25.0,
            texture: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::config("a sweep needs at least two levels"));
        }
        if self.reps == 0 {
            return Err(Error::config("a sweep needs at least one repetition"));
        }
        if self.variable == SweepVariable::Wall && self.kind != Kind::Airway {
            return Err(Error::config("wall sweeps apply to airways only"));
        }
        if self.kind == Kind::Airway && self.wall_thickness.is_none() {
            return Err(Error::config("airway sweeps need a wall thickness"));
        }
        Ok(())
    }

    fn cell(&self, level: f64) -> (f64, Option<f64>, DegradationParams) {
        let mut lumen = self.lumen_radius;
        let mut wall = self.wall_thickness.filter(|_| self.kind == Kind::Airway);
        let base = DegradationParams::default();
        let mut params = DegradationParams {
            psf_sigma: self.psf_sigma,
            noise_sigma: self.noise_sigma,
            parenchyma_sigma: if self.texture { base.parenchyma_sigma } else { 0.0 },
            rng_seed: self.seed,
            ..base
        };
        match self.variable {
            SweepVariable::Noise => params.noise_sigma = level,
            SweepVariable::Psf => params.psf_sigma = level,
            SweepVariable::Size => lumen = level,
            SweepVariable::Wall => wall = Some(level),
        }
        (lumen, wall, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLevel {
    pub level: f64,
    /// One entry per output head.
    pub stats: Vec<ErrorStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: Kind,
    pub variable: SweepVariable,
    pub method: String,
    pub reps: usize,
    pub levels: Vec<SweepLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: String,
    pub variable: &'static str,
    pub level: f64,
    pub target: &'static str,
    pub mean_re: f64,
    pub std_re: f64,
    pub mean_abs_re: f64,
    pub n: usize,
    pub n_failed: usize,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for l in &self.levels {
            for (h, s) in l.stats.iter().enumerate() {
                rows.push(SweepRow {
                    method: self.method.clone(),
                    variable: self.variable.as_str(),
                    level: l.level,
                    target: target_name(self.kind, h),
                    mean_re: s.mean,
                    std_re: s.std,
                    mean_abs_re: s.mean_abs,
                    n: s.n,
                    n_failed: s.n_failed,
                });
            }
        }
        rows
    }
}

/// Renders `reps` fresh patches of the fixed structure per level and
/// measures them. Repetition `r` uses the same random structure and
/// acquisition streams at every level, so levels differ only in the swept
/// variable.
pub fn sweep(config: &SweepConfig, measurer: &Measurer<'_>) -> Result<SweepResult> {
    config.validate()?;
    measurer.check_kind(config.kind)?;
    let cells: Vec<(usize, usize)> = (0..config.levels.len())
        .flat_map(|l| (0..config.reps).map(move |r| (l, r)))
        .collect();
    let patches: Vec<LabeledPatch> = cells
        .par_iter()
        .map(|&(l, r)| {
            let (lumen, wall, params) = config.cell(config.levels[l]);
            let rep = r as u64;
            let model = sample_model_with_size(
                config.kind,
                lumen,
                wall,
                &mut stream(config.seed, rep, 0, Stage::Sweep),
            );
            let img = simulate(
                &model,
                &params,
                &mut stream(config.seed, rep, 0, Stage::Texture),
                &mut stream(config.seed, rep, 0, Stage::Noise),
            )?;
            Ok(LabeledPatch {
                pixels: img.values().iter().map(|&v| v as f32).collect(),
                label_lumen: lumen,
                label_wall: wall,
                kind: config.kind,
                model_id: l as u64,
                replica_id: r as u32,
            })
        })
        .collect::<Result<_>>()?;
    let est = estimate(measurer, &patches)?;
    let heads = config.kind.outputs();
    let mut levels = Vec::with_capacity(config.levels.len());
    for (l, &level) in config.levels.iter().enumerate() {
        let range = l * config.reps..(l + 1) * config.reps;
        let mut stats = Vec::with_capacity(heads);
        for h in 0..heads {
            let errors: Vec<Option<f64>> = range
                .clone()
                .map(|i| {
                    let truth = patches[i].targets()[h];
                    est[i][h].map(|e| relative_error(truth, e)).transpose()
                })
                .collect::<Result<_>>()?;
            stats.push(ErrorStats::from_errors(&errors));
        }
        levels.push(SweepLevel { level, stats });
    }
    Ok(SweepResult {
        kind: config.kind,
        variable: config.variable,
        method: measurer.name().to_string(),
        reps: config.reps,
        levels,
    })
}
