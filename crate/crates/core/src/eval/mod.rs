//! Relative-error statistics, size-binned tables, method comparisons and
//! parameter sweeps.

mod compare;
mod sweep;

pub use compare::{
    compare_methods, estimate, measure_rows, predict_rows, write_csv, CompareRow, EstimateRow, MeasureRow, Measurer,
};
pub use sweep::{levels, sweep, SweepConfig, SweepLevel, SweepResult, SweepRow, SweepVariable};

use serde::Serialize;

use crate::error::{Error, Result};

/// Signed relative error in percent.
pub fn relative_error(truth: f64, estimate: f64) -> Result<f64> {
    if !(truth > 0.0 && truth.is_finite()) {
        return Err(Error::invalid(format!("true size must be positive, got {truth}")));
    }
    Ok(100.0 * (estimate - truth) / truth)
}

pub fn abs_relative_error(truth: f64, estimate: f64) -> Result<f64> {
    relative_error(truth, estimate).map(f64::abs)
}

/// Moments of a set of relative errors; failed measurements are only counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub mean_abs: f64,
    pub n: usize,
    pub n_failed: usize,
}

impl ErrorStats {
    pub fn from_errors(errors: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = errors.iter().flatten().copied().collect();
        let n_failed = errors.len() - ok.len();
        if ok.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                mean_abs: f64::NAN,
                n: 0,
                n_failed,
            };
        }
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let var = ok.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            mean_abs: ok.iter().map(|e| e.abs()).sum::<f64>() / n,
            n: ok.len(),
            n_failed,
        }
    }
}

/// Half-open size interval `(lo, hi]` in mm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

impl Bin {
    pub fn new(label: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self {
            label: label.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, size: f64) -> bool {
        size > self.lo && size <= self.hi
    }
}

/// Thin, medium and thick bins: `(0, 0.7]`, `(0.7, 1.5]`, `(1.5, ∞)`.
pub fn default_bins() -> Vec<Bin> {
    vec![
        Bin::new("<=0.7", 0.0, 0.7),
        Bin::new("0.7-1.5", 0.7, 1.5),
        Bin::new(">1.5", 1.5, f64::INFINITY),
    ]
}

/// Index of the bin holding `size`, if any.
pub fn bin_index(bins: &[Bin], size: f64) -> Option<usize> {
    bins.iter().position(|b| b.contains(size))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinStats {
    pub bin: Bin,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedErrorTable {
    pub bins: Vec<BinStats>,
}

/// Signed RE statistics per size bin. `None` estimates are failures.
pub fn grouped_table(truths: &[f64], estimates: &[Option<f64>], bins: &[Bin]) -> Result<GroupedErrorTable> {
    if truths.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "{} truths but {} estimates",
            truths.len(),
            estimates.len()
        )));
    }
    let mut per_bin: Vec<Vec<Option<f64>>> = vec![Vec::new(); bins.len()];
    for (&t, e) in truths.iter().zip(estimates) {
        let b = bin_index(bins, t).ok_or_else(|| Error::invalid(format!("size {t} falls in no bin")))?;
        per_bin[b].push(e.map(|e| relative_error(t, e)).transpose()?);
    }
    Ok(GroupedErrorTable {
        bins: bins
            .iter()
            .zip(per_bin)
            .map(|(bin, errs)| BinStats {
                bin: bin.clone(),
                stats: ErrorStats::from_errors(&errs),
            })
            .collect(),
    })
}
