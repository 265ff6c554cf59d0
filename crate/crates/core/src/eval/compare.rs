use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{grouped_table, Bin};
use crate::error::{Error, Result};
use crate::generator::{Kind, LabeledPatch};
use crate::measure::{measure, MeasureConfig, MeasurementResult, Method};
use crate::nn::{predict, Network};

/// Anything that turns patches into size estimates.
#[derive(Debug, Clone, Copy)]
pub enum Measurer<'a> {
    Classical(Method, MeasureConfig),
    Cnr(&'a Network<f32>),
}

impl Measurer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Measurer::Classical(m, _) => m.as_str(),
            Measurer::Cnr(_) => "cnr",
        }
    }

    /// Kind the measurer is bound to; classical methods handle both.
    pub fn kind(&self) -> Option<Kind> {
        match self {
            Measurer::Classical(..) => None,
            Measurer::Cnr(net) => Some(net.config().kind),
        }
    }

    pub fn check_kind(&self, kind: Kind) -> Result<()> {
        match self.kind() {
            Some(k) if k != kind => Err(Error::config(format!(
                "{} model cannot measure {kind} patches",
                k
            ))),
            _ => Ok(()),
        }
    }
}

fn heads(result: &MeasurementResult, kind: Kind) -> Vec<Option<f64>> {
    match kind {
        Kind::Vessel => vec![result.lumen_radius],
        Kind::Airway => vec![result.lumen_radius, result.wall_thickness],
    }
}

/// Per-patch estimates, one entry per output head; `None` marks a failed
/// measurement.
pub fn estimate(measurer: &Measurer<'_>, patches: &[LabeledPatch]) -> Result<Vec<Vec<Option<f64>>>> {
    let Some(kind) = patches.first().map(|p| p.kind) else {
        return Ok(Vec::new());
    };
    if patches.iter().any(|p| p.kind != kind) {
        return Err(Error::invalid("patches mix airways and vessels"));
    }
    measurer.check_kind(kind)?;
    match measurer {
        Measurer::Classical(method, cfg) => Ok(patches
            .par_iter()
            .map(|p| heads(&measure(&p.to_grid(), kind, *method, cfg), kind))
            .collect()),
        Measurer::Cnr(net) => Ok(predict(*net, patches)?
            .into_iter()
            .map(|v| v.into_iter().map(Some).collect())
            .collect()),
    }
}

pub fn target_name(kind: Kind, head: usize) -> &'static str {
    match (kind, head) {
        (Kind::Vessel, _) => "radius",
        (Kind::Airway, 0) => "lumen",
        (Kind::Airway, _) => "wall",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub target: String,
    pub bin: String,
    pub mean_re: f64,
    pub std_re: f64,
    pub mean_abs_re: f64,
    pub n: usize,
    pub n_failed: usize,
}

/// Size-binned signed RE per method and output head. Each head is binned by
/// its own true value.
pub fn compare_methods(
    patches: &[LabeledPatch],
    estimates: &[(String, Vec<Vec<Option<f64>>>)],
    bins: &[Bin],
) -> Result<Vec<CompareRow>> {
    let Some(kind) = patches.first().map(|p| p.kind) else {
        return Ok(Vec::new());
    };
    let truths: Vec<Vec<f64>> = patches.iter().map(|p| p.targets()).collect();
    let mut rows = Vec::new();
    for (method, est) in estimates {
        if est.len() != patches.len() {
            return Err(Error::invalid(format!(
                "{method}: {} estimates for {} patches",
                est.len(),
                patches.len()
            )));
        }
        for h in 0..kind.outputs() {
            let t: Vec<f64> = truths.iter().map(|v| v[h]).collect();
            let e: Vec<Option<f64>> = est.iter().map(|v| v.get(h).copied().flatten()).collect();
            for b in grouped_table(&t, &e, bins)?.bins {
                rows.push(CompareRow {
                    method: method.clone(),
                    target: target_name(kind, h).to_string(),
                    bin: b.bin.label,
                    mean_re: b.stats.mean,
                    std_re: b.stats.std,
                    mean_abs_re: b.stats.mean_abs,
                    n: b.stats.n,
                    n_failed: b.stats.n_failed,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureRow {
    pub model_id: u64,
    pub replica_id: u32,
    pub true_lumen: f64,
    pub true_wall: Option<f64>,
    pub est_lumen: Option<f64>,
    pub est_wall: Option<f64>,
    pub n_valid_rays: usize,
}

/// Classical measurements of every patch, in dataset order.
pub fn measure_rows(patches: &[LabeledPatch], method: Method, cfg: &MeasureConfig) -> Vec<MeasureRow> {
    patches
        .par_iter()
        .map(|p| {
            let r = measure(&p.to_grid(), p.kind, method, cfg);
            MeasureRow {
                model_id: p.model_id,
                replica_id: p.replica_id,
                true_lumen: p.label_lumen,
                true_wall: p.label_wall,
                est_lumen: r.lumen_radius,
                est_wall: r.wall_thickness,
                n_valid_rays: r.n_valid_rays,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub model_id: u64,
    pub replica_id: u32,
    pub true_lumen: f64,
    pub true_wall: Option<f64>,
    pub est_lumen: f64,
    pub est_wall: Option<f64>,
}

pub fn predict_rows(net: &Network<f32>, patches: &[LabeledPatch]) -> Result<Vec<EstimateRow>> {
    let preds = predict(net, patches)?;
    Ok(patches
        .iter()
        .zip(preds)
        .map(|(p, y)| EstimateRow {
            model_id: p.model_id,
            replica_id: p.replica_id,
            true_lumen: p.label_lumen,
            true_wall: p.label_wall,
            est_lumen: y[0],
            est_wall: y.get(1).copied(),
        })
        .collect())
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::default_bins;
    use crate::generator::{generate_patches, GenConfig};

    #[test]
    fn identical_estimates_give_identical_rows() {
        let ds = generate_patches(&GenConfig::new(Kind::Airway, 4, 2, 3)).unwrap();
        let est = estimate(&Measurer::Classical(Method::Fwhm, MeasureConfig::default()), &ds.patches).unwrap();
        let rows = compare_methods(
            &ds.patches,
            &[("a".into(), est.clone()), ("b".into(), est)],
            &default_bins(),
        )
        .unwrap();
        assert_eq!(rows.len(), 12);
        for (x, y) in rows[..6].iter().zip(&rows[6..]) {
            assert_eq!((x.mean_re.to_bits(), x.n, x.n_failed), (y.mean_re.to_bits(), y.n, y.n_failed));
        }
        let total: usize = rows[..3].iter().map(|r| r.n + r.n_failed).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn cnr_kind_mismatch_is_a_config_error() {
        let net = Network::<f32>::init(crate::nn::NetworkConfig::tiny(Kind::Airway), 1).unwrap();
        let ds = generate_patches(&GenConfig::new(Kind::Vessel, 1, 1, 3)).unwrap();
        assert!(matches!(estimate(&Measurer::Cnr(&net), &ds.patches), Err(Error::Config(_))));
    }
}
