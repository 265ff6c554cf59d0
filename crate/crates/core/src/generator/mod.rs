//! Model-based generator of labelled airway and vessel patches.

mod dataset;
mod degrade;
mod model;
mod render;

pub use dataset::{
    generate_dataset, generate_patches, read_dataset, write_dataset, Dataset, GenConfig, LabelRecord,
    Sidecar, PATCH_FILE, SIDECAR_FILE, SIDECAR_VERSION,
};
pub use degrade::{add_noise, apply_psf, crop_center, downsample, PATCH_SIZE};
pub use model::{
    nominal_radius, resample_confounders, sample_model, sample_model_with_size, wall_range, ChestWallRegion,
    EllipseSpec, Interval, Kind, Neighbor, Ranges, StructureModel, PATCH_HALF_WIDTH_MM,
};
pub use render::{
    correlated_field, coverage_map, paint_ellipse, render_high_res, skew_scale, Parenchyma, HIGH_RES_SIZE,
};

use rand::Rng;

use crate::error::Result;
use crate::image::ImageGrid;
use crate::rng::{stream, Stage};

/// Acquisition parameters for one rendered patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    /// PSF standard deviation in mm.
    pub psf_sigma: f64,
    /// Delivered noise standard deviation in HU.
    pub noise_sigma: f64,
    /// Noise smoothing in CT pixels.
    pub noise_smooth_sigma: f64,
    pub parenchyma_mean: f64,
    pub parenchyma_sigma: f64,
    /// Texture smoothing in high-res pixels.
    pub parenchyma_smooth_sigma: f64,
    pub rng_seed: u64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            psf_sigma: 0.7,
            noise_sigma: 25.0,
            noise_smooth_sigma: 2.0,
            parenchyma_mean: -900.0,
            parenchyma_sigma: 150.0,
            parenchyma_smooth_sigma: 5.0,
            rng_seed: 0,
        }
    }
}

impl DegradationParams {
    pub fn parenchyma(&self) -> Parenchyma {
        Parenchyma {
            mean: self.parenchyma_mean,
            sigma: self.parenchyma_sigma,
            smooth_sigma_px: self.parenchyma_smooth_sigma,
        }
    }
}

/// Ranges the generator draws per-replica acquisition parameters from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionRanges {
    pub psf_min: f64,
    pub psf_max: f64,
    pub noise_sigma: f64,
    pub texture: bool,
}

impl Default for AcquisitionRanges {
    fn default() -> Self {
        Self {
            psf_min: 0.5,
            psf_max: 0.875,
            noise_sigma: 25.0,
            texture: true,
        }
    }
}

impl AcquisitionRanges {
    pub fn draw(&self, rng: &mut impl Rng, rng_seed: u64) -> DegradationParams {
        let base = DegradationParams::default();
        DegradationParams {
            psf_sigma: Interval::new(self.psf_min, self.psf_max).sample(rng),
            noise_sigma: self.noise_sigma,
            parenchyma_sigma: if self.texture { base.parenchyma_sigma } else { 0.0 },
            rng_seed,
            ..base
        }
    }
}

/// Full acquisition chain: render, down-sample to 0.5 mm, blur, add noise and
/// crop to the final 32x32 patch.
pub fn simulate(
    model: &StructureModel,
    params: &DegradationParams,
    texture_rng: &mut impl Rng,
    noise_rng: &mut impl Rng,
) -> Result<ImageGrid> {
    let hi = render_high_res(model, &params.parenchyma(), texture_rng);
    let ct = downsample(&hi, 10)?;
    let blurred = apply_psf(&ct, params.psf_sigma);
    let noisy = add_noise(&blurred, params.noise_sigma, params.noise_smooth_sigma, noise_rng);
    crop_center(&noisy, PATCH_SIZE)
}

/// One final patch with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    /// Row-major 32x32 HU values.
    pub pixels: Vec<f32>,
    pub label_lumen: f64,
    pub label_wall: Option<f64>,
    pub kind: Kind,
    pub model_id: u64,
    pub replica_id: u32,
}

impl LabeledPatch {
    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid::new(
            PATCH_SIZE,
            PATCH_SIZE,
            crate::image::CT_SPACING,
            self.pixels.iter().map(|&v| v as f64).collect(),
        )
        .expect("patch is 32x32")
    }

    /// Labels as a vector: `[lumen]` or `[lumen, wall]`.
    pub fn targets(&self) -> Vec<f64> {
        let mut t = vec![self.label_lumen];
        if let Some(w) = self.label_wall {
            t.push(w);
        }
        t
    }
}

/// Renders one replica of `model` from the streams of `(seed, model_id, replica_id)`.
pub fn render_replica(
    model: &StructureModel,
    acquisition: &AcquisitionRanges,
    seed: u64,
    model_id: u64,
    replica_id: u32,
) -> Result<LabeledPatch> {
    let r = replica_id as u64;
    let variant = resample_confounders(model, &mut stream(seed, model_id, r, Stage::Confounders));
    let params = acquisition.draw(&mut stream(seed, model_id, r, Stage::Degradation), seed);
    let img = simulate(
        &variant,
        &params,
        &mut stream(seed, model_id, r, Stage::Texture),
        &mut stream(seed, model_id, r, Stage::Noise),
    )?;
    Ok(LabeledPatch {
        pixels: img.values().iter().map(|&v| v as f32).collect(),
        label_lumen: model.lumen_radius,
        label_wall: model.wall_thickness,
        kind: model.kind,
        model_id,
        replica_id,
    })
}

/// `m` replicas of one geometric model. The central dimensions are fixed;
/// PSF, noise, neighbours and skew vary per replica.
pub fn generate_replicas(
    model: &StructureModel,
    m: u32,
    acquisition: &AcquisitionRanges,
    seed: u64,
    model_id: u64,
) -> Result<Vec<LabeledPatch>> {
    if m == 0 {
        return Err(crate::error::Error::invalid("replica count must be at least 1"));
    }
    (0..m)
        .map(|j| render_replica(model, acquisition, seed, model_id, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicas_share_labels_and_differ_in_pixels() {
        let model = sample_model(Kind::Airway, &mut stream(2, 0, 0, Stage::Model));
        let reps = generate_replicas(&model, 6, &AcquisitionRanges::default(), 2, 0).unwrap();
        assert_eq!(reps.len(), 6);
        for (j, p) in reps.iter().enumerate() {
            assert_eq!(p.replica_id as usize, j);
            assert_eq!(p.label_lumen.to_bits(), model.lumen_radius.to_bits());
            assert_eq!(p.label_wall.map(f64::to_bits), model.wall_thickness.map(f64::to_bits));
            assert_eq!(p.pixels.len(), 32 * 32);
        }
        for a in 0..reps.len() {
            for b in a + 1..reps.len() {
                assert_ne!(reps[a].pixels, reps[b].pixels);
            }
        }
        assert_eq!(generate_replicas(&model, 1, &AcquisitionRanges::default(), 2, 0).unwrap().len(), 1);
        assert!(generate_replicas(&model, 0, &AcquisitionRanges::default(), 2, 0).is_err());
    }

    #[test]
    fn acquisition_draw_stays_in_range() {
        let mut rng = stream(1, 0, 0, Stage::Degradation);
        let acq = AcquisitionRanges::default();
        for _ in 0..1000 {
            let p = acq.draw(&mut rng, 0);
            assert!((0.5..=0.875).contains(&p.psf_sigma));
            assert_eq!(p.noise_sigma, 25.0);
        }
    }
}
