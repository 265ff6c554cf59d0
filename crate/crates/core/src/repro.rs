//! Bundled end-to-end recipe: generate, train, measure, compare, sweep.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{
    compare_methods, default_bins, estimate, levels, sweep, write_csv, CompareRow, Measurer, SweepConfig,
    SweepResult, SweepVariable,
};
use crate::generator::{generate_dataset, Dataset, GenConfig, Kind};
use crate::measure::{MeasureConfig, Method};
use crate::nn::{checkpoint, train, EpochLog, Network, NetworkConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Smoke,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "smoke" => Ok(Scale::Smoke),
            other => Err(Error::invalid(format!("unknown scale `{other}` (desk|smoke)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recipe {
    pub scale: Scale,
    pub seed: u64,
    pub replicas: u32,
    pub train_models: u64,
    pub test_models: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub sweep_reps: usize,
    pub noise_levels: Vec<f64>,
    pub psf_levels: Vec<f64>,
    pub size_levels: Vec<f64>,
}

impl Recipe {
    /// Single-core desk scale: 800 training models and 200 test models per
    /// kind, 25 replicas each.
    pub fn desk(seed: u64) -> Self {
        Self {
            scale: Scale::Desk,
            seed,
            replicas: 25,
            train_models: 800,
            test_models: 200,
            network: NetworkConfig::desk(Kind::Vessel),
            train: TrainConfig {
                epochs: 40,
                groups_per_batch: 40,
                seed,
                ..TrainConfig::default()
            },
            sweep_reps: 100,
            noise_levels: levels(0.0, 40.0, 5.0).expect("valid levels"),
            psf_levels: levels(0.4, 0.9, 0.1).expect("valid levels"),
            size_levels: levels(0.5, 3.5, 0.5).expect("valid levels"),
        }
    }

    /// Seconds-scale run that exercises every stage.
    pub fn smoke(seed: u64) -> Self {
        Self {
            scale: Scale::Smoke,
            replicas: 3,
            train_models: 6,
            test_models: 3,
            network: NetworkConfig::tiny(Kind::Vessel),
            train: TrainConfig {
                epochs: 2,
                groups_per_batch: 2,
                seed,
                ..TrainConfig::default()
            },
            sweep_reps: 3,
            noise_levels: vec![0.0, 40.0],
            psf_levels: vec![0.4, 0.9],
            size_levels: vec![0.5, 2.0],
            ..Self::desk(seed)
        }
    }

    pub fn for_scale(scale: Scale, seed: u64) -> Self {
        match scale {
            Scale::Desk => Self::desk(seed),
            Scale::Smoke => Self::smoke(seed),
        }
    }

    pub fn network_for(&self, kind: Kind) -> NetworkConfig {
        NetworkConfig {
            kind,
            outputs: kind.outputs(),
            ..self.network.clone()
        }
    }

    fn kind_offset(kind: Kind) -> u64 {
        match kind {
            Kind::Vessel => 0,
            Kind::Airway => 1,
        }
    }

    /// Generation config of the training (`test == false`) or test split.
    pub fn gen_config(&self, kind: Kind, test: bool) -> GenConfig {
        let n = if test { self.test_models } else { self.train_models };
        let seed = self.seed.wrapping_mul(4).wrapping_add(2 * Self::kind_offset(kind) + test as u64);
        GenConfig::new(kind, n, self.replicas, seed)
    }
}

/// Outputs of one kind's pipeline.
#[derive(Debug, Clone)]
pub struct KindArtifacts {
    pub kind: Kind,
    pub test: Dataset,
    pub network: Network<f32>,
    pub log: Vec<EpochLog>,
    pub estimates: Vec<(String, Vec<Vec<Option<f64>>>)>,
    pub table: Vec<CompareRow>,
}

/// Generates both splits, trains, and compares CNR with FWHM and ZCSD on the
/// test split. Datasets, the checkpoint, the training log and the table are
/// written under `out`.
pub fn run_kind(recipe: &Recipe, kind: Kind, out: &Path) -> Result<KindArtifacts> {
    let name = kind.as_str();
    let data_dir = out.join("data");
    let train_dir = data_dir.join(format!("{name}_train"));
    let test_dir = data_dir.join(format!("{name}_test"));
    for d in [&train_dir, &test_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    tracing::info!(kind = name, "generating datasets");
    let train_ds = generate_dataset(&recipe.gen_config(kind, false), &train_dir)?;
    let test = generate_dataset(&recipe.gen_config(kind, true), &test_dir)?;

    tracing::info!(kind = name, "training");
    let outcome = train(&train_ds, recipe.network_for(kind), &recipe.train)?;
    drop(train_ds);
    let model_dir = out.join("models");
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    checkpoint::save(&outcome.network, &model_dir.join(format!("{name}.bin")))?;
    write_csv(&model_dir.join(format!("{name}_train_log.csv")), &log_rows(&outcome.log))?;

    tracing::info!(kind = name, "measuring test split");
    let cfg = MeasureConfig::default();
    let mut estimates = Vec::new();
    for m in [
        Measurer::Cnr(&outcome.network),
        Measurer::Classical(Method::Fwhm, cfg),
        Measurer::Classical(Method::Zcsd, cfg),
    ] {
        estimates.push((m.name().to_string(), estimate(&m, &test.patches)?));
    }
    let table = compare_methods(&test.patches, &estimates, &default_bins())?;
    write_csv(&out.join(format!("table_{name}.csv")), &table)?;
    Ok(KindArtifacts {
        kind,
        test,
        network: outcome.network,
        log: outcome.log,
        estimates,
        table,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_total: f64,
    pub train_mu: f64,
    pub train_sigma: f64,
    pub val_total: Option<f64>,
    pub val_mean_abs_re: String,
}

pub fn log_rows(log: &[EpochLog]) -> Vec<LogRow> {
    log.iter()
        .map(|e| LogRow {
            epoch: e.epoch,
            train_total: e.train_total,
            train_mu: e.train_mu,
            train_sigma: e.train_sigma,
            val_total: e.val_total,
            val_mean_abs_re: e
                .val_mean_abs_re
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

/// Vessel sweeps: noise at σ_s = 1.3 mm around a 2.0 mm vessel, PSF around
/// a 0.5 mm vessel, and size, for each measurer.
pub fn run_sweeps(recipe: &Recipe, vessel_net: &Network<f32>, out: &Path) -> Result<Vec<SweepResult>> {
    let cfg = MeasureConfig::default();
    let measurers = [
        Measurer::Cnr(vessel_net),
        Measurer::Classical(Method::Fwhm, cfg),
        Measurer::Classical(Method::Zcsd, cfg),
    ];
    let plans = [
        (SweepVariable::Noise, recipe.noise_levels.clone(), 2.0),
        (SweepVariable::Psf, recipe.psf_levels.clone(), 0.5),
        (SweepVariable::Size, recipe.size_levels.clone(), 2.0),
    ];
    let mut results = Vec::new();
    for (variable, lv, radius) in plans {
        let mut sc = SweepConfig::new(Kind::Vessel, variable, lv);
        sc.reps = recipe.sweep_reps;
        sc.lumen_radius = radius;
        sc.seed = recipe.seed.wrapping_add(1000);
        let mut rows = Vec::new();
        for m in &measurers {
            tracing::info!(variable = variable.as_str(), method = m.name(), "sweep");
            let r = sweep(&sc, m)?;
            rows.extend(r.rows());
            results.push(r);
        }
        write_csv(&out.join(format!("sweep_{}_vessel.csv", variable.as_str())), &rows)?;
    }
    Ok(results)
}

#[derive(Debug)]
pub struct ReproOutput {
    pub vessel: KindArtifacts,
    pub airway: KindArtifacts,
    pub sweeps: Vec<SweepResult>,
    pub files: Vec<PathBuf>,
}

pub fn run(recipe: &Recipe, out: &Path) -> Result<ReproOutput> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let vessel = run_kind(recipe, Kind::Vessel, out)?;
    let airway = run_kind(recipe, Kind::Airway, out)?;
    let sweeps = run_sweeps(recipe, &vessel.network, out)?;
    let files = ["table_vessel.csv", "table_airway.csv", "sweep_noise_vessel.csv", "sweep_psf_vessel.csv", "sweep_size_vessel.csv"]
        .iter()
        .map(|f| out.join(f))
        .collect();
    Ok(ReproOutput {
        vessel,
        airway,
        sweeps,
        files,
    })
}
