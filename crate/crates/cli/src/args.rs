use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subvox_core::eval::SweepVariable;
use subvox_core::measure::Method;
use subvox_core::repro::Scale;
use subvox_core::Kind;

#[derive(Debug, Parser)]
#[command(name = "subvox", version, about = "Sub-voxel airway and vessel measurement on synthetic CT patches")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of labelled replica groups.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Measure a dataset with FWHM or ZCSD.
    #[command(args_override_self = true)]
    Measure(MeasureArgs),
    /// Train the convolutional regressor.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Predict sizes with a trained model.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Size-binned comparison of CNR, FWHM and ZCSD on a dataset.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Relative error as one acquisition or size parameter varies.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Run the bundled generate, train, measure and compare recipe.
    #[command(args_override_self = true)]
    Repro(ReproArgs),
}

fn parse<T: std::str::FromStr<Err = subvox_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: subvox_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MeasurerName {
    Fwhm,
    Zcsd,
    Cnr,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_parser = parse::<Kind>)]
    pub kind: Kind,
    #[arg(long)]
    pub n_models: u64,
    #[arg(long, default_value_t = 25)]
    pub replicas: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bound of the PSF standard deviation (mm).
    #[arg(long, default_value_t = 0.5)]
    pub psf_min: f64,
    #[arg(long, default_value_t = 0.875)]
    pub psf_max: f64,
    /// Noise standard deviation (HU).
    #[arg(long, default_value_t = 25.0)]
    pub noise: f64,
    /// Flat parenchyma instead of textured.
    #[arg(long)]
    pub no_texture: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureArgs {
    #[arg(long, value_parser = parse::<Method>)]
    pub method: Method,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub n_rays: usize,
    #[arg(long, default_value_t = 32)]
    pub quorum: usize,
    /// Ray sample spacing (mm).
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse::<Kind>)]
    pub kind: Kind,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 40)]
    pub groups_per_batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    /// Disable data augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse::<SweepVariable>)]
    pub variable: SweepVariable,
    #[arg(long, value_parser = parse::<Kind>)]
    pub kind: Kind,
    #[arg(long, value_enum)]
    pub measurer: MeasurerName,
    /// Checkpoint, required for the cnr measurer.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated levels; defaults depend on the variable.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Fixed lumen (vessel) radius in mm.
    #[arg(long)]
    pub lumen: Option<f64>,
    /// Fixed airway wall thickness in mm.
    #[arg(long)]
    pub wall: Option<f64>,
    /// Fixed PSF standard deviation in mm.
    #[arg(long)]
    pub psf: Option<f64>,
    /// Fixed noise standard deviation in HU.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub no_texture: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproArgs {
    #[arg(long, value_parser = parse::<Scale>, default_value = "desk")]
    pub scale: Scale,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "repro")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
