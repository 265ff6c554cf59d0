use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use subvox_core::eval::{
    compare_methods, default_bins, estimate, measure_rows, predict_rows, sweep, write_csv, Measurer, SweepConfig,
    SweepVariable,
};
use subvox_core::generator::{generate_dataset, read_dataset, AcquisitionRanges, GenConfig};
use subvox_core::measure::{MeasureConfig, Method};
use subvox_core::nn::{checkpoint, train, AugmentConfig, LossWeights, Network, NetworkConfig, TrainConfig};
use subvox_core::repro::{self, log_rows, Recipe};
use subvox_core::Kind;

use crate::args::*;

#[derive(Serialize)]
struct Echo<'a, T> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

/// Writes the resolved arguments as JSON at `path`.
fn echo<T: Serialize>(command: &str, args: &T, path: &Path) -> Result<()> {
    let body = Echo {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let text = serde_json::to_string_pretty(&body)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    tracing::info!(path = %path.display(), "resolved config written");
    Ok(())
}

/// `<file>.resolved.json` beside a file output.
fn beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".resolved.json");
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Measure(a) => measure(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Repro(a) => repro_cmd(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    if !(a.psf_min > 0.0 && a.psf_max >= a.psf_min) {
        bail!("PSF range must satisfy 0 < psf-min <= psf-max");
    }
    if a.noise < 0.0 {
        bail!("noise must be non-negative");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    echo("gen", &a, &a.out.join("resolved.json"))?;
    let mut cfg = GenConfig::new(a.kind, a.n_models, a.replicas, a.seed);
    cfg.acquisition = AcquisitionRanges {
        psf_min: a.psf_min,
        psf_max: a.psf_max,
        noise_sigma: a.noise,
        texture: !a.no_texture,
    };
    let ds = generate_dataset(&cfg, &a.out)?;
    tracing::info!(patches = ds.len(), out = %a.out.display(), "dataset written");
    Ok(())
}

fn measure(a: MeasureArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    echo("measure", &a, &beside(&a.out))?;
    let ds = read_dataset(&a.input)?;
    let cfg = MeasureConfig {
        n_rays: a.n_rays,
        quorum: a.quorum,
        step: a.step,
        ..MeasureConfig::default()
    };
    if cfg.n_rays == 0 || cfg.quorum > cfg.n_rays || !(cfg.step > 0.0) {
        bail!("need n-rays > 0, quorum <= n-rays and step > 0");
    }
    let rows = measure_rows(&ds.patches, a.method, &cfg);
    write_csv(&a.out, &rows)?;
    let failed = rows.iter().filter(|r| r.est_lumen.is_none()).count();
    tracing::info!(patches = rows.len(), failed, "measurements written");
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    echo("train", &a, &beside(&a.out))?;
    let ds = read_dataset(&a.data)?;
    if ds.kind != a.kind {
        bail!("configuration error: --kind {} but the dataset holds {} patches", a.kind, ds.kind);
    }
    let network = match a.preset {
        Preset::Desk => NetworkConfig::desk(a.kind),
        Preset::Full => NetworkConfig::full(a.kind),
        Preset::Tiny => NetworkConfig::tiny(a.kind),
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        groups_per_batch: a.groups_per_batch,
        seed: a.seed,
        val_fraction: a.val_fraction,
        augment: if a.no_augment {
            AugmentConfig::none()
        } else {
            AugmentConfig::default()
        },
        weights: LossWeights {
            lambda: a.lambda,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    };
    let outcome = train(&ds, network, &cfg)?;
    checkpoint::save(&outcome.network, &a.out)?;
    let mut log = a.out.as_os_str().to_owned();
    log.push(".log.csv");
    write_csv(Path::new(&log), &log_rows(&outcome.log))?;
    tracing::info!(best_epoch = outcome.best_epoch, out = %a.out.display(), "model written");
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    echo("predict", &a, &beside(&a.out))?;
    let net: Network<f32> = checkpoint::load(&a.model)?;
    let ds = read_dataset(&a.input)?;
    write_csv(&a.out, &predict_rows(&net, &ds.patches)?)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    echo("eval", &a, &beside(&a.out))?;
    let net: Network<f32> = checkpoint::load(&a.model)?;
    let ds = read_dataset(&a.data)?;
    let cfg = MeasureConfig::default();
    let mut estimates = Vec::new();
    for m in [
        Measurer::Cnr(&net),
        Measurer::Classical(Method::Fwhm, cfg),
        Measurer::Classical(Method::Zcsd, cfg),
    ] {
        estimates.push((m.name().to_string(), estimate(&m, &ds.patches)?));
    }
    write_csv(&a.out, &compare_methods(&ds.patches, &estimates, &default_bins())?)?;
    Ok(())
}

fn default_levels(variable: SweepVariable, kind: Kind) -> Vec<f64> {
    let range = |a: f64, b: f64, s: f64| subvox_core::eval::levels(a, b, s).expect("valid levels");
    match (variable, kind) {
        (SweepVariable::Noise, _) => range(0.0, 40.0, 5.0),
        (SweepVariable::Psf, _) => range(0.4, 0.9, 0.1),
        (SweepVariable::Size, Kind::Vessel) => range(0.5, 3.5, 0.5),
        (SweepVariable::Size, Kind::Airway) => range(0.5, 4.5, 0.5),
        (SweepVariable::Wall, _) => range(0.5, 2.0, 0.25),
    }
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    echo("sweep", &a, &beside(&a.out))?;
    let levels = a.levels.clone().unwrap_or_else(|| default_levels(a.variable, a.kind));
    let mut sc = SweepConfig::new(a.kind, a.variable, levels);
    sc.reps = a.reps;
    sc.seed = a.seed;
    sc.texture = !a.no_texture;
    if let Some(v) = a.lumen {
        sc.lumen_radius = v;
    }
    if a.wall.is_some() {
        sc.wall_thickness = a.wall;
    }
    if let Some(v) = a.psf {
        sc.psf_sigma = v;
    }
    if let Some(v) = a.noise {
        sc.noise_sigma = v;
    }
    let net: Option<Network<f32>> = match (a.measurer, &a.model) {
        (MeasurerName::Cnr, Some(p)) => Some(checkpoint::load(p)?),
        (MeasurerName::Cnr, None) => bail!("--measurer cnr needs --model"),
        _ => None,
    };
    let cfg = MeasureConfig::default();
    let measurer = match a.measurer {
        MeasurerName::Fwhm => Measurer::Classical(Method::Fwhm, cfg),
        MeasurerName::Zcsd => Measurer::Classical(Method::Zcsd, cfg),
        MeasurerName::Cnr => Measurer::Cnr(net.as_ref().expect("loaded above")),
    };
    let result = sweep(&sc, &measurer)?;
    write_csv(&a.out, &result.rows())?;
    Ok(())
}

fn repro_cmd(a: ReproArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let recipe = Recipe::for_scale(a.scale, a.seed);
    #[derive(Serialize)]
    struct Resolved<'a> {
        cli: &'a ReproArgs,
        recipe: &'a Recipe,
    }
    echo(
        "repro",
        &Resolved {
            cli: &a,
            recipe: &recipe,
        },
        &a.out.join("resolved.json"),
    )?;
    let out = repro::run(&recipe, &a.out)?;
    for f in &out.files {
        println!("{}", f.display());
    }
    Ok(())
}
