//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line
//! (bypassing output capture) before asserting.
//!
//! Criteria 6-8 share one desk-scale vessel and airway pipeline run.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subvox_core::eval::{
    bin_index, default_bins, estimate, grouped_table, levels, sweep, Bin, Measurer, SweepConfig, SweepVariable,
};
use subvox_core::generator::{
    downsample, generate_patches, render_high_res, sample_model, AcquisitionRanges, GenConfig, Parenchyma,
};
use subvox_core::measure::{measure, MeasureConfig, Method};
use subvox_core::nn::loss::ReplicaLoss;
use subvox_core::nn::{group_gradient, loss_mu, loss_sigma, LossWeights, Network, NetworkConfig};
use subvox_core::repro::{run_kind, KindArtifacts, Recipe};
use subvox_core::rng::{stream, Stage};
use subvox_core::{ImageGrid, Kind, StructureModel};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn check(n: u32, pass: bool, detail: String) {
    report(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

// ---------------------------------------------------------------- 1

/// Foreground area in mm² of a two-level image: anti-aliased pixels count by
/// their coverage, plus the plain count of pixels past the midpoint.
fn foreground_area(img: &ImageGrid, fg: f64, bg: f64) -> (f64, f64) {
    let px = 0.05 * 0.05;
    let coverage: f64 = img.values().iter().map(|v| (v - bg) / (fg - bg)).sum();
    let mid = 0.5 * (fg + bg);
    let over = img.values().iter().filter(|&&v| (v > mid) == (fg > bg)).count();
    (coverage * px, over as f64 * px)
}

fn rel_err(got: (f64, f64), want: f64) -> (f64, f64) {
    ((got.0 - want).abs() / want, (got.1 - want).abs() / want)
}

#[test]
fn criterion_1_generator_fidelity() {
    let start = Instant::now();
    let mut rng = stream(101, 0, 0, Stage::Model);
    let bg = -900.0;
    let flat = Parenchyma::flat(bg);
    let (mut worst, mut worst_thresholded): (f64, f64) = (0.0, 0.0);
    let mut worst_mean: f64 = 0.0;
    for i in 0..100 {
        let kind = if i % 2 == 0 { Kind::Vessel } else { Kind::Airway };
        let mut m = sample_model(kind, &mut rng);
        m.neighbors.clear();
        m.chest_wall_regions.clear();
        let stretch = 1.0 / m.skew.to_radians().cos();
        let inner = m.central_inner().area() * stretch;
        let img = render_high_res(&m, &flat, &mut rng);
        let errs = match kind {
            Kind::Vessel => vec![rel_err(foreground_area(&img, m.vessel_intensity, bg), inner)],
            Kind::Airway => {
                // one boundary per image: blank the lumen for the annulus and the wall for the lumen
                let annulus = m.central_outer().unwrap().area() * stretch - inner;
                let wall_only = StructureModel { lumen_intensity: bg, ..m.clone() };
                let lumen_only = StructureModel { wall_intensity: bg, ..m.clone() };
                let wall = foreground_area(&render_high_res(&wall_only, &flat, &mut rng), m.wall_intensity, bg);
                let lumen = foreground_area(&render_high_res(&lumen_only, &flat, &mut rng), m.lumen_intensity, bg);
                vec![rel_err(lumen, inner), rel_err(wall, annulus)]
            }
        };
        for (c, t) in errs {
            worst = worst.max(c);
            worst_thresholded = worst_thresholded.max(t);
        }
        let low = downsample(&img, 10).unwrap();
        worst_mean = worst_mean.max((low.mean() - img.mean()).abs());
    }
    let elapsed = start.elapsed();
    check(
        1,
        worst < 0.01 && worst_mean <= 1e-9 && elapsed < Duration::from_secs(60),
        format!(
            "max area error {:.3}% over 100 models ({:.3}% counting only pixels past the midpoint), \
             downsample mean drift {worst_mean:.2e}, {:.1}s",
            100.0 * worst,
            100.0 * worst_thresholded,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let d = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_subvox"))
            .args(["gen", "--kind", "airway", "--n-models", "6", "--replicas", "4", "--seed", "42", "--out"])
            .arg(&d)
            .env("SUBVOX_THREADS", threads)
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success());
        let read = |f: &str| std::fs::read(d.join(f)).unwrap();
        (read("patches.f32"), read("meta.json"))
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    check(
        2,
        a == b && a == c,
        format!("gen twice (1 worker) and once (4 workers): {} patch bytes compared", a.0.len()),
    );
}

// ---------------------------------------------------------------- 3

fn two_pass_variance(e: &[f64]) -> f64 {
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64
}

#[test]
fn criterion_3_loss_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let w = LossWeights::default();
    let mut worst: f64 = 0.0;
    let mut weighting_exact = true;
    for case in 0..1000 {
        let kind = if case % 2 == 0 { Kind::Vessel } else { Kind::Airway };
        let heads = kind.outputs();
        let groups = rng.random_range(1..8);
        let m = rng.random_range(1..12);
        let mut y = Vec::new();
        let mut p = Vec::new();
        let mut sizes = Vec::new();
        for _ in 0..groups {
            let t: Vec<f64> = (0..heads).map(|_| rng.random_range(0.3..5.0)).collect();
            for _ in 0..m {
                for v in &t {
                    y.push(*v);
                    p.push(v + rng.random_range(-1.5..1.5));
                }
            }
            sizes.push(t);
        }
        // accuracy term
        let mut mu = 0.0;
        for i in 0..y.len() {
            mu += (y[i] - p[i]).abs() / y[i];
        }
        mu /= (groups * m) as f64;
        worst = worst.max((loss_mu(&y, &p, heads).unwrap() - mu).abs());
        // precision term, per head
        let mut direct_penalty = 0.0;
        for h in 0..heads {
            let mut sigma = 0.0;
            for g in 0..groups {
                let e: Vec<f64> = (0..m)
                    .map(|j| {
                        let i = (g * m + j) * heads + h;
                        y[i] - p[i]
                    })
                    .collect();
                let v = two_pass_variance(&e);
                sigma += v;
                let size = sizes[g][h];
                let omega = match (kind, h) {
                    (Kind::Vessel, _) => if size < 1.0 { 3.0 } else { 1.0 },
                    (Kind::Airway, 0) => if size < 1.0 { 1.5 } else { 1.0 },
                    _ => if size < 1.0 { 3.0 } else { 1.0 },
                };
                direct_penalty += omega * v;
            }
            sigma /= groups as f64;
            let yh: Vec<f64> = y.iter().skip(h).step_by(heads).copied().collect();
            let ph: Vec<f64> = p.iter().skip(h).step_by(heads).copied().collect();
            worst = worst.max((loss_sigma(&yh, &ph, m).unwrap() - sigma).abs());
        }
        direct_penalty /= groups as f64;
        let r = ReplicaLoss::new(kind, m, w).evaluate(&y, &p).unwrap();
        worst = worst.max((r.penalty - direct_penalty).abs());
        weighting_exact &= r.total == r.mu + w.lambda * r.penalty;
    }
    // worked examples of the weighted total
    let vessel = |r: f64| {
        let rep = ReplicaLoss::new(Kind::Vessel, 2, w).evaluate(&[r, r], &[r - 1.0, r + 1.0]).unwrap();
        w.lambda * rep.penalty
    };
    let examples = vessel(0.8) == 6.0 && vessel(1.5) == 2.0;
    check(
        3,
        worst < 1e-10 && weighting_exact && examples,
        format!("max deviation from two-pass oracles {worst:.2e} on 1000 configs, weighting exact: {weighting_exact}, examples 6/2: {examples}"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_gradient_check() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut n_params = 0;
    for (kind, seed) in [(Kind::Airway, 41u64), (Kind::Vessel, 42)] {
        let mut net = Network::<f64>::init(NetworkConfig::tiny(kind), seed).unwrap();
        n_params = n_params.max(net.n_params());
        let (groups, m) = (2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // move zero biases off the ReLU kink
        for p in net.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let inputs: Vec<Vec<f64>> = (0..groups * m)
            .map(|_| (0..1024).map(|_| rng.random_range(-0.1..1.1)).collect())
            .collect();
        let mut y = Vec::new();
        for _ in 0..groups {
            let t: Vec<f64> = (0..kind.outputs()).map(|_| rng.random_range(0.5..3.0)).collect();
            for _ in 0..m {
                y.extend(&t);
            }
        }
        let loss = ReplicaLoss::new(kind, m, LossWeights::default());
        let width = m * kind.outputs();
        let mut analytic = vec![0.0; net.n_params()];
        for g in 0..groups {
            let (_, grad) =
                group_gradient(&net, &loss, inputs[g * m..(g + 1) * m].to_vec(), &y[g * width..(g + 1) * width], groups)
                    .unwrap();
            for (a, b) in analytic.iter_mut().zip(grad) {
                *a += b;
            }
        }
        let total = |n: &Network<f64>| {
            let p: Vec<f64> = inputs.iter().flat_map(|x| n.forward(x.clone()).unwrap()).collect();
            loss.evaluate(&y, &p).unwrap().total
        };
        let eps = 1e-5;
        let mut probe = net.clone();
        for i in 0..net.n_params() {
            let orig = net.params()[i];
            probe.params_mut()[i] = orig + eps;
            let up = total(&probe);
            probe.params_mut()[i] = orig - eps;
            let down = total(&probe);
            probe.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    let elapsed = start.elapsed();
    check(
        4,
        worst < 1e-4 && n_params <= 500 && elapsed < Duration::from_secs(120),
        format!("max relative error {worst:.2e} on {n_params}-parameter networks, {:.1}s", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_classical_bias() {
    let start = Instant::now();
    let mut cfg = GenConfig::new(Kind::Airway, 600, 1, 505);
    cfg.acquisition = AcquisitionRanges {
        psf_min: 0.7,
        psf_max: 0.7,
        noise_sigma: 0.0,
        texture: false,
    };
    let ds = generate_patches(&cfg).unwrap();
    let walls: Vec<f64> = ds.patches.iter().map(|p| p.label_wall.unwrap()).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for method in [Method::Fwhm, Method::Zcsd] {
        let est = estimate(&Measurer::Classical(method, MeasureConfig::default()), &ds.patches).unwrap();
        let wall_est: Vec<Option<f64>> = est.iter().map(|e| e[1]).collect();
        let t = grouped_table(&walls, &wall_est, &default_bins()).unwrap();
        let thin = t.bins[0].stats;
        let thick = t.bins[2].stats;
        let ok = thin.mean < 0.0 && thin.mean.abs() > 20.0 && thick.mean_abs < 15.0;
        pass &= ok;
        detail.push(format!(
            "{}: thin mean RE {:+.1}% (n={}), thick mean |RE| {:.1}% (n={})",
            method.as_str(),
            thin.mean,
            thin.n,
            thick.mean_abs,
            thick.n
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    check(5, pass, format!("{}; {:.0}s", detail.join("; "), elapsed.as_secs_f64()));
}

// ---------------------------------------------------------------- 6-8

struct Desk {
    vessel: KindArtifacts,
    vessel_train_time: Duration,
    airway: KindArtifacts,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let recipe = Recipe::desk(2024);
        let t = Instant::now();
        let vessel = run_kind(&recipe, Kind::Vessel, dir.path()).unwrap();
        let vessel_train_time = t.elapsed();
        let airway = run_kind(&recipe, Kind::Airway, dir.path()).unwrap();
        Desk {
            vessel,
            vessel_train_time,
            airway,
        }
    })
}

#[test]
fn criterion_6_desk_vessel_accuracy() {
    let d = desk();
    let cnr = &d.vessel.estimates[0];
    assert_eq!(cnr.0, "cnr");
    let (mut small, mut large) = (Vec::new(), Vec::new());
    for (p, e) in d.vessel.test.patches.iter().zip(&cnr.1) {
        let re = 100.0 * (e[0].unwrap() - p.label_lumen).abs() / p.label_lumen;
        if p.label_lumen < 1.0 {
            small.push(re);
        } else {
            large.push(re);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, ml) = (mean(&small), mean(&large));
    let minutes = d.vessel_train_time.as_secs_f64() / 60.0;
    check(
        6,
        ml <= 10.0 && ms <= 20.0 && minutes <= 60.0,
        format!(
            "held-out mean |RE| {ml:.2}% for r >= 1 mm (n={}), {ms:.2}% for r < 1 mm (n={}); generate+train {minutes:.1} min",
            large.len(),
            small.len()
        ),
    );
}

#[test]
fn criterion_7_thin_wall_ordering() {
    let d = desk();
    let thin = |method: &str| {
        d.airway
            .table
            .iter()
            .find(|r| r.method == method && r.target == "wall" && r.bin == "<=0.7")
            .unwrap()
            .clone()
    };
    let (c, f, z) = (thin("cnr"), thin("fwhm"), thin("zcsd"));
    check(
        7,
        c.mean_abs_re < f.mean_abs_re && c.mean_abs_re < z.mean_abs_re,
        format!(
            "WT <= 0.7 mm mean |RE|: cnr {:.1}% (n={}), fwhm {:.1}% (n={}, {} failed), zcsd {:.1}% (n={}, {} failed)",
            c.mean_abs_re, c.n, f.mean_abs_re, f.n, f.n_failed, z.mean_abs_re, z.n, z.n_failed
        ),
    );
}

#[test]
fn criterion_8_noise_sweep_stability() {
    let d = desk();
    let mut sc = SweepConfig::new(Kind::Vessel, SweepVariable::Noise, levels(0.0, 40.0, 5.0).unwrap());
    sc.reps = 100;
    sc.lumen_radius = 2.0;
    sc.psf_sigma = 1.3;
    sc.seed = 808;
    let r = sweep(&sc, &Measurer::Cnr(&d.vessel.network)).unwrap();
    let means: Vec<f64> = r.levels.iter().map(|l| l.stats[0].mean).collect();
    let all_reps = r.levels.iter().all(|l| l.stats[0].n == 100);
    let hi = means.iter().cloned().fold(f64::MIN, f64::max);
    let lo = means.iter().cloned().fold(f64::MAX, f64::min);
    check(
        8,
        hi - lo < 15.0 && all_reps,
        format!(
            "CNR mean RE over noise 0-40 HU at 1.3 mm PSF: [{}], peak-to-peak {:.2} pp",
            means.iter().map(|m| format!("{m:+.1}")).collect::<Vec<_>>().join(", "),
            hi - lo
        ),
    );
}

// ---------------------------------------------------------------- 9

fn shifted(img: &ImageGrid, c: f64) -> ImageGrid {
    ImageGrid::new(img.width(), img.height(), img.spacing(), img.values().iter().map(|v| v + c).collect()).unwrap()
}

#[test]
fn criterion_9_property_suites() {
    let cfg = MeasureConfig::default();
    let mut notes = Vec::new();

    // rotation equivariance: turning the structure by one ray-angle quantum moves no
    // measurement by more than 2%
    let mut rng = stream(909, 0, 0, Stage::Model);
    let mut worst_rot: f64 = 0.0;
    for i in 0..20 {
        let kind = if i % 2 == 0 { Kind::Vessel } else { Kind::Airway };
        let mut m = sample_model(kind, &mut rng);
        m.neighbors.clear();
        m.chest_wall_regions.clear();
        m.skew = 0.0;
        let render = |rot: f64| {
            let mut mm = m.clone();
            mm.rotation = rot;
            let params = subvox_core::generator::DegradationParams {
                noise_sigma: 0.0,
                parenchyma_sigma: 0.0,
                ..Default::default()
            };
            let mut texture = stream(0, 0, 0, Stage::Texture);
            let mut noise = stream(0, 0, 0, Stage::Noise);
            subvox_core::generator::simulate(&mm, &params, &mut texture, &mut noise).unwrap()
        };
        let (a, b) = (render(m.rotation), render(m.rotation + 360.0 / cfg.n_rays as f64));
        for method in [Method::Fwhm, Method::Zcsd] {
            let (ra, rb) = (measure(&a, kind, method, &cfg), measure(&b, kind, method, &cfg));
            for (x, y) in [(ra.lumen_radius, rb.lumen_radius), (ra.wall_thickness, rb.wall_thickness)] {
                if let (Some(x), Some(y)) = (x, y) {
                    worst_rot = worst_rot.max((x - y).abs() / x);
                }
            }
        }
    }
    notes.push(format!("rotation {:.2}%", 100.0 * worst_rot));

    // intensity shift: adding a constant leaves classical measurements unchanged
    let ds = generate_patches(&GenConfig::new(Kind::Airway, 10, 2, 919)).unwrap();
    let mut worst_shift: f64 = 0.0;
    for p in &ds.patches {
        let g = p.to_grid();
        for method in [Method::Fwhm, Method::Zcsd] {
            let a = measure(&g, p.kind, method, &cfg);
            let b = measure(&shifted(&g, 137.0), p.kind, method, &cfg);
            assert_eq!(a.n_valid_rays, b.n_valid_rays);
            for (x, y) in [(a.lumen_radius, b.lumen_radius), (a.wall_thickness, b.wall_thickness)] {
                assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    worst_shift = worst_shift.max((x - y).abs());
                }
            }
        }
    }
    notes.push(format!("intensity shift {worst_shift:.1e} mm"));

    // precision term: bias and replica permutation
    let mut r = ChaCha8Rng::seed_from_u64(929);
    let (mut perm_exact, mut worst_bias) = (true, 0.0f64);
    for _ in 0..500 {
        let m = r.random_range(2..26);
        let t = r.random_range(0.5..4.0);
        let y = vec![t; m];
        let p: Vec<f64> = (0..m).map(|_| t + r.random_range(-1.0..1.0)).collect();
        let base = loss_sigma(&y, &p, m).unwrap();
        let mut q = p.clone();
        for i in (1..m).rev() {
            q.swap(i, r.random_range(0..=i));
        }
        perm_exact &= loss_sigma(&y, &q, m).unwrap() == base;
        let c = r.random_range(-3.0..3.0);
        let b: Vec<f64> = p.iter().map(|v| v + c).collect();
        worst_bias = worst_bias.max((loss_sigma(&y, &b, m).unwrap() - base).abs());
    }
    notes.push(format!("permutation exact {perm_exact}, bias {worst_bias:.1e}"));

    // bin partition: every positive size lands in exactly one bin
    let bins: Vec<Bin> = default_bins();
    let mut total = true;
    let mut probes = vec![1e-12, 0.7, 0.7 + 1e-12, 1.5, 1.5 + 1e-12, 1e9];
    probes.extend((0..10_000).map(|_| r.random_range(1e-6..20.0)));
    for s in probes {
        total &= bins.iter().filter(|b| b.contains(s)).count() == 1 && bin_index(&bins, s).is_some();
    }
    notes.push(format!("bin partition {total}"));

    check(
        9,
        worst_rot < 0.02 && worst_shift < 1e-9 && perm_exact && worst_bias < 1e-12 && total,
        notes.join(", "),
    );
}

