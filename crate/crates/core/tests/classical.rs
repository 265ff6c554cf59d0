//! Classical measurers against a continuous blurred-disk oracle.

use statrs::function::erf::erf;
use subvox_core::generator::{simulate, DegradationParams, Kind, StructureModel};
use subvox_core::measure::{measure, MeasureConfig, Method};
use subvox_core::rng::{stream, Stage};
use subvox_core::ImageGrid;

fn phi(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Probability mass of an isotropic Gaussian centred at distance `r` from the
/// origin that falls inside the disk of radius `big_r`.
fn disk_mass(r: f64, big_r: f64, sigma: f64) -> f64 {
    let n = 2000;
    let h = 2.0 * big_r / n as f64;
    let f = |y: f64| {
        let half = (big_r * big_r - y * y).max(0.0).sqrt();
        let g = (-0.5 * (y / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        g * (phi((half - r) / sigma) - phi((-half - r) / sigma))
    };
    // Simpson
    let mut s = f(-big_r) + f(big_r);
    for i in 1..n {
        let y = -big_r + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(y);
    }
    s * h / 3.0
}

/// Effective blur: PSF plus the 0.5 mm block average of down-sampling.
fn effective_sigma(psf: f64) -> f64 {
    (psf * psf + 0.5 * 0.5 / 12.0).sqrt()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bare(kind: Kind, lr: f64, wt: Option<f64>) -> StructureModel {
    StructureModel {
        kind,
        lumen_radius: lr,
        wall_thickness: wt,
        axis_ratio: 1.0,
        rotation: 0.0,
        skew: 0.0,
        lumen_intensity: -1000.0,
        wall_intensity: -100.0,
        vessel_intensity: 0.0,
        neighbors: Vec::new(),
        chest_wall_regions: Vec::new(),
    }
}

fn render(model: &StructureModel, psf: f64) -> ImageGrid {
    let params = DegradationParams {
        psf_sigma: psf,
        noise_sigma: 0.0,
        parenchyma_sigma: 0.0,
        ..DegradationParams::default()
    };
    simulate(
        model,
        &params,
        &mut stream(0, 0, 0, Stage::Texture),
        &mut stream(0, 0, 0, Stage::Noise),
    )
    .unwrap()
}

/// Half-maximum radius of a blurred disk.
fn vessel_oracle(r: f64, psf: f64) -> f64 {
    let s = effective_sigma(psf);
    let half = disk_mass(0.0, r, s) / 2.0;
    bisect(|x| disk_mass(x, r, s) - half, 0.0, r + 4.0 * s)
}

#[test]
fn fwhm_and_zcsd_vessels_follow_the_blurred_disk() {
    let cfg = MeasureConfig::default();
    for (r, psf) in [(2.0, 0.5), (3.0, 0.7), (1.2, 0.5)] {
        let img = render(&bare(Kind::Vessel, r, None), psf);
        let oracle = vessel_oracle(r, psf);
        for method in [Method::Fwhm, Method::Zcsd] {
            let est = measure(&img, Kind::Vessel, method, &cfg).lumen_radius.unwrap();
            assert!((est - oracle).abs() < 0.05, "{method:?} r={r} psf={psf}: {est} vs oracle {oracle}");
        }
    }
}

#[test]
fn blur_shrinks_the_half_max_radius() {
    // curvature pulls the half-max contour inside disks much wider than the blur
    for r in [2.0, 3.0, 4.0] {
        assert!(vessel_oracle(r, 0.7) < r);
    }
    let img = render(&bare(Kind::Vessel, 2.0, None), 0.5);
    let est = measure(&img, Kind::Vessel, Method::Fwhm, &MeasureConfig::default());
    assert!(est.lumen_radius.unwrap() < 2.0);
    assert_eq!(est.n_valid_rays, 64);
}

/// Continuous annulus profile and its FWHM wall thickness.
fn airway_oracle(lr: f64, wt: f64, psf: f64, lumen: f64, wall: f64, bg: f64) -> f64 {
    let s = effective_sigma(psf);
    let profile = |x: f64| bg + (wall - bg) * disk_mass(x, lr + wt, s) + (lumen - wall) * disk_mass(x, lr, s);
    let n = 4000;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 * (lr + wt + 4.0 * s) / n as f64).collect();
    let (i_peak, _) = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, profile(x)))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let peak = profile(xs[i_peak]);
    let inner_level = 0.5 * (profile(0.0) + peak);
    let outer_level = 0.5 * (peak + bg);
    let inner = bisect(|x| profile(x) - inner_level, 0.0, xs[i_peak]);
    let outer = bisect(|x| profile(x) - outer_level, xs[i_peak], *xs.last().unwrap());
    outer - inner
}

#[test]
fn fwhm_airway_wall_follows_the_blurred_annulus() {
    let cfg = MeasureConfig::default();
    for (lr, wt, psf) in [(2.0, 1.5, 0.5), (3.0, 2.0, 0.6)] {
        let m = bare(Kind::Airway, lr, Some(wt));
        let img = render(&m, psf);
        let oracle = airway_oracle(lr, wt, psf, m.lumen_intensity, m.wall_intensity, -900.0);
        let est = measure(&img, Kind::Airway, Method::Fwhm, &cfg).wall_thickness.unwrap();
        assert!((est - oracle).abs() < 0.1, "lr={lr} wt={wt}: {est} vs oracle {oracle}");
    }
}

#[test]
fn thin_walls_are_overestimated_by_both_methods() {
    let cfg = MeasureConfig::default();
    let m = bare(Kind::Airway, 2.0, Some(0.4));
    let img = render(&m, 0.7);
    for method in [Method::Fwhm, Method::Zcsd] {
        let wt = measure(&img, Kind::Airway, method, &cfg).wall_thickness.unwrap();
        assert!(wt > 0.4 * 1.5, "{method:?}: {wt}");
    }
}

#[test]
fn larger_blur_never_helps_the_smallest_vessel() {
    let cfg = MeasureConfig::default();
    let err = |psf: f64| {
        let img = render(&bare(Kind::Vessel, 0.5, None), psf);
        measure(&img, Kind::Vessel, Method::Fwhm, &cfg)
            .lumen_radius
            .map(|e| (e - 0.5).abs() / 0.5)
            .unwrap_or(f64::INFINITY)
    };
    assert!(err(0.9) >= err(0.4));
}
