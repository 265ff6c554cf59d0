//! Geometric ground truth for one synthetic patch and its random sampling.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width (mm) of the final 32 px patch at 0.5 mm/px.
pub const PATCH_HALF_WIDTH_MM: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Airway,
    Vessel,
}

impl Kind {
    /// Number of regressed quantities: lumen (+ wall thickness for airways).
    pub fn outputs(self) -> usize {
        match self {
            Kind::Airway => 2,
            Kind::Vessel => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Airway => "airway",
            Kind::Vessel => "vessel",
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "airway" => Ok(Kind::Airway),
            "vessel" => Ok(Kind::Vessel),
            other => Err(Error::invalid(format!("unknown kind `{other}` (airway|vessel)"))),
        }
    }
}

/// Nominal radius of an ellipse from its maximum and minimum diameters: the
/// geometric mean of the two semi-axes.
pub fn nominal_radius(d_max: f64, d_min: f64) -> Result<f64> {
    if !(d_max > 0.0 && d_min > 0.0) {
        return Err(Error::invalid(format!(
            "diameters must be positive, got ({d_max}, {d_min})"
        )));
    }
    if d_min > d_max {
        return Err(Error::invalid(format!("d_min {d_min} exceeds d_max {d_max}")));
    }
    Ok(((d_max / 2.0) * (d_min / 2.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    /// Centre in mm relative to the patch centre.
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Orientation of the major axis in degrees, in [-180, 180).
    pub rotation: f64,
    pub intensity: f64,
}

impl EllipseSpec {
    pub fn circle(center: (f64, f64), radius: f64, intensity: f64) -> Self {
        Self {
            center,
            semi_major: radius,
            semi_minor: radius,
            rotation: 0.0,
            intensity,
        }
    }

    pub fn nominal_radius(&self) -> f64 {
        (self.semi_major * self.semi_minor).sqrt()
    }

    pub fn area(&self) -> f64 {
        PI * self.semi_major * self.semi_minor
    }

    /// Distance from the centre to the boundary along world direction `phi`
    /// (radians).
    pub fn polar_radius(&self, phi: f64) -> f64 {
        let t = phi - self.rotation.to_radians();
        let (a, b) = (self.semi_major, self.semi_minor);
        a * b / ((b * t.cos()).powi(2) + (a * t.sin()).powi(2)).sqrt()
    }

    /// Same ellipse with both semi-axes grown by `by` (constant nominal thickness).
    pub fn grown(&self, by: f64, intensity: f64) -> Self {
        Self {
            semi_major: self.semi_major + by,
            semi_minor: self.semi_minor + by,
            intensity,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub kind: Kind,
    /// Vessel body, or airway lumen.
    pub inner: EllipseSpec,
    /// Airway outer wall; absent for vessels.
    pub outer: Option<EllipseSpec>,
    /// Direction (degrees) from the central structure towards the neighbour.
    pub contact_angle: f64,
    pub tangent: bool,
}

impl Neighbor {
    pub fn outermost(&self) -> &EllipseSpec {
        self.outer.as_ref().unwrap_or(&self.inner)
    }
}

/// A disk centred outside the patch whose cap intrudes at a border or corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChestWallRegion {
    pub center: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureModel {
    pub kind: Kind,
    /// Nominal lumen (airway) or vessel radius in mm. This is the label.
    pub lumen_radius: f64,
    /// Airway wall thickness in mm. This is the second label.
    pub wall_thickness: Option<f64>,
    /// semi_minor / semi_major of the central ellipse.
    pub axis_ratio: f64,
    pub rotation: f64,
    pub skew: f64,
    pub lumen_intensity: f64,
    pub wall_intensity: f64,
    pub vessel_intensity: f64,
    pub neighbors: Vec<Neighbor>,
    pub chest_wall_regions: Vec<ChestWallRegion>,
}

impl StructureModel {
    /// The central lumen (airway) or vessel body.
    pub fn central_inner(&self) -> EllipseSpec {
        let sq = self.axis_ratio.sqrt();
        let intensity = match self.kind {
            Kind::Airway => self.lumen_intensity,
            Kind::Vessel => self.vessel_intensity,
        };
        EllipseSpec {
            center: (0.0, 0.0),
            semi_major: self.lumen_radius / sq,
            semi_minor: self.lumen_radius * sq,
            rotation: self.rotation,
            intensity,
        }
    }

    pub fn central_outer(&self) -> Option<EllipseSpec> {
        self.wall_thickness
            .map(|wt| self.central_inner().grown(wt, self.wall_intensity))
    }

    pub fn central_outermost(&self) -> EllipseSpec {
        self.central_outer().unwrap_or_else(|| self.central_inner())
    }

    pub fn labels(&self) -> (f64, Option<f64>) {
        (self.lumen_radius, self.wall_thickness)
    }

    /// Checks every sampled quantity against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let ranges = Ranges::default();
        let fail = |what: &str, v: f64| Err(Error::invalid(format!("{what} out of range: {v}")));
        match self.kind {
            Kind::Airway => {
                if !ranges.airway_lumen.contains(self.lumen_radius) {
                    return fail("airway lumen radius", self.lumen_radius);
                }
                let wt = self
                    .wall_thickness
                    .ok_or_else(|| Error::invalid("airway without wall thickness"))?;
                if !wall_range(self.lumen_radius).contains(wt) {
                    return fail("wall thickness", wt);
                }
                let n = self.neighbors.len();
                if n > 2 || self.neighbors.iter().any(|nb| nb.kind != Kind::Vessel) {
                    return Err(Error::invalid("airway patches carry 0-2 vessels only"));
                }
            }
            Kind::Vessel => {
                if !ranges.vessel_radius.contains(self.lumen_radius) {
                    return fail("vessel radius", self.lumen_radius);
                }
                if self.wall_thickness.is_some() {
                    return Err(Error::invalid("vessel with wall thickness"));
                }
                let nv = self.neighbors.iter().filter(|n| n.kind == Kind::Vessel).count();
                let na = self.neighbors.len() - nv;
                if !(1..=3).contains(&nv) || na > 2 {
                    return Err(Error::invalid(format!("{nv} vessels / {na} airways around a vessel")));
                }
            }
        }
        if !ranges.skew.contains(self.skew) {
            return fail("skew", self.skew);
        }
        if !ranges.axis_ratio.contains(self.axis_ratio) {
            return fail("axis ratio", self.axis_ratio);
        }
        if !(-180.0..180.0).contains(&self.rotation) {
            return fail("rotation", self.rotation);
        }
        if !self.chest_wall_regions.is_empty()
            && (self.kind != Kind::Vessel || self.lumen_radius >= ranges.chest_wall_max_radius)
        {
            return Err(Error::invalid("chest wall regions only for vessels below 1.5 mm"));
        }
        Ok(())
    }
}

/// Closed interval helper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

/// Sampling ranges for model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranges {
    pub airway_lumen: Interval,
    pub vessel_radius: Interval,
    /// Added to a reference radius for dependent ranges (VR from LR and vice versa).
    pub dependent_span: f64,
    pub skew: Interval,
    pub axis_ratio: Interval,
    pub lumen_intensity: Interval,
    pub wall_intensity: Interval,
    pub vessel_intensity: Interval,
    pub neighbor_gap: Interval,
    pub chest_wall_radius: Interval,
    pub chest_wall_depth: Interval,
    pub chest_wall_intensity: Interval,
    pub chest_wall_max_radius: f64,
}

impl Default for Ranges {
    fn default() -> Self {
        Self {
            airway_lumen: Interval::new(0.5, 6.0),
            vessel_radius: Interval::new(0.5, 4.5),
            dependent_span: 0.8,
            skew: Interval::new(-25.0, 25.0),
            axis_ratio: Interval::new(0.7, 1.0),
            lumen_intensity: Interval::new(-1150.0, -1050.0),
            wall_intensity: Interval::new(-500.0, 50.0),
            vessel_intensity: Interval::new(-50.0, 50.0),
            neighbor_gap: Interval::new(0.5, 4.0),
            chest_wall_radius: Interval::new(8.0, 16.0),
            chest_wall_depth: Interval::new(2.0, 6.0),
            chest_wall_intensity: Interval::new(-100.0, 200.0),
            chest_wall_max_radius: 1.5,
        }
    }
}

/// Admissible wall thickness for an airway of lumen radius `lr`.
pub fn wall_range(lr: f64) -> Interval {
    Interval::new(0.1 * lr + 0.2, 0.3 * lr + 1.5)
}

fn sample_rotation(rng: &mut impl Rng) -> f64 {
    rng.random_range(-180.0..180.0)
}

fn sample_ellipse(radius: f64, intensity: f64, ranges: &Ranges, rng: &mut impl Rng) -> EllipseSpec {
    let q = ranges.axis_ratio.sample(rng);
    let sq = q.sqrt();
    EllipseSpec {
        center: (0.0, 0.0),
        semi_major: radius / sq,
        semi_minor: radius * sq,
        rotation: sample_rotation(rng),
        intensity,
    }
}

/// Places `nb` along `angle_deg` so that its outermost boundary sits `gap` mm
/// beyond the central outermost boundary, measured along the contact direction.
fn place(nb: &mut Neighbor, central: &EllipseSpec, angle_deg: f64, gap: f64) {
    let phi = angle_deg.to_radians();
    let outer = *nb.outermost();
    let dist = central.polar_radius(phi) + gap + outer.polar_radius(phi + PI);
    let c = (dist * phi.cos(), dist * phi.sin());
    nb.inner.center = c;
    if let Some(o) = nb.outer.as_mut() {
        o.center = c;
    }
    nb.contact_angle = angle_deg;
}

fn vessel_neighbor(
    radius: f64,
    model: &StructureModel,
    tangent: bool,
    ranges: &Ranges,
    rng: &mut impl Rng,
) -> Neighbor {
    let mut nb = Neighbor {
        kind: Kind::Vessel,
        inner: sample_ellipse(radius, model.vessel_intensity, ranges, rng),
        outer: None,
        contact_angle: 0.0,
        tangent,
    };
    let angle = rng.random_range(0.0..360.0);
    let gap = if tangent { 0.0 } else { ranges.neighbor_gap.sample(rng) };
    place(&mut nb, &model.central_outermost(), angle, gap);
    nb
}

fn airway_neighbor(model: &StructureModel, ranges: &Ranges, rng: &mut impl Rng) -> Neighbor {
    let vr = model.lumen_radius;
    let lr = Interval::new(vr, vr + ranges.dependent_span).sample(rng);
    let wt = wall_range(lr).sample(rng);
    let inner = sample_ellipse(lr, model.lumen_intensity, ranges, rng);
    let outer = inner.grown(wt, model.wall_intensity);
    let tangent = rng.random_bool(0.5);
    let mut nb = Neighbor {
        kind: Kind::Airway,
        inner,
        outer: Some(outer),
        contact_angle: 0.0,
        tangent,
    };
    let angle = rng.random_range(0.0..360.0);
    let gap = if tangent { 0.0 } else { ranges.neighbor_gap.sample(rng) };
    place(&mut nb, &model.central_outermost(), angle, gap);
    nb
}

fn chest_wall_regions(ranges: &Ranges, rng: &mut impl Rng) -> Vec<ChestWallRegion> {
    let count = rng.random_range(0..=2usize);
    if count == 0 {
        return Vec::new();
    }
    // Eight anchor directions: four borders and four corners.
    let anchor = rng.random_range(0..8u32);
    let base = anchor as f64 * 45.0;
    (0..count)
        .map(|i| {
            let dir = (base + 180.0 * i as f64).to_radians();
            let extent = if anchor % 2 == 0 {
                PATCH_HALF_WIDTH_MM
            } else {
                PATCH_HALF_WIDTH_MM * std::f64::consts::SQRT_2
            };
            let radius = ranges.chest_wall_radius.sample(rng);
            let depth = ranges.chest_wall_depth.sample(rng);
            let dist = extent - depth + radius;
            ChestWallRegion {
                center: (dist * dir.cos(), dist * dir.sin()),
                radius,
                intensity: ranges.chest_wall_intensity.sample(rng),
            }
        })
        .collect()
}

/// Redraws everything that varies between replicas of one model: skew,
/// neighbour count/placement/rotation and chest-wall regions. Central
/// dimensions, orientation and intensities are kept.
pub fn resample_confounders(model: &StructureModel, rng: &mut impl Rng) -> StructureModel {
    let ranges = Ranges::default();
    let mut m = model.clone();
    m.skew = ranges.skew.sample(rng);
    m.neighbors.clear();
    m.chest_wall_regions.clear();
    match m.kind {
        Kind::Airway => {
            let n = rng.random_range(0..=2usize);
            for _ in 0..n {
                let vr = Interval::new(m.lumen_radius, m.lumen_radius + ranges.dependent_span).sample(rng);
                let nb = vessel_neighbor(vr, &m, true, &ranges, rng);
                m.neighbors.push(nb);
            }
        }
        Kind::Vessel => {
            let nv = rng.random_range(1..=3usize);
            for _ in 0..nv {
                let r = ranges.vessel_radius.sample(rng);
                let nb = vessel_neighbor(r, &m, false, &ranges, rng);
                m.neighbors.push(nb);
            }
            let na = rng.random_range(0..=2usize);
            for _ in 0..na {
                let nb = airway_neighbor(&m, &ranges, rng);
                m.neighbors.push(nb);
            }
            if m.lumen_radius < ranges.chest_wall_max_radius {
                m.chest_wall_regions = chest_wall_regions(&ranges, rng);
            }
        }
    }
    m
}

/// Samples a model with the given central size; intensities, shape and
/// confounders are drawn at random.
pub fn sample_model_with_size(
    kind: Kind,
    lumen_radius: f64,
    wall_thickness: Option<f64>,
    rng: &mut impl Rng,
) -> StructureModel {
    let ranges = Ranges::default();
    let base = StructureModel {
        kind,
        lumen_radius,
        wall_thickness: match kind {
            Kind::Airway => wall_thickness,
            Kind::Vessel => None,
        },
        axis_ratio: ranges.axis_ratio.sample(rng),
        rotation: sample_rotation(rng),
        skew: 0.0,
        lumen_intensity: ranges.lumen_intensity.sample(rng),
        wall_intensity: ranges.wall_intensity.sample(rng),
        vessel_intensity: ranges.vessel_intensity.sample(rng),
        neighbors: Vec::new(),
        chest_wall_regions: Vec::new(),
    };
    resample_confounders(&base, rng)
}

/// Samples a complete random model of the given kind.
pub fn sample_model(kind: Kind, rng: &mut impl Rng) -> StructureModel {
    let ranges = Ranges::default();
    match kind {
        Kind::Airway => {
            let lr = ranges.airway_lumen.sample(rng);
            let wt = wall_range(lr).sample(rng);
            sample_model_with_size(kind, lr, Some(wt), rng)
        }
        Kind::Vessel => {
            let vr = ranges.vessel_radius.sample(rng);
            sample_model_with_size(kind, vr, None, rng)
        }
    }
}
