use crate::error::{Error, Result};

/// Pixel spacing of the high-resolution rendering grid (mm/px).
pub const HIGH_RES_SPACING: f64 = 0.05;
/// Pixel spacing of the simulated CT grid (mm/px).
pub const CT_SPACING: f64 = 0.5;

/// Row-major 2-D scalar field in HU with isotropic physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, spacing: f64, values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() {
            return Err(Error::invalid(format!(
                "{width}x{height} grid needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        Ok(Self {
            width,
            height,
            spacing,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, spacing: f64, value: f64) -> Self {
        Self {
            width,
            height,
            spacing,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            spacing,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Mean with compensated summation, accurate to a few ulps of the result.
    pub fn mean(&self) -> f64 {
        compensated_sum(&self.values) / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64;
        var.sqrt()
    }

    /// Physical position (mm) of a pixel centre relative to the grid centre.
    ///
    /// The grid centre sits on the corner shared by pixels `(h/2 - 1, w/2 - 1)`
    /// and `(h/2, w/2)` for even sizes.
    #[inline]
    pub fn pixel_position(&self, row: usize, col: usize) -> (f64, f64) {
        let x = (col as f64 + 0.5 - self.width as f64 / 2.0) * self.spacing;
        let y = (row as f64 + 0.5 - self.height as f64 / 2.0) * self.spacing;
        (x, y)
    }
}

/// Bilinear interpolation at continuous pixel coordinates (pixel centres at
/// integer positions). Returns `None` outside the convex hull of pixel centres.
#[inline]
pub fn bilinear(values: &[f64], width: usize, height: usize, x: f64, y: f64) -> Option<f64> {
    const SLACK: f64 = 1e-9;
    if !(x >= -SLACK && y >= -SLACK && x <= (width - 1) as f64 + SLACK && y <= (height - 1) as f64 + SLACK) {
        return None;
    }
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = (x.floor() as usize).min(width.saturating_sub(2));
    let y0 = (y.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let v00 = values[y0 * width + x0];
    let v01 = values[y0 * width + x1];
    let v10 = values[y1 * width + x0];
    let v11 = values[y1 * width + x1];
    let top = v00 + (v01 - v00) * fx;
    let bottom = v10 + (v11 - v10) * fx;
    Some(top + (bottom - top) * fy)
}

/// Neumaier summation.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
