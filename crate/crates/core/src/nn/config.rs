use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Kind;

/// Strides of the seven convolutional layers: stride-2 at layers 3 and 6.
pub const CONV_STRIDES: [usize; 7] = [1, 1, 2, 1, 1, 2, 1];

/// Affine HU -> network input mapping, clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub offset: f64,
    pub scale: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for InputNormalization {
    fn default() -> Self {
        Self {
            offset: 1000.0,
            scale: 1500.0,
            clamp_lo: -0.2,
            clamp_hi: 1.2,
        }
    }
}

impl InputNormalization {
    #[inline]
    pub fn apply(&self, hu: f64) -> f64 {
        ((hu + self.offset) / self.scale).clamp(self.clamp_lo, self.clamp_hi)
    }
}

/// Seven 3x3 convolutions (ReLU) followed by two fully-connected layers
/// (ReLU hidden, linear output in mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: Kind,
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub hidden: usize,
    pub outputs: usize,
    pub normalization: InputNormalization,
}

impl NetworkConfig {
    fn with_widths(kind: Kind, channels: [usize; 7], hidden: usize) -> Self {
        Self {
            kind,
            input_size: 32,
            channels: channels.to_vec(),
            strides: CONV_STRIDES.to_vec(),
            hidden,
            outputs: kind.outputs(),
            normalization: InputNormalization::default(),
        }
    }

    /// Full-width network (~0.5M parameters for 32x32 inputs).
    pub fn full(kind: Kind) -> Self {
        Self::with_widths(kind, [32, 32, 64, 64, 64, 128, 128], 256)
    }

    /// Narrow network sized for single-core CPU training.
    pub fn desk(kind: Kind) -> Self {
        Self::with_widths(kind, [8, 8, 16, 16, 16, 32, 32], 64)
    }

    /// Tiny network for finite-difference gradient checks.
    pub fn tiny(kind: Kind) -> Self {
        Self::with_widths(kind, [2, 2, 2, 2, 2, 1, 1], 3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != 7 || self.strides.len() != 7 {
            return Err(Error::config("exactly 7 convolutional layers are required"));
        }
        let ones = self.strides.iter().filter(|&&s| s == 1).count();
        let twos = self.strides.iter().filter(|&&s| s == 2).count();
        if ones != 5 || twos != 2 {
            return Err(Error::config("convolutions need 5 stride-1 and 2 stride-2 layers"));
        }
        if self.channels.contains(&0) || self.hidden == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.outputs != self.kind.outputs() {
            return Err(Error::config(format!(
                "{} networks have {} outputs, config says {}",
                self.kind,
                self.kind.outputs(),
                self.outputs
            )));
        }
        if !self.input_size.is_multiple_of(4) || self.input_size == 0 {
            return Err(Error::config("input size must be a positive multiple of 4"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for kind in [Kind::Airway, Kind::Vessel] {
            for cfg in [NetworkConfig::full(kind), NetworkConfig::desk(kind), NetworkConfig::tiny(kind)] {
                cfg.validate().unwrap();
                assert_eq!(cfg.outputs, kind.outputs());
            }
        }
    }

    #[test]
    fn rejects_wrong_stride_pattern() {
        let mut cfg = NetworkConfig::desk(Kind::Vessel);
        cfg.strides = vec![1, 2, 2, 1, 1, 2, 1];
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::desk(Kind::Vessel);
        cfg.channels.push(4);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn normalization_clamps() {
        let n = InputNormalization::default();
        assert_eq!(n.apply(-1000.0), 0.0);
        assert_eq!(n.apply(500.0), 1.0);
        assert_eq!(n.apply(-3000.0), -0.2);
        assert_eq!(n.apply(2000.0), 1.2);
    }
}
