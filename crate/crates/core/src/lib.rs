//! Synthetic CT airway/vessel cross-sections with exactly known sub-voxel
//! dimensions, classical edge-based measurers (FWHM, ZCSD), and a small
//! convolutional regressor trained with a replica-group accuracy + precision
//! loss.

pub mod error;
pub mod eval;
pub mod filter;
pub mod generator;
pub mod image;
pub mod measure;
pub mod nn;
pub mod repro;
pub mod rng;

pub use error::{Error, Result};
pub use generator::{Kind, LabeledPatch, StructureModel};
pub use image::ImageGrid;
