use rayon::prelude::*;

use super::network::Network;
use super::real::Real;
use crate::error::{Error, Result};
use crate::generator::LabeledPatch;

/// Network outputs (mm) for each patch: `[lumen]` or `[lumen, wall]`.
pub fn predict<T: Real>(net: &Network<T>, patches: &[LabeledPatch]) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = patches.iter().find(|p| p.kind != net.config().kind) {
        return Err(Error::config(format!(
            "{} network given a {} patch",
            net.config().kind,
            p.kind
        )));
    }
    patches
        .par_iter()
        .map(|p| {
            let out = net.forward(net.normalize(&p.pixels))?;
            Ok(out.into_iter().map(|v| v.as_f64()).collect())
        })
        .collect()
}
