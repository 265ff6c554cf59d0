//! Replica-group accuracy + precision loss.
//!
//! Targets and predictions are flat, sample-major buffers with `heads`
//! values per sample; the `m` replicas of a group are contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    /// Size below which a group is up-weighted (mm).
    pub threshold: f64,
    pub omega_vessel: f64,
    pub omega_lumen: f64,
    pub omega_wall: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            threshold: 1.0,
            omega_vessel: 3.0,
            omega_lumen: 1.5,
            omega_wall: 3.0,
        }
    }
}

impl LossWeights {
    fn pick(&self, size: f64, small: f64) -> f64 {
        if size < self.threshold {
            small
        } else {
            1.0
        }
    }

    pub fn omega_v(&self, radius: f64) -> f64 {
        self.pick(radius, self.omega_vessel)
    }

    pub fn omega_l(&self, lumen: f64) -> f64 {
        self.pick(lumen, self.omega_lumen)
    }

    pub fn omega_wt(&self, wall: f64) -> f64 {
        self.pick(wall, self.omega_wall)
    }

    /// Precision weight of output `head` for a group with true size `size`.
    pub fn omega(&self, kind: Kind, head: usize, size: f64) -> f64 {
        match (kind, head) {
            (Kind::Vessel, _) => self.omega_v(size),
            (Kind::Airway, 0) => self.omega_l(size),
            (Kind::Airway, _) => self.omega_wt(size),
        }
    }
}

/// Per-term breakdown; `total == mu + lambda * penalty` bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub mu: f64,
    /// Unweighted group-variance term per head.
    pub sigma: Vec<f64>,
    /// `Σ_heads mean_groups(ω · variance)`.
    pub penalty: f64,
    pub lambda: f64,
}

/// Gradient of the total loss w.r.t. the predictions, split by term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LossGradient {
    pub fn total(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.sigma).map(|(a, b)| a + b).collect()
    }
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("targets must be positive and finite, got {v}")));
    }
    if y_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite prediction"));
    }
    Ok(())
}

fn check_groups(len: usize, heads: usize, m: usize) -> Result<usize> {
    if m == 0 || heads == 0 {
        return Err(Error::invalid("group size and head count must be positive"));
    }
    let per_group = m * heads;
    if !len.is_multiple_of(per_group) {
        return Err(Error::invalid(format!(
            "{} values do not form complete groups of {m} replicas x {heads} heads",
            len
        )));
    }
    Ok(len / per_group)
}

/// Mean relative absolute error, summed over heads.
pub fn loss_mu(y: &[f64], y_hat: &[f64], heads: usize) -> Result<f64> {
    check_pair(y, y_hat)?;
    let n = check_groups(y.len(), heads, 1)?;
    let s: f64 = y.iter().zip(y_hat).map(|(t, p)| (t - p).abs() / t).sum();
    Ok(s / n as f64)
}

/// Population variance of `errors`, summed in sorted order so that the
/// result does not depend on replica order.
fn group_variance(errors: &mut [f64]) -> (f64, f64) {
    errors.sort_by(f64::total_cmp);
    let m = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / m;
    let mut dev: Vec<f64> = errors.iter().map(|e| (e - mean) * (e - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (dev.iter().sum::<f64>() / m, mean)
}

/// Within-group error variance averaged over groups, for a single head.
pub fn loss_sigma(y: &[f64], y_hat: &[f64], m: usize) -> Result<f64> {
    check_pair(y, y_hat)?;
    let n = check_groups(y.len(), 1, m)?;
    let mut total = 0.0;
    for (yg, pg) in y.chunks_exact(m).zip(y_hat.chunks_exact(m)) {
        let mut e: Vec<f64> = yg.iter().zip(pg).map(|(t, p)| t - p).collect();
        total += group_variance(&mut e).0;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct ReplicaLoss {
    pub kind: Kind,
    pub m: usize,
    pub weights: LossWeights,
}

/// Contribution of one group to the batch loss, before the batch-level
/// normalisation by group count.
#[derive(Debug, Clone, Default)]
pub struct GroupTerms {
    /// `Σ_j Σ_h |y − ŷ| / y` over the group's replicas.
    pub abs_rel: f64,
    pub variance: Vec<f64>,
    /// `Σ_h ω_h · variance_h`.
    pub weighted: f64,
}

impl ReplicaLoss {
    pub fn new(kind: Kind, m: usize, weights: LossWeights) -> Self {
        Self { kind, m, weights }
    }

    pub fn heads(&self) -> usize {
        self.kind.outputs()
    }

    fn group_values(&self, y: &[f64], y_hat: &[f64], head: usize) -> Vec<f64> {
        let h = self.heads();
        (0..self.m).map(|j| y[j * h + head] - y_hat[j * h + head]).collect()
    }

    /// Loss terms of one group and, if requested, the gradients of the full
    /// batch loss (with `n_groups` groups) w.r.t. this group's predictions.
    ///
    /// The ω weights use the first replica's target, which is the group's
    /// true size.
    pub fn group(
        &self,
        y: &[f64],
        y_hat: &[f64],
        n_groups: usize,
        grad: Option<(&mut [f64], &mut [f64])>,
    ) -> Result<GroupTerms> {
        check_pair(y, y_hat)?;
        let h = self.heads();
        if y.len() != self.m * h {
            return Err(Error::invalid(format!(
                "group holds {} values, expected {} replicas x {h} heads",
                y.len(),
                self.m
            )));
        }
        let n = n_groups as f64;
        let nm = n * self.m as f64;
        let mut terms = GroupTerms {
            abs_rel: y.iter().zip(y_hat).map(|(t, p)| (t - p).abs() / t).sum(),
            variance: Vec::with_capacity(h),
            weighted: 0.0,
        };
        let mut omegas = Vec::with_capacity(h);
        let mut means = Vec::with_capacity(h);
        for head in 0..h {
            let mut e = self.group_values(y, y_hat, head);
            let (var, mean) = group_variance(&mut e);
            let omega = self.weights.omega(self.kind, head, y[head]);
            terms.variance.push(var);
            terms.weighted += omega * var;
            omegas.push(omega);
            means.push(mean);
        }
        if let Some((g_mu, g_sigma)) = grad {
            let lambda = self.weights.lambda;
            let m = self.m as f64;
            for j in 0..self.m {
                for head in 0..h {
                    let i = j * h + head;
                    let e = y[i] - y_hat[i];
                    let sign = if e > 0.0 {
                        1.0
                    } else if e < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    g_mu[i] = -sign / (y[i] * nm);
                    g_sigma[i] = -lambda * omegas[head] * (2.0 / m) * (e - means[head]) / n;
                }
            }
        }
        Ok(terms)
    }

    fn batch(&self, y: &[f64], y_hat: &[f64], mut grad: Option<&mut LossGradient>) -> Result<LossReport> {
        check_pair(y, y_hat)?;
        let h = self.heads();
        let n = check_groups(y.len(), h, self.m)?;
        let width = self.m * h;
        let mut abs_rel = 0.0;
        let mut penalty = 0.0;
        let mut sigma = vec![0.0; h];
        for g in 0..n {
            let r = g * width..(g + 1) * width;
            let slot = grad
                .as_deref_mut()
                .map(|gr| (&mut gr.mu[r.clone()], &mut gr.sigma[r.clone()]));
            let t = self.group(&y[r.clone()], &y_hat[r], n, slot)?;
            abs_rel += t.abs_rel;
            penalty += t.weighted;
            for (s, v) in sigma.iter_mut().zip(&t.variance) {
                *s += v;
            }
        }
        let nf = n as f64;
        let mu = abs_rel / (nf * self.m as f64);
        let penalty = penalty / nf;
        for s in &mut sigma {
            *s /= nf;
        }
        let lambda = self.weights.lambda;
        Ok(LossReport {
            total: mu + lambda * penalty,
            mu,
            sigma,
            penalty,
            lambda,
        })
    }

    pub fn evaluate(&self, y: &[f64], y_hat: &[f64]) -> Result<LossReport> {
        self.batch(y, y_hat, None)
    }

    pub fn gradient(&self, y: &[f64], y_hat: &[f64]) -> Result<(LossReport, LossGradient)> {
        let mut g = LossGradient {
            mu: vec![0.0; y.len()],
            sigma: vec![0.0; y.len()],
        };
        let report = self.batch(y, y_hat, Some(&mut g))?;
        Ok((report, g))
    }
}

/// Total loss with default weights.
pub fn total_loss(y: &[f64], y_hat: &[f64], m: usize, kind: Kind, weights: LossWeights) -> Result<LossReport> {
    ReplicaLoss::new(kind, m, weights).evaluate(y, y_hat)
}
