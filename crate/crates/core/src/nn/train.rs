//! Mini-batch training on whole replica groups.

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::augment::{augment, AugmentConfig};
use super::config::NetworkConfig;
use super::loss::{GroupTerms, LossWeights, ReplicaLoss};
use super::network::Network;
use super::predict::predict;
use super::real::Real;
use crate::error::{Error, Result};
use crate::generator::Dataset;
use crate::generator::LabeledPatch;
use crate::rng::{stream, Stage, MODEL_LEVEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub groups_per_batch: usize,
    pub seed: u64,
    /// Share of models held out for validation.
    pub val_fraction: f64,
    pub augment: AugmentConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    /// Start the output bias at the mean training label.
    pub init_output_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-3,
            groups_per_batch: 40,
            seed: 0,
            val_fraction: 0.1,
            augment: AugmentConfig::default(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            init_output_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.groups_per_batch == 0 {
            return Err(Error::config("epochs and groups per batch must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config("validation fraction must lie in [0, 1)"));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_total: f64,
    pub train_mu: f64,
    /// Unweighted group-variance term, summed over heads.
    pub train_sigma: f64,
    pub val_total: Option<f64>,
    /// Mean |RE| (%) per head on the validation models.
    pub val_mean_abs_re: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_models: Vec<u64>,
    pub val_models: Vec<u64>,
}

/// Checks that the dataset is a sequence of complete, same-size groups.
pub fn replica_groups(patches: &[LabeledPatch], m: usize) -> Result<Vec<&[LabeledPatch]>> {
    if m == 0 || !patches.len().is_multiple_of(m) {
        return Err(Error::config(format!(
            "{} patches do not split into groups of {m} replicas",
            patches.len()
        )));
    }
    let groups: Vec<_> = patches.chunks_exact(m).collect();
    for g in &groups {
        let id = g[0].model_id;
        if g.iter().any(|p| p.model_id != id || p.targets() != g[0].targets()) {
            return Err(Error::config(format!("replica group of model {id} is incomplete or mixed")));
        }
    }
    Ok(groups)
}

/// Splits group indices by model id into (train, validation).
fn split(groups: &[&[LabeledPatch]], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..groups.len()).collect();
    idx.shuffle(&mut stream(seed, 0, MODEL_LEVEL, Stage::Shuffle));
    let n_val = if fraction > 0.0 && groups.len() > 1 {
        ((groups.len() as f64 * fraction).round() as usize).clamp(1, groups.len() - 1)
    } else {
        0
    };
    let mut val = idx.split_off(idx.len() - n_val);
    idx.sort_by_key(|&i| groups[i][0].model_id);
    val.sort_by_key(|&i| groups[i][0].model_id);
    (idx, val)
}

/// Loss terms of one replica group and the gradient of the batch loss
/// (over `n_groups` groups) w.r.t. every parameter.
///
/// `inputs` are normalised network inputs, `y` the sample-major targets.
pub fn group_gradient<T: Real>(
    net: &Network<T>,
    loss: &ReplicaLoss,
    inputs: Vec<Vec<T>>,
    y: &[f64],
    n_groups: usize,
) -> Result<(GroupTerms, Vec<T>)> {
    let heads = loss.heads();
    let mut traces = Vec::with_capacity(inputs.len());
    let mut y_hat = Vec::with_capacity(y.len());
    for x in inputs {
        let trace = net.forward_trace(x)?;
        y_hat.extend(trace.values.last().expect("output").iter().map(|v| v.as_f64()));
        traces.push(trace);
    }
    let mut g_mu = vec![0.0; y.len()];
    let mut g_sigma = vec![0.0; y.len()];
    let terms = loss.group(y, &y_hat, n_groups, Some((&mut g_mu, &mut g_sigma)))?;
    let mut grads = vec![T::zero(); net.n_params()];
    for (j, trace) in traces.iter().enumerate() {
        let d: Vec<T> = (0..heads)
            .map(|h| T::from_f64(g_mu[j * heads + h] + g_sigma[j * heads + h]))
            .collect();
        net.backward(trace, &d, &mut grads)?;
    }
    Ok((terms, grads))
}

fn group_step(
    net: &Network<f32>,
    loss: &ReplicaLoss,
    group: &[LabeledPatch],
    n_groups: usize,
    augment_cfg: &AugmentConfig,
    aug_seed: u64,
) -> Result<(GroupTerms, Vec<f32>)> {
    let inputs = group
        .iter()
        .map(|p| {
            let mut px = p.pixels.clone();
            let mut rng = stream(aug_seed, p.model_id, p.replica_id as u64, Stage::Augment);
            augment(&mut px, augment_cfg, &mut rng);
            net.normalize(&px)
        })
        .collect();
    let y: Vec<f64> = group.iter().flat_map(|p| p.targets()).collect();
    group_gradient(net, loss, inputs, &y, n_groups)
}

/// Mean |RE| per head (%) and total loss over complete groups.
fn validate(net: &Network<f32>, loss: &ReplicaLoss, groups: &[&[LabeledPatch]]) -> Result<(f64, Vec<f64>)> {
    let patches: Vec<LabeledPatch> = groups.iter().flat_map(|g| g.iter().cloned()).collect();
    let preds = predict(net, &patches)?;
    let y: Vec<f64> = patches.iter().flat_map(|p| p.targets()).collect();
    let y_hat: Vec<f64> = preds.into_iter().flatten().collect();
    let report = loss.evaluate(&y, &y_hat)?;
    let heads = loss.heads();
    let mut re = vec![0.0; heads];
    for (i, (t, p)) in y.iter().zip(&y_hat).enumerate() {
        re[i % heads] += 100.0 * (p - t).abs() / t;
    }
    let n = patches.len() as f64;
    Ok((report.total, re.into_iter().map(|s| s / n).collect()))
}

/// Trains a network from `init` on the replica groups of `dataset`.
///
/// Each optimiser step sees `groups_per_batch` whole groups. Group gradients
/// are computed independently and summed in group order, so results do not
/// depend on the worker count. The parameters with the lowest validation loss
/// (or the final ones without a validation split) are returned.
pub fn train_from(init: Network<f32>, dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut net = init;
    if net.config().kind != dataset.kind {
        return Err(Error::config(format!(
            "{} network cannot train on a {} dataset",
            net.config().kind,
            dataset.kind
        )));
    }
    let m = dataset.m_replicas as usize;
    let groups = replica_groups(&dataset.patches, m)?;
    if groups.is_empty() {
        return Err(Error::config("dataset has no replica groups"));
    }
    let (train_idx, val_idx) = split(&groups, config.val_fraction, config.seed);
    let val_groups: Vec<_> = val_idx.iter().map(|&i| groups[i]).collect();
    let loss = ReplicaLoss::new(dataset.kind, m, config.weights);
    let heads = loss.heads();

    if config.init_output_bias {
        let mut mean = vec![0.0; heads];
        for &i in &train_idx {
            for (s, t) in mean.iter_mut().zip(groups[i][0].targets()) {
                *s += t / train_idx.len() as f64;
            }
        }
        for (b, v) in net.output_bias_mut().iter_mut().zip(mean) {
            *b = v as f32;
        }
    }

    let mut adam = Adam::<f32>::new(net.n_params(), config.adam);
    let mut shuffle_rng = stream(config.seed, 1, MODEL_LEVEL, Stage::Shuffle);
    let mut order = train_idx.clone();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Network<f32>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let aug_seed = stream(config.seed, epoch as u64, MODEL_LEVEL, Stage::Augment).next_u64();
        let (mut abs_rel, mut sigma, mut weighted) = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.groups_per_batch) {
            let n = batch.len();
            let steps: Vec<(GroupTerms, Vec<f32>)> = batch
                .par_iter()
                .map(|&g| group_step(&net, &loss, groups[g], n, &config.augment, aug_seed))
                .collect::<Result<_>>()?;
            let mut grads = vec![0.0f32; net.n_params()];
            for (terms, g) in &steps {
                for (a, b) in grads.iter_mut().zip(g) {
                    *a += *b;
                }
                abs_rel += terms.abs_rel;
                sigma += terms.variance.iter().sum::<f64>();
                weighted += terms.weighted;
            }
            adam.update(net.params_mut(), &grads, config.lr);
        }
        let n_train = order.len() as f64;
        let train_mu = abs_rel / (n_train * m as f64);
        let entry_val = if val_groups.is_empty() {
            None
        } else {
            Some(validate(&net, &loss, &val_groups)?)
        };
        let entry = EpochLog {
            epoch,
            train_total: train_mu + config.weights.lambda * weighted / n_train,
            train_mu,
            train_sigma: sigma / n_train,
            val_total: entry_val.as_ref().map(|v| v.0),
            val_mean_abs_re: entry_val.map(|v| v.1).unwrap_or_default(),
        };
        tracing::info!(
            epoch,
            train_total = entry.train_total,
            train_mu = entry.train_mu,
            train_sigma = entry.train_sigma,
            val_total = entry.val_total,
            val_re = ?entry.val_mean_abs_re,
            "epoch"
        );
        let score = entry.val_total.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score < b.0 || entry.val_total.is_none()) {
            best = Some((score, epoch, net.clone()));
        }
        log.push(entry);
    }
    let (_, best_epoch, network) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        network,
        log,
        best_epoch,
        train_models: train_idx.iter().map(|&i| groups[i][0].model_id).collect(),
        val_models: val_idx.iter().map(|&i| groups[i][0].model_id).collect(),
    })
}

/// Trains a freshly initialised network described by `network`.
pub fn train(dataset: &Dataset, network: NetworkConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    let init = Network::init(network, config.seed)?;
    train_from(init, dataset, config)
}
