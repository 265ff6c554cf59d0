//! Convolutional regressor: architecture, replica-group loss, Adam,
//! augmentation, training and checkpoints.

pub mod adam;
pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod network;
pub mod predict;
pub mod real;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use augment::AugmentConfig;
pub use config::NetworkConfig;
pub use loss::{loss_mu, loss_sigma, total_loss, LossReport, LossWeights, ReplicaLoss};
pub use network::Network;
pub use predict::predict;
pub use real::Real;
pub use train::{group_gradient, train, train_from, EpochLog, TrainConfig, TrainOutcome};
