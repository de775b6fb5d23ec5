//! Multi-instance AUC maximization with stochastic pooling.
//!
//! Bags of instances are scored by a small two-layer network whose instance
//! outputs are pooled (mean, max, smoothed max or attention) into one bag
//! prediction. Training minimizes a min-max AUC margin objective; for the
//! smoothed-max and attention poolings the pooled value is estimated from a
//! few sampled instances per bag through a per-bag moving average.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod convert;
pub mod cv;
pub mod data;
pub mod diag;
pub mod error;
pub mod eval;
pub mod model;
pub mod objective;
pub mod optim;
pub mod pooling;
pub mod sampler;
pub mod trainer;
pub mod vrsp;

pub use data::{Bag, BagDataset};
pub use error::{MidamError, Result};
pub use model::ModelParams;
pub use pooling::PoolKind;
pub use trainer::{Method, TrainConfig};
