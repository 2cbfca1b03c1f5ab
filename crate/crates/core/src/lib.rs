//! Deterministic federated-learning simulator.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] holds the classifier (logistic regression or ReLU MLP) with
//!   manual backpropagation and plain SGD.
//! * [`data`] loads IDX files or synthetic blobs and partitions samples
//!   across clients.
//! * [`compression`] implements the update encodings and their exact bit
//!   accounting.
//! * [`strategies`] realises each federated algorithm behind a common
//!   broadcast / client-update / aggregate contract.
//! * [`engine`] drives the round loop and keeps the communication ledger.
//! * [`gamma`] estimates how often a mini-batch gradient sign agrees with
//!   the full-data gradient sign.

pub mod compression;
pub mod data;
pub mod engine;
pub mod error;
pub mod gamma;
pub mod nn;
pub mod rng;
pub mod strategies;

pub use compression::{Encoding, MaskSet, Residual, Update};
pub use data::{Dataset, PartitionMode, PartitionPlan, SharedPoolConfig};
pub use engine::{FederatedConfig, PartitionSpec, RoundRecord, RunResult};
pub use error::{Error, Result};
pub use nn::{Batch, GradVector, ModelArch, ModelParams};
pub use strategies::{StrategyConfig, StrategyKind};
