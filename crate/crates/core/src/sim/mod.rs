//! Seedable simulation of local-DP federated training with fixed-size
//! minibatches.
//!
//! Every random draw comes from a stream keyed by `(seed, purpose, round,
//! client)`, and client updates are aggregated in ascending id order, so
//! results do not depend on the number of worker threads.

use std::path::PathBuf;

use thiserror::Error;

use crate::accountant::{AccountantError, ClientId};

mod config;
mod model;
mod run;
mod sampling;

pub use config::{Sampler, SimConfig};
pub use model::{
    accuracy, client_update, clip_gradient, clipped_batch_mean, descent_direction, l2_norm, predict, server_update,
    ClientState, ClientUpdate, Dataset, ModelVector,
};
pub use run::{
    batch_size_trace, build_clients, client_epsilons, epsilon_csv, format_sig12, model_text, rounds_csv, run_training,
    run_training_with_sigma, simulate, synthetic_datasets, trace_csv, write_outputs, ClientEpsilon, RoundRecord,
    Simulation, TrainingOutcome, EPSILON_FILE, LEDGER_FILE, MODEL_FILE, ROUNDS_FILE,
};
pub use sampling::{sample_fixed_batch, sample_poisson_batch, select_clients, stream_rng, StreamTag};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot select {requested} clients from {available} available")]
    Selection { requested: usize, available: usize },
    #[error("batch size {batch_size} must lie in 1..={dataset_size}")]
    Batch { batch_size: usize, dataset_size: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("expected {expected} updates, found {found}")]
    UpdateCount { expected: usize, found: usize },
    #[error("model has non-finite entries")]
    NonFinite,
    #[error("round {round}, client {client}: {source}")]
    Round {
        round: u64,
        client: ClientId,
        source: Box<SimError>,
    },
    #[error(transparent)]
    Accountant(#[from] AccountantError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
