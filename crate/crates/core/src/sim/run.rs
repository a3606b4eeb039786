use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{Sampler, SimConfig};
use super::model::{accuracy, client_update, server_update, ClientState, Dataset, ModelVector};
use super::sampling::{sample_fixed_batch, sample_poisson_batch, select_clients, stream_rng, StreamTag};
use super::SimError;
use crate::accountant::{Accountant, ClientId, ParticipationLedger, StepParams};

/// One server round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    /// `|J_t|`, the clients that did not drop out.
    pub available: usize,
    /// `M_t`, ascending.
    pub selected: Vec<ClientId>,
    pub batch_sizes: Vec<usize>,
    /// Norm of each selected client's clipped batch average, before noise.
    pub update_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: ModelVector<f64>,
    pub rounds: Vec<RoundRecord>,
    pub ledger: ParticipationLedger,
}

/// Gaussian blobs: class centres at distance `separation` from the origin in
/// shared random directions, unit-variance noise around them, labels uniform.
pub fn synthetic_datasets(config: &SimConfig) -> Result<Vec<Dataset<f64>>, SimError> {
    let mut rng = stream_rng(config.seed, StreamTag::Centres, 0, 0);
    let centres: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| {
            let v: Vec<f64> = (0..config.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| config.separation * x / norm).collect()
        })
        .collect();
    (0..config.clients)
        .map(|j| {
            let mut rng = stream_rng(config.seed, StreamTag::Data, 0, j as u64);
            let mut features = Vec::with_capacity(config.points_per_client * config.d);
            let mut labels = Vec::with_capacity(config.points_per_client);
            for _ in 0..config.points_per_client {
                let y = rng.random_range(0..config.classes);
                for &c in &centres[y] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push(c + z);
                }
                labels.push(y);
            }
            Dataset::new(features, labels, config.d, config.classes)
        })
        .collect()
}

pub fn build_clients(config: &SimConfig, sigma: f64) -> Result<Vec<ClientState<f64>>, SimError> {
    synthetic_datasets(config)?
        .into_iter()
        .enumerate()
        .map(|(j, data)| ClientState::new(j as ClientId, data, config.batch_size, config.clip, sigma, config.step_size))
        .collect()
}

/// Clients present at round `t`: each drops out independently with
/// `dropout_prob`.
fn available_clients(config: &SimConfig, t: u64) -> Vec<ClientId> {
    let mut rng = stream_rng(config.seed, StreamTag::Availability, t, 0);
    (0..config.clients as ClientId)
        .filter(|_| !rng.random_bool(config.dropout_prob))
        .collect()
}

/// Trains with noise multiplier `sigma` and records every participation.
///
/// Each round selects `min(m_t, |J_t|)` of the available clients; a round in
/// which nobody is available leaves the model unchanged.
pub fn run_training_with_sigma(
    config: &SimConfig,
    sigma: f64,
    clients: &[ClientState<f64>],
    mut ledger: ParticipationLedger,
) -> Result<TrainingOutcome, SimError> {
    config.validate()?;
    if config.sampler != Sampler::Fixed {
        return Err(SimError::Config(
            "training requires the fixed-size sampler; the poisson sampler is only available for batch-size traces".into(),
        ));
    }
    if clients.len() != config.clients {
        return Err(SimError::Config(format!("expected {} clients, got {}", config.clients, clients.len())));
    }
    let dim = clients[0].dataset.model_dim();
    let mut model = ModelVector::zeros(dim);
    let mut rounds = Vec::with_capacity(config.rounds as usize);
    for c in clients {
        ledger.add_client(c.id);
    }
    for t in 0..config.rounds {
        let available = available_clients(config, t);
        let m_t = config.m_t.min(available.len());
        let mut rng = stream_rng(config.seed, StreamTag::Selection, t, 0);
        let selected = select_clients(&available, m_t, &mut rng)?;
        let updates = selected
            .par_iter()
            .map(|&id| {
                let client = &clients[id as usize];
                let mut rng = stream_rng(config.seed, StreamTag::Client, t, id);
                client_update(client, &model, &mut rng).map_err(|e| SimError::Round { round: t, client: id, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (&id, u) in selected.iter().zip(&updates) {
            let client = &clients[id as usize];
            let params = StepParams::new(client.sampling_ratio(), sigma, client.clip, u.batch_size as u64)?;
            ledger.record_participation(id, t, params)?;
        }
        if !updates.is_empty() {
            let vectors: Vec<Vec<f64>> = updates.iter().map(|u| u.update.clone()).collect();
            model = server_update(&model, &vectors, m_t).map_err(|e| SimError::Round {
                round: t,
                client: selected[0],
                source: Box::new(e),
            })?;
        }
        rounds.push(RoundRecord {
            t,
            available: available.len(),
            batch_sizes: updates.iter().map(|u| u.batch_size).collect(),
            update_norms: updates.iter().map(|u| u.clipped_norm).collect(),
            selected,
        });
    }
    Ok(TrainingOutcome { model, rounds, ledger })
}

/// [`run_training_with_sigma`] with σ resolved from the config.
pub fn run_training(config: &SimConfig, ledger: ParticipationLedger) -> Result<TrainingOutcome, SimError> {
    config.validate()?;
    let sigma = config.resolve_sigma(&Accountant::default())?;
    let clients = build_clients(config, sigma)?;
    run_training_with_sigma(config, sigma, &clients, ledger)
}

/// Realized per-round batch sizes of one client's sampler.
pub fn batch_size_trace(config: &SimConfig, sampler: Sampler, rounds: u64) -> Result<Vec<usize>, SimError> {
    (0..rounds)
        .map(|t| {
            let mut rng = stream_rng(config.seed, StreamTag::Trace, t, 0);
            let batch = match sampler {
                Sampler::Fixed => sample_fixed_batch(config.points_per_client, config.batch_size, &mut rng)?,
                Sampler::Poisson => sample_poisson_batch(config.points_per_client, config.sampling_ratio(), &mut rng)?,
            };
            Ok(batch.len())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientEpsilon {
    pub client: ClientId,
    pub participations: usize,
    pub epsilon: f64,
    pub alpha: f64,
}

/// ε at `delta` for every client in the ledger, ascending by id.
pub fn client_epsilons(accountant: &Accountant, ledger: &ParticipationLedger, delta: f64) -> Result<Vec<ClientEpsilon>, SimError> {
    ledger
        .clients()
        .map(|client| {
            let (budget, alpha) = accountant.client_epsilon(ledger, client, delta)?;
            Ok(ClientEpsilon {
                client,
                participations: ledger.participation_count(client),
                epsilon: budget.epsilon,
                alpha: alpha.value(),
            })
        })
        .collect()
}

/// Everything a `simulate` run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub sigma: f64,
    pub outcome: TrainingOutcome,
    pub epsilons: Vec<ClientEpsilon>,
    /// Training accuracy of the final model over all clients' data.
    pub accuracy: f64,
}

pub fn simulate(config: &SimConfig) -> Result<Simulation, SimError> {
    config.validate()?;
    let accountant = Accountant::default();
    let sigma = config.resolve_sigma(&accountant)?;
    let clients = build_clients(config, sigma)?;
    let outcome = run_training_with_sigma(config, sigma, &clients, ParticipationLedger::new())?;
    let epsilons = client_epsilons(&accountant, &outcome.ledger, config.delta)?;
    let datasets: Vec<&Dataset<f64>> = clients.iter().map(|c| &c.dataset).collect();
    let accuracy = accuracy(&outcome.model, &datasets);
    Ok(Simulation { sigma, outcome, epsilons, accuracy })
}

/// Twelve significant digits.
pub fn format_sig12(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

pub fn rounds_csv(rounds: &[RoundRecord]) -> String {
    let mut out = String::from("round,m_t,client_id,batch_size,update_norm\n");
    for r in rounds {
        for ((id, b), norm) in r.selected.iter().zip(&r.batch_sizes).zip(&r.update_norms) {
            let _ = writeln!(out, "{},{},{id},{b},{}", r.t, r.selected.len(), format_sig12(*norm));
        }
    }
    out
}

pub fn trace_csv(trace: &[usize]) -> String {
    let mut out = String::from("round,batch_size\n");
    for (t, b) in trace.iter().enumerate() {
        let _ = writeln!(out, "{t},{b}");
    }
    out
}

/// One weight per line, shortest round-trip representation.
pub fn model_text(model: &ModelVector<f64>) -> String {
    model.weights().iter().map(|w| format!("{w:e}\n")).collect()
}

pub fn epsilon_csv(epsilons: &[ClientEpsilon]) -> String {
    let mut out = String::from("client_id,participations,epsilon,alpha\n");
    for e in epsilons {
        let _ = writeln!(out, "{},{},{},{}", e.client, e.participations, format_sig12(e.epsilon), e.alpha);
    }
    out
}

pub const MODEL_FILE: &str = "model.txt";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const EPSILON_FILE: &str = "epsilon.csv";
pub const LEDGER_FILE: &str = "ledger.tsv";

fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    std::fs::write(path, contents).map_err(|source| SimError::Io { path: path.to_path_buf(), source })
}

/// Writes model, round records, per-client ε and the ledger into `dir`.
pub fn write_outputs(sim: &Simulation, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|source| SimError::Io { path: dir.to_path_buf(), source })?;
    write_file(&dir.join(MODEL_FILE), &model_text(&sim.outcome.model))?;
    write_file(&dir.join(ROUNDS_FILE), &rounds_csv(&sim.outcome.rounds))?;
    write_file(&dir.join(EPSILON_FILE), &epsilon_csv(&sim.epsilons))?;
    write_file(&dir.join(LEDGER_FILE), &sim.outcome.ledger.to_text())
}
