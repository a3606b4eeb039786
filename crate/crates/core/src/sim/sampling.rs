//! Client selection and minibatch samplers.

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::SimError;
use crate::accountant::ClientId;

/// Uniformly random subset of `m_t` ids from `available`, ascending.
pub fn select_clients<R: Rng + ?Sized>(available: &[ClientId], m_t: usize, rng: &mut R) -> Result<Vec<ClientId>, SimError> {
    if m_t > available.len() {
        return Err(SimError::Selection { requested: m_t, available: available.len() });
    }
    let mut picked: Vec<ClientId> = index::sample(rng, available.len(), m_t).into_iter().map(|i| available[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Uniformly random subset of exactly `batch_size` indices, ascending.
pub fn sample_fixed_batch<R: Rng + ?Sized>(dataset_size: usize, batch_size: usize, rng: &mut R) -> Result<Vec<usize>, SimError> {
    if batch_size == 0 || batch_size > dataset_size {
        return Err(SimError::Batch { batch_size, dataset_size });
    }
    let mut picked = index::sample(rng, dataset_size, batch_size).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Each index kept independently with probability `rate`.
pub fn sample_poisson_batch<R: Rng + ?Sized>(dataset_size: usize, rate: f64, rng: &mut R) -> Result<Vec<usize>, SimError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(SimError::Config(format!("poisson rate must lie in (0, 1], got {rate}")));
    }
    Ok((0..dataset_size).filter(|_| rng.random_bool(rate)).collect())
}

/// Independent random streams derived from one root seed.
///
/// Stream `(tag, round, client)` is ChaCha12 keyed by the root seed with the
/// stream id set to a SplitMix64 hash of the triple, so every draw depends
/// only on its own coordinates, never on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Data = 1,
    Centres = 2,
    Availability = 3,
    Selection = 4,
    Client = 5,
    Trace = 6,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, tag: StreamTag, round: u64, client: u64) -> ChaCha12Rng {
    let id = splitmix64(splitmix64(splitmix64(tag as u64) ^ round) ^ client);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
