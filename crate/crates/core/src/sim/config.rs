use std::path::Path;

use serde::Deserialize;

use super::SimError;
use crate::accountant::{Accountant, PrivacyBudget, DEFAULT_DELTA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    #[default]
    Fixed,
    Poisson,
}

/// Simulation settings, read from TOML.
///
/// Exactly one of `sigma` and `target_epsilon` must be set; with a target,
/// σ is calibrated so that a client taking part in every round meets
/// `(target_epsilon, delta)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub rounds: u64,
    pub clients: usize,
    pub m_t: usize,
    pub d: usize,
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    pub points_per_client: usize,
    pub batch_size: usize,
    #[serde(default = "defaults::clip")]
    pub clip: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: Sampler,
    /// Per-round probability that a client is unavailable.
    #[serde(default)]
    pub dropout_prob: f64,
    /// Learning rate folded into the per-sample update.
    #[serde(default = "defaults::step_size")]
    pub step_size: f64,
    /// Distance of each class centre from the origin.
    #[serde(default = "defaults::separation")]
    pub separation: f64,
}

mod defaults {
    pub fn classes() -> usize {
        2
    }
    pub fn clip() -> f64 {
        1.0
    }
    pub fn delta() -> f64 {
        super::DEFAULT_DELTA
    }
    pub fn step_size() -> f64 {
        0.1
    }
    pub fn separation() -> f64 {
        5.0
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rounds: 100,
            clients: 10,
            m_t: 10,
            d: 20,
            classes: defaults::classes(),
            points_per_client: 2000,
            batch_size: 64,
            clip: defaults::clip(),
            sigma: Some(1.0),
            target_epsilon: None,
            delta: defaults::delta(),
            seed: 0,
            sampler: Sampler::Fixed,
            dropout_prob: 0.0,
            step_size: defaults::step_size(),
            separation: defaults::separation(),
        }
    }
}

fn bad(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let config: SimConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config(msg) => bad(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.rounds == 0 {
            return Err(bad("rounds must be >= 1"));
        }
        if self.clients == 0 || self.m_t > self.clients {
            return Err(bad(format!("need 1 <= clients and m_t <= clients (clients = {}, m_t = {})", self.clients, self.m_t)));
        }
        if self.d == 0 || self.classes < 2 {
            return Err(bad("need d >= 1 and classes >= 2"));
        }
        if self.batch_size == 0 || self.batch_size > self.points_per_client {
            return Err(bad(format!(
                "batch_size must lie in 1..=points_per_client (batch_size = {}, points_per_client = {})",
                self.batch_size, self.points_per_client
            )));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(bad("clip must be finite and > 0"));
        }
        match (self.sigma, self.target_epsilon) {
            (Some(s), None) if s >= 0.0 && s.is_finite() => {}
            (Some(_), None) => return Err(bad("sigma must be finite and >= 0")),
            (None, Some(e)) if e > 0.0 => {}
            (None, Some(_)) => return Err(bad("target_epsilon must be > 0")),
            _ => return Err(bad("set exactly one of sigma and target_epsilon")),
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(bad("delta must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(bad("dropout_prob must lie in [0, 1]"));
        }
        if !self.step_size.is_finite() || !self.separation.is_finite() {
            return Err(bad("step_size and separation must be finite"));
        }
        Ok(())
    }

    /// `|B| / |D|`, identical for every client.
    pub fn sampling_ratio(&self) -> f64 {
        self.batch_size as f64 / self.points_per_client as f64
    }

    /// The configured σ, or the one calibrated for the target budget over
    /// `rounds` participations.
    pub fn resolve_sigma(&self, accountant: &Accountant) -> Result<f64, SimError> {
        if let Some(sigma) = self.sigma {
            return Ok(sigma);
        }
        let epsilon = self.target_epsilon.ok_or_else(|| bad("set exactly one of sigma and target_epsilon"))?;
        let target = PrivacyBudget::new(epsilon, self.delta)?;
        Ok(accountant.calibrate_sigma(target, self.sampling_ratio(), self.rounds)?)
    }
}
