//! Per-client privacy accounting across asynchronous participation.
//!
//! Each client's reported updates form their own sequence of subsampled
//! Gaussian queries, so the client's Rényi divergence is the sum of the
//! one-step bounds over the rounds the client actually took part in,
//! independent of what the server or the other clients did in between.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::error::MathError;
use crate::math::{renyi_step_bound_with, MomentTable, RenyiOrder, TaylorOrder};
use crate::scalar::Wide;

pub type ClientId = u64;

/// Default Rényi orders.
pub const DEFAULT_ALPHAS: [f64; 20] = [
    1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, 128.0, 256.0, 512.0, 1025.0,
];

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountantError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("client {client}: timestep {t} is not after the last recorded timestep {last}")]
    OutOfOrder { client: ClientId, last: u64, t: u64 },
    #[error("client {0} is not in the ledger")]
    UnknownClient(ClientId),
    #[error("client {client}, step {index}: {source}")]
    Step {
        client: ClientId,
        index: usize,
        source: MathError,
    },
    #[error("target epsilon unreachable: epsilon = {epsilon} even at sigma = {sigma}")]
    BracketExhausted { sigma: f64, epsilon: f64 },
    #[error("curves are defined over different orders")]
    MismatchedOrders,
    #[error("empty RDP curve")]
    EmptyCurve,
    #[error("ledger line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> AccountantError {
    AccountantError::InvalidParameter { name, value, reason }
}

/// Privacy-relevant parameters of one client query.
///
/// `q = |B|/|D|` lies in `(0, 1]`; at `q = 1` the query is the plain Gaussian
/// mechanism. `sigma = 0` is accepted for noiseless runs and carries an
/// infinite divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub q: f64,
    pub sigma: f64,
    pub clip: f64,
    pub batch_size: u64,
}

impl StepParams {
    pub fn new(q: f64, sigma: f64, clip: f64, batch_size: u64) -> Result<Self, AccountantError> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(invalid("q", q, "sampling ratio must lie in (0, 1]"));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(invalid("sigma", sigma, "noise multiplier must be finite and >= 0"));
        }
        if !clip.is_finite() || clip <= 0.0 {
            return Err(invalid("clip", clip, "clipping norm must be finite and > 0"));
        }
        if batch_size == 0 {
            return Err(invalid("batch_size", 0.0, "batch size must be >= 1"));
        }
        Ok(StepParams { q, sigma, clip, batch_size })
    }

    /// Parameters for a fixed-size batch of `batch_size` out of `dataset_size`.
    pub fn from_batch(batch_size: u64, dataset_size: u64, sigma: f64, clip: f64) -> Result<Self, AccountantError> {
        if batch_size == 0 || batch_size > dataset_size {
            return Err(invalid("batch_size", batch_size as f64, "batch size must be in 1..=dataset size"));
        }
        Self::new(batch_size as f64 / dataset_size as f64, sigma, clip, batch_size)
    }
}

/// An (ε, δ) guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, AccountantError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(invalid("epsilon", epsilon, "epsilon must be >= 0"));
        }
        check_delta(delta)?;
        Ok(PrivacyBudget { epsilon, delta })
    }
}

fn check_delta(delta: f64) -> Result<(), AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", delta, "delta must lie in (0, 1)"));
    }
    Ok(())
}

/// Accumulated divergence bound per Rényi order, orders strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    orders: Vec<RenyiOrder>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn zeros(orders: &[RenyiOrder]) -> Result<Self, AccountantError> {
        Self::from_points(orders.iter().map(|&a| (a, 0.0)).collect())
    }

    pub fn from_points(points: Vec<(RenyiOrder, f64)>) -> Result<Self, AccountantError> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("alpha", f64::NAN, "orders must be strictly increasing"));
        }
        if let Some(&(_, v)) = points.iter().find(|(_, v)| v.is_nan() || *v < 0.0) {
            return Err(invalid("rdp", v, "divergence values must be >= 0"));
        }
        let (orders, values) = points.into_iter().unzip();
        Ok(RdpCurve { orders, values })
    }

    pub fn orders(&self) -> &[RenyiOrder] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> impl Iterator<Item = (RenyiOrder, f64)> + '_ {
        self.orders.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, alpha: RenyiOrder) -> Option<f64> {
        self.orders.iter().position(|&a| a == alpha).map(|i| self.values[i])
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Pointwise sum.
    pub fn add(&self, other: &RdpCurve) -> Result<RdpCurve, AccountantError> {
        if self.orders != other.orders {
            return Err(AccountantError::MismatchedOrders);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(RdpCurve { orders: self.orders.clone(), values })
    }

    /// The curve of `n` identical compositions.
    pub fn scaled(&self, n: u64) -> RdpCurve {
        RdpCurve {
            orders: self.orders.clone(),
            values: self.values.iter().map(|v| v * n as f64).collect(),
        }
    }
}

/// One recorded participation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Participation {
    /// Server timestep `t` at which the client's update was used.
    pub t: u64,
    pub params: StepParams,
}

/// Per-client participation history.
///
/// `N_{j,t}` is [`ParticipationLedger::participations`], `T_{j,n}` is
/// [`ParticipationLedger::participation_time`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticipationLedger {
    clients: BTreeMap<ClientId, Vec<Participation>>,
}

impl ParticipationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a client with an empty history (no-op if already present).
    pub fn add_client(&mut self, client: ClientId) {
        self.clients.entry(client).or_default();
    }

    pub fn record_participation(&mut self, client: ClientId, t: u64, params: StepParams) -> Result<(), AccountantError> {
        let history = self.clients.entry(client).or_default();
        if let Some(last) = history.last() {
            if t <= last.t {
                return Err(AccountantError::OutOfOrder { client, last: last.t, t });
            }
        }
        history.push(Participation { t, params });
        Ok(())
    }

    pub fn contains(&self, client: ClientId) -> bool {
        self.clients.contains_key(&client)
    }

    pub fn clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.clients.keys().copied()
    }

    pub fn history(&self, client: ClientId) -> Option<&[Participation]> {
        self.clients.get(&client).map(Vec::as_slice)
    }

    /// `N_{j,t}`: participations of `client` at timesteps `<= t`.
    pub fn participations(&self, client: ClientId, t: u64) -> usize {
        self.clients
            .get(&client)
            .map_or(0, |h| h.partition_point(|p| p.t <= t))
    }

    /// Total participations of `client`.
    pub fn participation_count(&self, client: ClientId) -> usize {
        self.clients.get(&client).map_or(0, Vec::len)
    }

    /// `T_{j,n}`: timestep of the `n`-th participation (1-based).
    pub fn participation_time(&self, client: ClientId, n: usize) -> Option<u64> {
        let h = self.clients.get(&client)?;
        n.checked_sub(1).and_then(|i| h.get(i)).map(|p| p.t)
    }

    /// Tab-separated export, one record per line, sorted by `(client_id, t)`:
    /// `client_id  t  q  sigma  clip  batch_size`. Reals carry 17 significant
    /// digits so that they parse back bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (client, history) in &self.clients {
            for p in history {
                let s = &p.params;
                let _ = writeln!(
                    out,
                    "{client}\t{}\t{:.16e}\t{:.16e}\t{:.16e}\t{}",
                    p.t, s.q, s.sigma, s.clip, s.batch_size
                );
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AccountantError> {
        let mut ledger = ParticipationLedger::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 6 {
                return Err(AccountantError::Parse {
                    line: line_no,
                    reason: format!("expected 6 tab-separated fields, found {}", fields.len()),
                });
            }
            let parse_err = |what: &str, raw: &str| AccountantError::Parse {
                line: line_no,
                reason: format!("bad {what}: {raw:?}"),
            };
            let client: ClientId = fields[0].parse().map_err(|_| parse_err("client_id", fields[0]))?;
            let t: u64 = fields[1].parse().map_err(|_| parse_err("t", fields[1]))?;
            let q: f64 = fields[2].parse().map_err(|_| parse_err("q", fields[2]))?;
            let sigma: f64 = fields[3].parse().map_err(|_| parse_err("sigma", fields[3]))?;
            let clip: f64 = fields[4].parse().map_err(|_| parse_err("clip", fields[4]))?;
            let batch: u64 = fields[5].parse().map_err(|_| parse_err("batch_size", fields[5]))?;
            let params = StepParams::new(q, sigma, clip, batch).map_err(|e| AccountantError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
            ledger.record_participation(client, t, params).map_err(|e| AccountantError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        }
        Ok(ledger)
    }
}

type BoundKey = (u64, u64, u64);

/// Composes per-client curves over a fixed set of Rényi orders.
///
/// One-step bounds are memoized on `(α, q, σ)`, and moment tables on σ; both
/// caches are shared across threads.
#[derive(Debug)]
pub struct Accountant {
    alphas: Vec<RenyiOrder>,
    bounds: Mutex<HashMap<BoundKey, f64>>,
    tables: Mutex<HashMap<u64, Arc<MomentTable<Wide>>>>,
}

impl Default for Accountant {
    fn default() -> Self {
        let alphas = DEFAULT_ALPHAS.iter().map(|&a| RenyiOrder::new(a).expect("default grid")).collect();
        Accountant::with_orders(alphas).expect("default grid is sorted")
    }
}

impl Accountant {
    pub fn with_orders(mut alphas: Vec<RenyiOrder>) -> Result<Self, AccountantError> {
        if alphas.is_empty() {
            return Err(AccountantError::EmptyCurve);
        }
        alphas.sort_by(|a, b| a.value().total_cmp(&b.value()));
        alphas.dedup();
        Ok(Accountant {
            alphas,
            bounds: Mutex::new(HashMap::new()),
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn orders(&self) -> &[RenyiOrder] {
        &self.alphas
    }

    fn table(&self, sigma: f64, need: u32) -> Result<Arc<MomentTable<Wide>>, MathError> {
        let key = sigma.to_bits();
        if let Some(t) = self.tables.lock().expect("table cache").get(&key) {
            if t.max_order().is_some_and(|m| m >= need) {
                return Ok(Arc::clone(t));
            }
        }
        let top = self.alphas.iter().map(|a| a.ceil() + 5).max().unwrap_or(0).max(need);
        let table = Arc::new(MomentTable::<Wide>::new(sigma, top)?);
        self.tables.lock().expect("table cache").insert(key, Arc::clone(&table));
        Ok(table)
    }

    /// One-step divergence bound for the query `(q, σ)` at order α.
    pub fn step_bound(&self, alpha: RenyiOrder, q: f64, sigma: f64) -> Result<f64, MathError> {
        if sigma == 0.0 {
            return Ok(f64::INFINITY);
        }
        if q == 1.0 {
            // plain Gaussian mechanism, sensitivity 1, variance σ²/4
            return Ok(2.0 * alpha.value() / (sigma * sigma));
        }
        let key = (alpha.value().to_bits(), q.to_bits(), sigma.to_bits());
        if let Some(&b) = self.bounds.lock().expect("bound cache").get(&key) {
            return Ok(b);
        }
        let table = self.table(sigma, alpha.ceil() + 5)?;
        let bound = renyi_step_bound_with(&table, alpha, q, TaylorOrder::Adaptive)?.bound;
        self.bounds.lock().expect("bound cache").insert(key, bound);
        Ok(bound)
    }

    /// Curve of a single query.
    pub fn step_curve(&self, q: f64, sigma: f64) -> Result<RdpCurve, MathError> {
        let values = self
            .alphas
            .iter()
            .map(|&a| self.step_bound(a, q, sigma))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RdpCurve { orders: self.alphas.clone(), values })
    }

    /// Sum of one-step bounds over every recorded step of `client`.
    pub fn compose_client_rdp(&self, ledger: &ParticipationLedger, client: ClientId) -> Result<RdpCurve, AccountantError> {
        let history = ledger.history(client).ok_or(AccountantError::UnknownClient(client))?;
        let mut sums = vec![(0.0f64, 0.0f64); self.alphas.len()];
        for (index, p) in history.iter().enumerate() {
            let step = self
                .step_curve(p.params.q, p.params.sigma)
                .map_err(|source| AccountantError::Step { client, index, source })?;
            for ((sum, comp), &x) in sums.iter_mut().zip(&step.values) {
                let t = *sum + x;
                if sum.abs() >= x.abs() {
                    *comp += (*sum - t) + x;
                } else {
                    *comp += (x - t) + *sum;
                }
                *sum = t;
            }
        }
        let values = sums
            .into_iter()
            .map(|(s, c)| if s.is_finite() { s + c } else { s })
            .collect();
        Ok(RdpCurve { orders: self.alphas.clone(), values })
    }

    /// ε for `client` at `delta`, with the optimizing order.
    pub fn client_epsilon(
        &self,
        ledger: &ParticipationLedger,
        client: ClientId,
        delta: f64,
    ) -> Result<(PrivacyBudget, RenyiOrder), AccountantError> {
        rdp_to_dp(&self.compose_client_rdp(ledger, client)?, delta)
    }

    /// ε after `steps` identical queries `(q, σ)`.
    pub fn epsilon_for(&self, q: f64, sigma: f64, steps: u64, delta: f64) -> Result<f64, AccountantError> {
        let curve = self.step_curve(q, sigma)?.scaled(steps);
        Ok(rdp_to_dp(&curve, delta)?.0.epsilon)
    }

    /// Smallest σ (relative tolerance 1e−4) whose `steps`-fold composition
    /// meets `target`, by bisection over `[0.3, 64]`, doubling the upper end
    /// while the target is still missed there.
    pub fn calibrate_sigma(&self, target: PrivacyBudget, q: f64, steps: u64) -> Result<f64, AccountantError> {
        const LOWER: f64 = 0.3;
        const UPPER: f64 = 64.0;
        const CEILING: f64 = 1.0e6;
        const REL_TOL: f64 = 1e-4;
        if target.epsilon.is_nan() || target.epsilon <= 0.0 {
            return Err(invalid("epsilon", target.epsilon, "target epsilon must be > 0"));
        }
        check_delta(target.delta)?;
        if !(q > 0.0 && q <= 1.0) {
            return Err(invalid("q", q, "sampling ratio must lie in (0, 1]"));
        }
        if steps == 0 {
            return Err(invalid("steps", 0.0, "steps must be >= 1"));
        }
        let eps = |sigma: f64| self.epsilon_for(q, sigma, steps, target.delta);
        let mut lo = LOWER;
        if eps(lo)? <= target.epsilon {
            return Ok(lo);
        }
        let mut hi = UPPER;
        loop {
            let at_hi = eps(hi)?;
            if at_hi <= target.epsilon {
                break;
            }
            if hi >= CEILING {
                return Err(AccountantError::BracketExhausted { sigma: hi, epsilon: at_hi });
            }
            lo = hi;
            hi = (hi * 2.0).min(CEILING);
        }
        while hi / lo - 1.0 > REL_TOL {
            let mid = (lo * hi).sqrt();
            if eps(mid)? <= target.epsilon {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Curve for `client`: the sum over its recorded steps of the one-step bound.
pub fn compose_client_rdp(
    ledger: &ParticipationLedger,
    client: ClientId,
    alphas: &[RenyiOrder],
) -> Result<RdpCurve, AccountantError> {
    Accountant::with_orders(alphas.to_vec())?.compose_client_rdp(ledger, client)
}

/// `ε = min_α [RDP(α) + ln(1/δ)/(α−1)]`; ties go to the smallest α.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<(PrivacyBudget, RenyiOrder), AccountantError> {
    check_delta(delta)?;
    let log_inv_delta = -delta.ln();
    let mut best: Option<(f64, RenyiOrder)> = None;
    for (alpha, rdp) in curve.points() {
        let eps = rdp + log_inv_delta / (alpha.value() - 1.0);
        if best.is_none_or(|(b, _)| eps < b) {
            best = Some((eps, alpha));
        }
    }
    let (epsilon, alpha) = best.ok_or(AccountantError::EmptyCurve)?;
    Ok((PrivacyBudget { epsilon, delta }, alpha))
}

/// Noise multiplier meeting `target` after `steps` identical queries at
/// sampling ratio `q` (see [`Accountant::calibrate_sigma`]).
pub fn calibrate_sigma(target: PrivacyBudget, q: f64, steps: u64, alphas: &[RenyiOrder]) -> Result<f64, AccountantError> {
    Accountant::with_orders(alphas.to_vec())?.calibrate_sigma(target, q, steps)
}

/// Bounds under both readings of `q` for an add/remove neighbour: the
/// reported dataset size and the size after adding one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjacencyCheck {
    pub q_reported: f64,
    pub q_neighbour: f64,
    pub bound_reported: f64,
    pub bound_neighbour: f64,
    /// The two bounds differ at four significant figures.
    pub differs: bool,
}

pub fn adjacency_check(
    accountant: &Accountant,
    alpha: RenyiOrder,
    batch_size: u64,
    dataset_size: u64,
    sigma: f64,
) -> Result<AdjacencyCheck, AccountantError> {
    let q_reported = StepParams::from_batch(batch_size, dataset_size, sigma, 1.0)?.q;
    let q_neighbour = batch_size as f64 / (dataset_size + 1) as f64;
    let bound_reported = accountant.step_bound(alpha, q_reported, sigma)?;
    let bound_neighbour = accountant.step_bound(alpha, q_neighbour, sigma)?;
    let four = |x: f64| format!("{x:.3e}");
    Ok(AdjacencyCheck {
        q_reported,
        q_neighbour,
        bound_reported,
        bound_neighbour,
        differs: four(bound_reported) != four(bound_neighbour),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(q: f64, sigma: f64) -> StepParams {
        StepParams::new(q, sigma, 1.0, 16).unwrap()
    }

    fn orders(xs: &[f64]) -> Vec<RenyiOrder> {
        xs.iter().map(|&a| RenyiOrder::new(a).unwrap()).collect()
    }

    #[test]
    fn single_record_bookkeeping() {
        let mut ledger = ParticipationLedger::new();
        ledger.record_participation(7, 3, params(0.1, 1.0)).unwrap();
        assert_eq!(ledger.participations(7, 3), 1);
        assert_eq!(ledger.participations(7, 2), 0);
        assert_eq!(ledger.participation_time(7, 1), Some(3));
        assert_eq!(ledger.participation_time(7, 0), None);
    }

    #[test]
    fn counting_definition() {
        let mut ledger = ParticipationLedger::new();
        for t in [1, 4, 9] {
            ledger.record_participation(2, t, params(0.1, 1.0)).unwrap();
        }
        assert_eq!(ledger.participations(2, 9), 3);
        assert_eq!(ledger.participation_time(2, 2), Some(4));
        for n in 1..=3 {
            let t = ledger.participation_time(2, n).unwrap();
            assert_eq!(ledger.participations(2, t), n);
        }
    }

    #[test]
    fn out_of_order_rejected() {
        let mut ledger = ParticipationLedger::new();
        ledger.record_participation(1, 5, params(0.1, 1.0)).unwrap();
        let err = ledger.record_participation(1, 5, params(0.1, 1.0)).unwrap_err();
        assert_eq!(err, AccountantError::OutOfOrder { client: 1, last: 5, t: 5 });
        assert!(ledger.record_participation(1, 2, params(0.1, 1.0)).is_err());
        // other clients are unaffected
        ledger.record_participation(2, 0, params(0.1, 1.0)).unwrap();
    }

    #[test]
    fn empty_history_composes_to_zero() {
        let mut ledger = ParticipationLedger::new();
        ledger.add_client(3);
        let curve = compose_client_rdp(&ledger, 3, &orders(&[2.0, 4.0])).unwrap();
        assert_eq!(curve.values(), &[0.0, 0.0]);
        assert!(matches!(
            compose_client_rdp(&ledger, 4, &orders(&[2.0])),
            Err(AccountantError::UnknownClient(4))
        ));
    }

    #[test]
    fn heterogeneous_steps_sum() {
        let acc = Accountant::with_orders(orders(&[2.0, 8.0, 32.0])).unwrap();
        let mut ledger = ParticipationLedger::new();
        ledger.record_participation(0, 0, params(0.01, 2.0)).unwrap();
        ledger.record_participation(0, 1, params(0.05, 4.0)).unwrap();
        let curve = acc.compose_client_rdp(&ledger, 0).unwrap();
        let fresh = Accountant::with_orders(orders(&[2.0, 8.0, 32.0])).unwrap();
        let a = fresh.step_curve(0.01, 2.0).unwrap();
        let b = fresh.step_curve(0.05, 4.0).unwrap();
        for i in 0..3 {
            assert_eq!(curve.values()[i], a.values()[i] + b.values()[i]);
        }
    }

    #[test]
    fn conversion_examples() {
        let zero = RdpCurve::zeros(&orders(&DEFAULT_ALPHAS)).unwrap();
        let (budget, alpha) = rdp_to_dp(&zero, 1e-5).unwrap();
        assert_relative_eq!(budget.epsilon, (1e5f64).ln() / 1024.0, max_relative = 1e-15);
        assert_eq!(alpha.value(), 1025.0);

        let single = RdpCurve::from_points(vec![(RenyiOrder::new(2.0).unwrap(), 0.5)]).unwrap();
        let (budget, _) = rdp_to_dp(&single, 0.01).unwrap();
        assert_relative_eq!(budget.epsilon, 0.5 + 100f64.ln(), max_relative = 1e-15);

        assert!(rdp_to_dp(&single, 0.0).is_err());
        assert!(rdp_to_dp(&RdpCurve::zeros(&[]).unwrap(), 0.1).is_err());
    }

    #[test]
    fn conversion_tie_breaks_to_smallest_order() {
        // ε(2) = 1 + ln(1/δ), ε(3) = 1 + ln(1/δ)/2 + ... pick values that tie exactly
        let ld = -(0.5f64).ln();
        let curve = RdpCurve::from_points(vec![
            (RenyiOrder::new(2.0).unwrap(), ld),
            (RenyiOrder::new(3.0).unwrap(), 1.5 * ld),
        ])
        .unwrap();
        let (_, alpha) = rdp_to_dp(&curve, 0.5).unwrap();
        assert_eq!(alpha.value(), 2.0);
    }

    #[test]
    fn ledger_text_round_trip_is_exact() {
        let mut ledger = ParticipationLedger::new();
        ledger.record_participation(5, 2, StepParams::new(128.0 / 30000.0, 0.7312345678901234, 1.5, 128).unwrap()).unwrap();
        ledger.record_participation(1, 0, StepParams::new(0.1 + 0.2, std::f64::consts::PI, 0.1, 3).unwrap()).unwrap();
        ledger.record_participation(1, 7, StepParams::new(1e-300, 0.0, 1e300, 1).unwrap()).unwrap();
        let text = ledger.to_text();
        assert!(text.starts_with("1\t0\t"));
        let parsed = ParticipationLedger::from_text(&text).unwrap();
        assert_eq!(parsed, ledger);
    }

    #[test]
    fn ledger_parse_errors_carry_line() {
        let err = ParticipationLedger::from_text("1\t0\t0.1\t1\t1\t1\n2\t0\t0.1\t1\n").unwrap_err();
        assert!(matches!(err, AccountantError::Parse { line: 2, .. }));
        let err = ParticipationLedger::from_text("1\t3\t0.1\t1\t1\t1\n1\t3\t0.1\t1\t1\t1\n").unwrap_err();
        assert!(matches!(err, AccountantError::Parse { line: 2, .. }));
        let err = ParticipationLedger::from_text("1\t3\t1.5\t1\t1\t1\n").unwrap_err();
        assert!(matches!(err, AccountantError::Parse { line: 1, .. }));
    }

    #[test]
    fn noiseless_and_full_batch_steps() {
        let acc = Accountant::with_orders(orders(&[2.0, 3.0])).unwrap();
        assert_eq!(acc.step_bound(RenyiOrder::new(2.0).unwrap(), 0.1, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(acc.step_bound(RenyiOrder::new(3.0).unwrap(), 1.0, 2.0).unwrap(), 1.5);
        let curve = acc.step_curve(0.1, 0.0).unwrap();
        let (budget, _) = rdp_to_dp(&curve, 1e-5).unwrap();
        assert_eq!(budget.epsilon, f64::INFINITY);
    }

    #[test]
    fn calibration_edges() {
        let alphas = orders(&DEFAULT_ALPHAS);
        let sigma = calibrate_sigma(PrivacyBudget::new(1e6, 1e-5).unwrap(), 0.01, 1, &alphas).unwrap();
        assert_eq!(sigma, 0.3);
        assert!(calibrate_sigma(PrivacyBudget::new(1.0, 1e-5).unwrap(), 0.01, 0, &alphas).is_err());
        assert!(calibrate_sigma(PrivacyBudget::new(0.0, 1e-5).unwrap(), 0.01, 1, &alphas).is_err());
    }

    #[test]
    fn adjacency_readings_agree_for_large_datasets() {
        let acc = Accountant::default();
        let alpha = RenyiOrder::new(8.0).unwrap();
        let big = adjacency_check(&acc, alpha, 128, 30_000, 1.0).unwrap();
        assert!(big.bound_neighbour < big.bound_reported);
        let small = adjacency_check(&acc, alpha, 5, 10, 1.0).unwrap();
        assert!(small.differs);
    }
}
