//! Rényi-DP accounting for local-DP federated learning with fixed-size
//! minibatches, together with a seedable federated-learning simulator.
//!
//! * [`math`]: one-step divergence bound with a computable Taylor remainder.
//! * [`oracle`]: independent quadrature and Monte-Carlo checks of that bound.
//! * [`accountant`]: per-client composition, RDP→(ε, δ) conversion, noise
//!   calibration.
//! * [`sim`]: the federated mechanism itself (client sampling, clipped and
//!   noised updates, server averaging).

pub mod accountant;
pub mod error;
pub mod math;
pub mod oracle;
pub mod scalar;
pub mod sim;

pub use accountant::{
    calibrate_sigma, compose_client_rdp, rdp_to_dp, Accountant, AccountantError, ClientId, ParticipationLedger,
    PrivacyBudget, RdpCurve, StepParams, DEFAULT_ALPHAS, DEFAULT_DELTA,
};
pub use error::MathError;
pub use math::{BoundResult, MechanismParams, RenyiOrder, TaylorOrder};
pub use scalar::{Real, Wide};

/// Bound evaluated with the extended-range scalar; what the accountant uses.
pub type StepBound = BoundResult<Wide>;
/// Bound evaluated in plain double precision; overflows for small σ / large α.
pub type StepBoundF64 = BoundResult<f64>;
/// Simulator model in double precision.
pub type Model = sim::ModelVector<f64>;
